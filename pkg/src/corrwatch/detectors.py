"""One-sided CUSUM detection over summary-value streams.

The engine folds per-batch increments through the reflected recursion
W_m = max(0, W_{m-1} + inc_m) and alarms the first time W_m >= A.  The
increment rule travels inside the spec as a plain callable, so new rules
plug in without touching the engine.  Crossings use ">=" uniformly; ties
have probability zero for continuous scores.

Three rules are provided: a robust likelihood-ratio rule pinned at the
lower correlation level jbar, a non-robust one pinned at an assumed
post-change level j1, and a mean-shift rule on the raw summary values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from .density import MaxCorrModel, incomplete_beta_tail


@dataclass(frozen=True)
class ParametricIncrement:
    """log-likelihood-ratio increment log f(v; j_alt) - log f(v; 1)."""

    j_alt: float
    half_c: float
    n: int

    def __call__(self, v):
        arr = np.asarray(v, dtype=float)
        return np.log(self.j_alt) - self.half_c * (self.j_alt - 1.0) * incomplete_beta_tail(arr, self.n)


@dataclass(frozen=True)
class MeanShiftIncrement:
    """Non-parametric increment v - (m0 + m1)/2 around the two regime means."""

    m0: float
    m1: float

    def __call__(self, v):
        return np.asarray(v, dtype=float) - 0.5 * (self.m0 + self.m1)


@dataclass(frozen=True)
class DetectorSpec:
    """An increment rule plus an alarm threshold."""

    name: str
    threshold: float
    increment_fn: Callable

    def __post_init__(self):
        if not self.threshold > 0.0:
            raise ValueError(f"threshold must be positive, got {self.threshold}")


def robust_spec(model: MaxCorrModel, jbar: float, threshold: float) -> DetectorSpec:
    """Robust CUSUM rule: likelihood ratio at the known lower level jbar > 1."""
    if not jbar > 1.0:
        raise ValueError(f"jbar must exceed 1, got {jbar}")
    fn = ParametricIncrement(j_alt=float(jbar), half_c=model.half_c, n=model.n)
    return DetectorSpec(name=f"robust(jbar={jbar:g})", threshold=float(threshold), increment_fn=fn)


def nonrobust_spec(model: MaxCorrModel, j1: float, threshold: float) -> DetectorSpec:
    """Non-robust CUSUM rule: likelihood ratio at an assumed post-change level j1."""
    if not j1 > 1.0:
        raise ValueError(f"j1 must exceed 1, got {j1}")
    fn = ParametricIncrement(j_alt=float(j1), half_c=model.half_c, n=model.n)
    return DetectorSpec(name=f"nonrobust(j1={j1:g})", threshold=float(threshold), increment_fn=fn)


def nonparametric_spec(m0: float, m1: float, threshold: float) -> DetectorSpec:
    """Mean-shift CUSUM on raw summary values, m1 > m0."""
    if not m1 > m0:
        raise ValueError(f"m1 must exceed m0, got m0={m0}, m1={m1}")
    fn = MeanShiftIncrement(m0=float(m0), m1=float(m1))
    return DetectorSpec(name=f"nonparametric(m0={m0:g},m1={m1:g})", threshold=float(threshold), increment_fn=fn)


def with_threshold(spec: DetectorSpec, threshold: float) -> DetectorSpec:
    """Same rule at a different alarm threshold."""
    return replace(spec, threshold=float(threshold))


def increment(spec: DetectorSpec, v):
    """Evaluate the spec's increment rule; v in [0, 1], scalar or array."""
    arr = np.asarray(v, dtype=float)
    if np.any(arr < 0.0) or np.any(arr > 1.0):
        raise ValueError("summary values must lie in [0, 1]")
    out = spec.increment_fn(arr)
    return out if isinstance(v, np.ndarray) else float(out)


def threshold_from_beta(beta: float) -> float:
    """Threshold A = log(beta) guaranteeing mean time to false alarm >= beta."""
    if not beta > 1.0:
        raise ValueError(f"beta must exceed 1, got {beta}")
    return math.log(beta)


@dataclass(frozen=True)
class CusumState:
    """Running statistic state; a fresh instance is the reset state.

    tau, once set, is the smallest batch index with w >= A and is frozen
    afterwards even though w keeps updating.
    """

    w: float = 0.0
    m: int = 0
    alarmed: bool = False
    tau: int | None = None


def cusum_step(state: CusumState, inc: float, a: float) -> CusumState:
    """One reflected update: w' = max(0, w + inc), alarm on first w' >= a."""
    w = max(0.0, state.w + float(inc))
    m = state.m + 1
    if state.alarmed:
        return CusumState(w=w, m=m, alarmed=True, tau=state.tau)
    if w >= a:
        return CusumState(w=w, m=m, alarmed=True, tau=m)
    return CusumState(w=w, m=m, alarmed=False, tau=None)


def reset(state: CusumState) -> CusumState:
    """Restore w = 0 and clear any alarm."""
    return CusumState()


def run_stream(spec: DetectorSpec, values) -> tuple[int | None, np.ndarray]:
    """Fold the CUSUM over a finite summary stream.

    Returns (tau, w_trajectory): tau is the 1-based index of the first
    crossing or None, and the trajectory covers every batch (updates
    continue past the alarm for diagnostics).

    Uses the reflected-walk identity w_m = s_m - min(0, min_{k<=m} s_k)
    with s the increment partial sums; equivalent to folding cusum_step.
    """
    arr = np.asarray(values, dtype=float)
    if arr.size == 0:
        return None, np.empty(0)
    inc = increment(spec, arr)
    s = np.cumsum(inc)
    w = s - np.minimum(np.minimum.accumulate(s), 0.0)
    hits = np.nonzero(w >= spec.threshold)[0]
    tau = int(hits[0]) + 1 if hits.size else None
    return tau, w
