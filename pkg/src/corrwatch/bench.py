"""Monte Carlo operating characteristics for the CUSUM detectors.

Estimates worst-case detection delay (change at the first batch, statistic
started from zero: the worst case for CUSUM-type rules) and mean time to a
false alarm, assembles threshold curves, and fits the asymptotic law to
summary samples.

Streams are model-level draws from the asymptotic law, which gives direct
control over the post-change level; vector-level validation lives in the
simulation module.  Trials use deterministic per-trial substreams so runs
reproduce bit-identically regardless of execution order or worker count.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .density import MaxCorrModel, mle_j
from .detectors import DetectorSpec, with_threshold
from .simulation import trial_rng

_BLOCK_START = 256
_BLOCK_MAX = 65536
_STEP_CAP = 50_000_000  # safety valve for delay runs with no horizon
_MFA_SUBSTREAM = 0
_WADD_SUBSTREAM = 1


@dataclass(frozen=True)
class OcPoint:
    """One operating-characteristic row: a threshold and its estimates."""

    spec_id: str
    a: float
    mfa_est: float
    mfa_se: float
    wadd_est: float
    wadd_se: float
    trials: int
    censored: int  # pre-change runs that hit the horizon; mfa_est is then a lower bound


@dataclass
class FitReport:
    """Normalized histogram of summary samples plus the fitted law."""

    bin_edges: np.ndarray
    density: np.ndarray
    j_hat: float
    ks: float
    sample_count: int


def _crossing_time(spec: DetectorSpec, model: MaxCorrModel, rng: np.random.Generator,
                   horizon: int | None) -> int | None:
    """First batch index with w >= threshold, or None if the horizon hits first.

    Samples the stream in growing blocks and scans each block with the
    reflected-walk identity w_k = max(w0 + s_k, s_k - min(0, min_{j<=k} s_j)).
    """
    w = 0.0
    done = 0
    block = _BLOCK_START
    while True:
        k = block if horizon is None else min(block, horizon - done)
        if k == 0:
            return None
        v = model.sample(rng, k)
        inc = spec.increment_fn(v)
        s = np.cumsum(inc)
        traj = np.maximum(w + s, s - np.minimum(np.minimum.accumulate(s), 0.0))
        hits = np.nonzero(traj >= spec.threshold)[0]
        if hits.size:
            return done + int(hits[0]) + 1
        done += k
        w = float(traj[-1])
        block = min(block * 2, _BLOCK_MAX)
        if horizon is None and done >= _STEP_CAP:
            raise RuntimeError(f"no crossing within {_STEP_CAP} batches; check the spec's drift")


def _delay_chunk(spec, model, master_seed, trial_indices, substream):
    return [
        _crossing_time(spec, model, trial_rng(master_seed, i, substream=(substream,)), None)
        for i in trial_indices
    ]


def _mfa_chunk(spec, model, master_seed, trial_indices, horizon, substream):
    return [
        _crossing_time(spec, model, trial_rng(master_seed, i, substream=(substream,)), horizon)
        for i in trial_indices
    ]


def _parallel_map(fn_name, args_per_chunk, n_jobs):
    from joblib import Parallel, delayed

    out = Parallel(n_jobs=n_jobs)(delayed(fn_name)(*args) for args in args_per_chunk)
    return [x for chunk in out for x in chunk]


def _mean_se(values: np.ndarray) -> tuple[float, float]:
    mean = float(values.mean())
    se = float(values.std(ddof=1) / math.sqrt(values.size)) if values.size > 1 else 0.0
    return mean, se


def estimate_wadd(spec: DetectorSpec, model: MaxCorrModel, post_j: float, trials: int,
                  master_seed: int, n_jobs: int = 1,
                  substream: int = _WADD_SUBSTREAM) -> tuple[float, float]:
    """Mean detection delay with the change at batch 1, plus its standard error.

    Each trial streams i.i.d. summary draws at level post_j from w = 0
    until the threshold crossing (almost surely finite; runs with negative
    drift just take longer).
    """
    if trials < 1:
        raise ValueError(f"trials must be >= 1, got {trials}")
    if not post_j >= 1.0:
        raise ValueError(f"post-change level must be >= 1, got {post_j}")
    post = replace(model, j=float(post_j))
    if n_jobs == 1:
        taus = _delay_chunk(spec, post, master_seed, range(trials), substream)
    else:
        chunks = np.array_split(np.arange(trials), max(n_jobs * 4, 1))
        taus = _parallel_map(
            _delay_chunk,
            [(spec, post, master_seed, c, substream) for c in chunks if c.size],
            n_jobs,
        )
    return _mean_se(np.asarray(taus, dtype=float))


def estimate_mfa(spec: DetectorSpec, model: MaxCorrModel, trials: int, horizon: int,
                 master_seed: int, n_jobs: int = 1,
                 substream: int = _MFA_SUBSTREAM) -> tuple[float, float, int]:
    """Mean time to a false alarm on pre-change streams, capped at the horizon.

    Returns (mean, se, censored).  Censored trials (no crossing before the
    horizon) contribute the horizon itself, so with censored > 0 the mean
    is a reported lower bound, never a silent truncation.
    """
    if trials < 1:
        raise ValueError(f"trials must be >= 1, got {trials}")
    if horizon < 1:
        raise ValueError(f"horizon must be >= 1, got {horizon}")
    pre = replace(model, j=1.0)
    if n_jobs == 1:
        raw = _mfa_chunk(spec, pre, master_seed, range(trials), horizon, substream)
    else:
        chunks = np.array_split(np.arange(trials), max(n_jobs * 4, 1))
        raw = _parallel_map(
            _mfa_chunk,
            [(spec, pre, master_seed, c, horizon, substream) for c in chunks if c.size],
            n_jobs,
        )
    censored = sum(1 for t in raw if t is None)
    taus = np.asarray([horizon if t is None else t for t in raw], dtype=float)
    mean, se = _mean_se(taus)
    return mean, se, censored


def oc_curve(specs, thresholds, model: MaxCorrModel, post_j: float, trials: int,
             master_seed: int, horizon: int | None = None, n_jobs: int = 1) -> list[OcPoint]:
    """One OcPoint per (spec, threshold) pair, in cross-product order.

    The false-alarm horizon defaults to 20 * exp(A) per threshold, matching
    the A = log(beta) design rule; pass an explicit horizon for rules whose
    thresholds are not on the log-beta scale.
    """
    specs = list(specs)
    thresholds = list(thresholds)
    if not specs or not thresholds:
        raise ValueError("specs and thresholds must be non-empty")
    rows = []
    for si, spec in enumerate(specs):
        for ti, a in enumerate(thresholds):
            point = with_threshold(spec, a)
            h = int(math.ceil(20.0 * math.exp(a))) if horizon is None else int(horizon)
            key = 2 * (si * len(thresholds) + ti)
            mfa, mfa_se, censored = estimate_mfa(
                point, model, trials, h, master_seed, n_jobs=n_jobs, substream=key + _MFA_SUBSTREAM
            )
            wadd, wadd_se = estimate_wadd(
                point, model, post_j, trials, master_seed, n_jobs=n_jobs, substream=key + _WADD_SUBSTREAM
            )
            rows.append(OcPoint(
                spec_id=spec.name, a=float(a), mfa_est=mfa, mfa_se=mfa_se,
                wadd_est=wadd, wadd_se=wadd_se, trials=trials, censored=censored,
            ))
    return rows


def ks_distance(samples, cdf) -> float:
    """Two-sided Kolmogorov-Smirnov distance between samples and a CDF."""
    xs = np.sort(np.asarray(samples, dtype=float))
    k = xs.size
    f = np.asarray(cdf(xs), dtype=float)
    grid = np.arange(1, k + 1) / k
    return float(max(np.max(grid - f), np.max(f - (grid - 1.0 / k))))


def histogram_fit(samples, bins: int, n: int, p: int) -> FitReport:
    """Normalized histogram over [min, 1] plus the fitted law and KS distance."""
    arr = np.asarray(samples, dtype=float).ravel()
    if arr.size < 2:
        raise ValueError(f"at least 2 samples required, got {arr.size}")
    if bins < 2:
        raise ValueError(f"at least 2 bins required, got {bins}")
    density, edges = np.histogram(arr, bins=bins, range=(float(arr.min()), 1.0), density=True)
    j_hat = mle_j(arr, n, p)
    fitted = MaxCorrModel(n=n, p=p, j=j_hat)
    return FitReport(
        bin_edges=edges,
        density=density,
        j_hat=j_hat,
        ks=ks_distance(arr, fitted.cdf),
        sample_count=int(arr.size),
    )


# Benchmark presets.  Threshold grids are calibrated so the reference
# detector's curve spans the log-MFA range of every comparison point; the
# mean-shift detector gets its own threshold scale and an explicit horizon
# because exp(A) is not a false-alarm scale for bounded increments.
PRESETS = {
    "fig6": {
        "n": 10, "p": 100, "post_j": 2.0, "trials": 5000,
        "groups": [
            {"kind": "robust", "jbar": 2.0,
             "thresholds": [math.log(b) for b in (50, 200, 1000, 2500, 5000)], "horizon": None},
            {"kind": "nonrobust", "j1": 10.0,
             "thresholds": [math.log(b) for b in (200, 500, 1000, 2500)], "horizon": None},
            {"kind": "nonrobust", "j1": 20.0,
             "thresholds": [math.log(b) for b in (200, 500, 1000, 2500)], "horizon": None},
            {"kind": "nonrobust", "j1": 50.0,
             "thresholds": [math.log(b) for b in (200, 500, 1000, 2500)], "horizon": None},
        ],
    },
    "fig7": {
        "n": 10, "p": 100, "post_j": 3.62, "trials": 5000,
        "groups": [
            {"kind": "nonrobust", "j1": 3.62,
             "thresholds": [math.log(b) for b in (50, 200, 1000, 5000)], "horizon": None},
            {"kind": "nonparametric", "m0": 0.9117, "m1": 0.9467,
             "thresholds": [0.16, 0.20, 0.24, 0.28], "horizon": 200_000},
        ],
    },
}
PRESETS["fig6-desk"] = {**PRESETS["fig6"], "trials": 1000}
PRESETS["fig7-desk"] = {**PRESETS["fig7"], "trials": 1000}


def _group_spec(group, model: MaxCorrModel) -> DetectorSpec:
    from . import detectors

    a0 = group["thresholds"][0]
    if group["kind"] == "robust":
        return detectors.robust_spec(model, group["jbar"], a0)
    if group["kind"] == "nonrobust":
        return detectors.nonrobust_spec(model, group["j1"], a0)
    return detectors.nonparametric_spec(group["m0"], group["m1"], a0)


def run_preset(name: str, master_seed: int = 0, n_jobs: int = 1,
               trials: int | None = None) -> list[OcPoint]:
    """Run a named benchmark preset and return its OC table."""
    if name not in PRESETS:
        raise ValueError(f"unknown preset {name!r}; available: {', '.join(sorted(PRESETS))}")
    preset = PRESETS[name]
    model = MaxCorrModel(n=preset["n"], p=preset["p"])
    rows: list[OcPoint] = []
    for group in preset["groups"]:
        spec = _group_spec(group, model)
        rows.extend(oc_curve(
            [spec], group["thresholds"], model, preset["post_j"],
            trials if trials is not None else preset["trials"],
            master_seed, horizon=group["horizon"], n_jobs=n_jobs,
        ))
    return rows
