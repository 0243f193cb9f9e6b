"""Asymptotic law of the max-magnitude sample correlation.

For (n, p) batches with p >> n >= 5 and a row-sparse population covariance,
the summary value V has the approximate distribution

    F(v; j) = exp(-(c/2) * j * tail(v)),                    v in [0, 1],
    f(v; j) = (c/2) * (1 - v^2)^((n-4)/2) * j * F(v; j),    v in (0, 1],

where tail(v) = integral_v^1 (1 - u^2)^((n-4)/2) du is an incomplete beta
integral.  The scalar j encodes the correlation level: a diagonal
covariance gives j = 1, correlated coordinates give j > 1.

Normalization convention: with b_n = B((n-2)/2, 1/2) the constant is
c = 2 p (p-1) / b_n, so that (c/2) * tail(0) = p (p-1) / 2 (the number of
unordered coordinate pairs) and F(0; j) = exp(-j p (p-1) / 2), i.e. F is a
proper distribution function up to that vanishing mass.  An override for c
is accepted for sensitivity studies.

All likelihood work is done in log space: (c/2) * tail(v) reaches ~5e3 at
p = 100, so exp(-(c/2) j tail(v)) underflows long before the algebra is
finished and must never be formed first.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import special


class AllSamplesAtOneError(ValueError):
    """Every sample equals 1, so the level estimate diverges."""


def _check_n(n: int) -> int:
    if int(n) != n or n < 5:
        raise ValueError(f"batch row count n must be an integer >= 5, got {n}")
    return int(n)


def beta_const(n: int) -> float:
    """Beta-function constant B((n-2)/2, 1/2) of the density family."""
    n = _check_n(n)
    return float(special.beta((n - 2) / 2.0, 0.5))


def _poly_antideriv(v, coeffs) -> np.ndarray:
    # G(u) = u * H(u^2) with H(x) = sum_m binom(k, m) (-1)^m x^m / (2m+1),
    # the antiderivative of (1-u^2)^k for integer k = (n-4)/2.
    x = v * v
    h = np.zeros_like(v)
    for a in coeffs[::-1]:
        h = h * x + a
    return v * h


@lru_cache(maxsize=None)
def _tail_poly(n: int) -> tuple[np.ndarray, float]:
    k = (n - 4) // 2
    m = np.arange(k + 1)
    coeffs = special.comb(k, m) * (-1.0) ** m / (2 * m + 1)
    # G(1) through the same Horner path, so the tail vanishes exactly at v = 1.
    return coeffs, float(_poly_antideriv(np.float64(1.0), coeffs))


def _tail_raw(v: np.ndarray, n: int) -> np.ndarray:
    if n % 2 == 0:
        coeffs, at_one = _tail_poly(n)
        return at_one - _poly_antideriv(v, coeffs)
    # Odd n: regularized incomplete beta identity, complemented form to
    # avoid cancellation as v -> 1.
    return 0.5 * beta_const(n) * special.betaincc(0.5, (n - 2) / 2.0, v * v)


def incomplete_beta_tail(v, n: int):
    """Tail integral of the density kernel: integral_v^1 (1-u^2)^((n-4)/2) du.

    Strictly decreasing on [0, 1] with value b_n / 2 at 0 and 0 at 1.
    Even n uses the exact polynomial antiderivative; odd n the regularized
    incomplete beta function.
    """
    n = _check_n(n)
    arr = np.asarray(v, dtype=float)
    if np.any(arr < 0.0) or np.any(arr > 1.0):
        raise ValueError("v must lie in [0, 1]")
    out = _tail_raw(arr, n)
    return out if isinstance(v, np.ndarray) else float(out)


def incomplete_beta_tail_inv(t, n: int, tol: float = 1e-13):
    """Solve incomplete_beta_tail(v, n) = t for v by bracketed bisection.

    Bisection rather than Newton: the tail is flat near v = 1 where its
    derivative vanishes, and the [0, 1] bracket guarantees convergence.
    Iterates until |tail(v) - t| <= tol everywhere or the bracket reaches
    float resolution.
    """
    n = _check_n(n)
    arr = np.atleast_1d(np.asarray(t, dtype=float))
    t0 = incomplete_beta_tail(0.0, n)
    if np.any(arr < 0.0) or np.any(arr > t0 * (1.0 + 1e-12)):
        raise ValueError(f"target must lie in [0, {t0}]")
    lo = np.zeros_like(arr)
    hi = np.ones_like(arr)
    mid = 0.5 * (lo + hi)
    for _ in range(120):
        resid = _tail_raw(mid, n) - arr
        if np.all(np.abs(resid) <= tol):
            break
        above = resid > 0.0  # tail decreasing: tail(mid) > t means root right of mid
        lo = np.where(above, mid, lo)
        hi = np.where(above, hi, mid)
        mid = 0.5 * (lo + hi)
    return mid if isinstance(t, np.ndarray) else float(mid[0])


@dataclass(frozen=True)
class MaxCorrModel:
    """Constants of the summary-value law for (n, p) batches at level j.

    Derived fields: beta_n = B((n-2)/2, 1/2) and the normalizing constant
    c = 2 p (p-1) / beta_n (or the explicit override).
    """

    n: int
    p: int
    j: float = 1.0
    c_override: float | None = None
    beta_n: float = field(init=False, repr=False, compare=False)
    c: float = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        _check_n(self.n)
        if self.p < 2:
            raise ValueError(f"dimension p must be >= 2, got {self.p}")
        if not self.j > 0.0:
            raise ValueError(f"level j must be positive, got {self.j}")
        bn = beta_const(self.n)
        c = 2.0 * self.p * (self.p - 1) / bn if self.c_override is None else float(self.c_override)
        if not c > 0.0:
            raise ValueError(f"normalizing constant must be positive, got {c}")
        object.__setattr__(self, "beta_n", bn)
        object.__setattr__(self, "c", c)

    @property
    def half_c(self) -> float:
        return 0.5 * self.c

    def tail(self, v):
        return incomplete_beta_tail(v, self.n)

    def log_pdf(self, v):
        """log f(v; j) for v in (0, 1]; never forms the underflowing exp."""
        arr = np.asarray(v, dtype=float)
        if np.any(arr <= 0.0) or np.any(arr > 1.0):
            raise ValueError("density is supported on (0, 1]")
        with np.errstate(divide="ignore"):
            shape = 0.5 * (self.n - 4) * np.log1p(-(arr * arr))
        out = np.log(self.half_c) + np.log(self.j) + shape - self.half_c * self.j * self.tail(arr)
        return out if isinstance(v, np.ndarray) else float(out)

    def pdf(self, v):
        out = np.exp(self.log_pdf(np.asarray(v, dtype=float)))
        return out if isinstance(v, np.ndarray) else float(out)

    def cdf(self, v):
        """F(v; j) = exp(-(c/2) j tail(v)) for v in [0, 1]."""
        arr = np.asarray(v, dtype=float)
        out = np.exp(-self.half_c * self.j * self.tail(arr))
        return out if isinstance(v, np.ndarray) else float(out)

    def sample(self, rng: np.random.Generator, size: int | None = None):
        """Inverse-CDF draws: V = tail_inv(-2 log U / (c j)), U ~ Uniform(0,1).

        Draws whose target tail value exceeds tail(0) (probability
        <= exp(-p (p-1) j / 2), far below float resolution) are redrawn,
        as are exact zeros of the uniform source.
        """
        k = 1 if size is None else int(size)
        t0 = self.tail(0.0)
        out = np.empty(k)
        pending = np.arange(k)
        while pending.size:
            u = rng.random(pending.size)
            with np.errstate(divide="ignore"):
                t = -2.0 * np.log(u) / (self.c * self.j)
            ok = (u > 0.0) & (t <= t0)
            if np.any(ok):
                out[pending[ok]] = incomplete_beta_tail_inv(t[ok], self.n)
            pending = pending[~ok]
        return float(out[0]) if size is None else out


def robust_llr(v, jbar: float, model: MaxCorrModel):
    """Log-likelihood ratio log f(v; jbar) - log f(v; 1).

    Equals log(jbar) - (c/2)(jbar - 1) tail(v): strictly increasing in v
    with maximum log(jbar) at v = 1.  The model's own level j is ignored;
    only the (n, p) constants enter.  Defined on all of [0, 1] since
    tail(0) is finite.
    """
    if not jbar > 1.0:
        raise ValueError(f"jbar must exceed 1, got {jbar}")
    arr = np.asarray(v, dtype=float)
    out = np.log(jbar) - model.half_c * (jbar - 1.0) * incomplete_beta_tail(arr, model.n)
    return out if isinstance(v, np.ndarray) else float(out)


def mle_j(samples, n: int, p: int, c_override: float | None = None) -> float:
    """Closed-form maximum-likelihood estimate of the level j.

    jhat = 1 / ((c/2) * mean of tail(V_m)).  Under the model, (c/2) j tail(V)
    is unit-exponential, so the mean tail is 2 / (c j) and the estimator is
    consistent.  Raises AllSamplesAtOneError when every sample equals 1
    (the estimate diverges).
    """
    arr = np.asarray(samples, dtype=float).ravel()
    if arr.size == 0:
        raise ValueError("at least one sample is required")
    if np.any(arr < 0.0) or np.any(arr > 1.0):
        raise ValueError("samples must lie in [0, 1]")
    ref = MaxCorrModel(n=n, p=p, c_override=c_override)
    mean_tail = float(incomplete_beta_tail(arr, n).mean())
    if mean_tail == 0.0:
        raise AllSamplesAtOneError("all samples equal 1; level estimate diverges")
    return float(1.0 / (ref.half_c * mean_tail))


def kl_divergence(j1: float, j0: float) -> float:
    """KL divergence between levels: D(f(.; j1) || f(.; j0)).

    Closed form log(j1/j0) + j0/j1 - 1; the (n, p) constants cancel.
    Verified against quadrature of the defining integral in the test suite.
    """
    if not (j1 > 0.0 and j0 > 0.0):
        raise ValueError("levels must be positive")
    return float(np.log(j1 / j0) + j0 / j1 - 1.0)
