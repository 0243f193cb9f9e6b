"""Synthetic data generation for the detection pipeline.

Covers Wishart-sampled covariances, row-sparse masking with positive
semidefinite repair, multivariate Gaussian batch generation, and
change-point scheduled summary streams (vector-level from covariances, or
model-level directly from the asymptotic law).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .density import MaxCorrModel
from .stats_core import max_magnitude_correlation

_SYM_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class CovarianceSpec:
    """A population covariance (symmetric positive definite) plus mean.

    The mean defaults to zero; generation never varies it.
    """

    sigma: np.ndarray
    mu: np.ndarray | None = None

    def __post_init__(self):
        sigma = np.asarray(self.sigma, dtype=float)
        if sigma.ndim != 2 or sigma.shape[0] != sigma.shape[1]:
            raise ValueError(f"sigma must be square, got shape {sigma.shape}")
        scale = max(1.0, float(np.max(np.abs(sigma))))
        if float(np.max(np.abs(sigma - sigma.T))) > _SYM_TOL * scale:
            raise ValueError("sigma is not symmetric")
        mu = np.zeros(sigma.shape[0]) if self.mu is None else np.asarray(self.mu, dtype=float)
        if mu.shape != (sigma.shape[0],):
            raise ValueError(f"mu must have shape ({sigma.shape[0]},), got {mu.shape}")
        object.__setattr__(self, "sigma", 0.5 * (sigma + sigma.T))
        object.__setattr__(self, "mu", mu)

    @property
    def p(self) -> int:
        return self.sigma.shape[0]


def identity_covariance(p: int) -> CovarianceSpec:
    return CovarianceSpec(sigma=np.eye(p))


def block_equicorrelation(p: int, s: int, c: float) -> CovarianceSpec:
    """Unit-variance covariance with correlation c inside disjoint s-blocks.

    Block sparse (hence row sparse) of degree s; positive definite for
    0 <= c < 1 since each block's eigenvalues are 1 + (s-1)c and 1 - c.
    """
    if not 0.0 <= c < 1.0:
        raise ValueError(f"block correlation must lie in [0, 1), got {c}")
    if s < 1 or s > p:
        raise ValueError(f"block size must lie in [1, p], got {s}")
    sigma = np.eye(p)
    for start in range(0, p, s):
        stop = min(start + s, p)
        sigma[start:stop, start:stop] = c
    np.fill_diagonal(sigma, 1.0)
    return CovarianceSpec(sigma=sigma)


@dataclass(frozen=True, eq=False)
class SparsityMask:
    """Symmetric boolean pattern with unit diagonal and row degree <= s."""

    s: int
    pattern: np.ndarray

    def __post_init__(self):
        pattern = np.asarray(self.pattern)
        if pattern.dtype != bool:
            raise ValueError("pattern must be boolean")
        if pattern.ndim != 2 or pattern.shape[0] != pattern.shape[1]:
            raise ValueError(f"pattern must be square, got shape {pattern.shape}")
        if self.s < 1:
            raise ValueError(f"sparsity degree must be >= 1, got {self.s}")
        if not np.array_equal(pattern, pattern.T):
            raise ValueError("pattern is not symmetric")
        if not np.all(np.diag(pattern)):
            raise ValueError("pattern diagonal must be all True")
        off_degree = pattern.sum(axis=1) - 1
        if int(off_degree.max(initial=0)) > self.s - 1:
            raise ValueError(
                f"row has {int(off_degree.max())} off-diagonal entries, exceeding s - 1 = {self.s - 1}"
            )
        object.__setattr__(self, "pattern", pattern)


def banded_mask(p: int, s: int) -> SparsityMask:
    """Deterministic banded mask with half-bandwidth (s-1)//2.

    Interior rows carry 2*((s-1)//2) + 1 entries, which equals s for odd s
    and stays within the degree-s bound for even s.
    """
    half = (s - 1) // 2
    idx = np.arange(p)
    pattern = np.abs(idx[:, None] - idx[None, :]) <= half
    return SparsityMask(s=s, pattern=pattern)


def sample_wishart(p: int, df: int, rng: np.random.Generator) -> np.ndarray:
    """One identity-scale Wishart(df) draw via the Bartlett decomposition.

    Lower-triangular factor with chi(df - i) diagonals and standard normal
    subdiagonals; requires df >= p for a full-rank draw.
    """
    if df < p:
        raise ValueError(f"degrees of freedom must be >= p, got df={df}, p={p}")
    factor = np.zeros((p, p))
    d = np.sqrt(rng.chisquare(df - np.arange(p)))
    factor[np.diag_indices(p)] = d
    factor[np.tril_indices(p, -1)] = rng.standard_normal(p * (p - 1) // 2)
    w = factor @ factor.T
    return 0.5 * (w + w.T)


def repair_psd(sigma: np.ndarray, floor_scale: float = 1e-8) -> np.ndarray:
    """Clip eigenvalues upward to floor_scale * trace / p.

    Eigenvalues are only ever raised, never lowered, so the repair is a
    no-op on matrices already comfortably positive definite.
    """
    sigma = np.asarray(sigma, dtype=float)
    floor = floor_scale * float(np.trace(sigma)) / sigma.shape[0]
    eigvals, eigvecs = np.linalg.eigh(sigma)
    if eigvals.min() >= floor:
        return sigma
    repaired = (eigvecs * np.maximum(eigvals, floor)) @ eigvecs.T
    return 0.5 * (repaired + repaired.T)


def apply_sparsity_mask(sigma: np.ndarray, mask: SparsityMask, floor_scale: float = 1e-8) -> CovarianceSpec:
    """Zero entries outside the mask, then repair positive definiteness.

    Masking can push eigenvalues negative, so the result is run through
    repair_psd to keep downstream Cholesky factorizations valid.
    """
    sigma = np.asarray(sigma, dtype=float)
    if sigma.shape != mask.pattern.shape:
        raise ValueError(f"shape mismatch: sigma {sigma.shape} vs mask {mask.pattern.shape}")
    masked = np.where(mask.pattern, sigma, 0.0)
    return CovarianceSpec(sigma=repair_psd(masked, floor_scale))


def mvn_batches(spec: CovarianceSpec, n: int, count: int, rng: np.random.Generator) -> np.ndarray:
    """count independent (n, p) batches with i.i.d. N(mu, sigma) rows."""
    if n < 2:
        raise ValueError(f"batch rows must be >= 2, got {n}")
    if count < 0:
        raise ValueError(f"count must be >= 0, got {count}")
    chol = np.linalg.cholesky(spec.sigma)
    z = rng.standard_normal((count, n, spec.p))
    return z @ chol.T + spec.mu


@dataclass(frozen=True)
class Segment:
    """Post-change regime over batch indices [start, end); the schedule's
    final segment also covers its right endpoint."""

    start: int
    end: int
    regime: object  # float level j, or CovarianceSpec

    def __post_init__(self):
        if self.end <= self.start:
            raise ValueError(f"segment end must exceed start, got [{self.start}, {self.end})")
        if isinstance(self.regime, CovarianceSpec):
            return
        if not (np.isscalar(self.regime) and float(self.regime) > 0.0):
            raise ValueError("regime must be a positive level or a CovarianceSpec")


@dataclass(frozen=True)
class ScenarioSchedule:
    """Change point nu plus contiguous post-change regime segments.

    Batches m = 1..horizon; m < nu is pre-change, m >= nu takes the regime
    of its segment.  Segments must start at nu, be contiguous, and their
    last end fixes the horizon (the final endpoint is inclusive).  With
    nu = inf the whole stream is pre-change and an explicit horizon is
    required.
    """

    nu: float
    segments: tuple[Segment, ...] = ()
    horizon: int | None = None

    def __post_init__(self):
        segments = tuple(self.segments)
        object.__setattr__(self, "segments", segments)
        if math.isinf(self.nu):
            if segments:
                raise ValueError("segments are meaningless when nu is infinite")
            if self.horizon is None or self.horizon < 1:
                raise ValueError("a positive horizon is required when nu is infinite")
            return
        if self.nu < 1 or int(self.nu) != self.nu:
            raise ValueError(f"nu must be a batch index >= 1 or infinity, got {self.nu}")
        if not segments:
            raise ValueError("a finite change point needs at least one segment")
        if segments[0].start != self.nu:
            raise ValueError(f"first segment must start at nu={self.nu}, got {segments[0].start}")
        for prev, cur in zip(segments, segments[1:]):
            if cur.start != prev.end:
                raise ValueError(f"segments must be contiguous: gap between {prev.end} and {cur.start}")
        if self.horizon is None:
            object.__setattr__(self, "horizon", segments[-1].end)
        elif self.horizon != segments[-1].end:
            raise ValueError("horizon must equal the last segment end")

    def regime_at(self, m: int):
        """Regime of batch m, or None when m is pre-change."""
        if not 1 <= m <= self.horizon:
            raise ValueError(f"batch index {m} outside 1..{self.horizon}")
        if m < self.nu:
            return None
        for seg in self.segments:
            if seg.start <= m < seg.end:
                return seg.regime
        return self.segments[-1].regime  # m == horizon (inclusive endpoint)


@dataclass
class StreamResult:
    """A generated summary stream plus per-batch metadata."""

    values: np.ndarray
    segment_j: list  # per-batch level for model-level batches, else None
    mode: str  # "model", "vector", or "mixed"
    batches: np.ndarray | None = None  # raw (horizon, n, p) data in vector mode


def _infer_mode(schedule: ScenarioSchedule) -> str:
    kinds = {isinstance(seg.regime, CovarianceSpec) for seg in schedule.segments}
    if not kinds:
        return "model"
    if kinds == {True}:
        return "vector"
    if kinds == {False}:
        return "model"
    return "mixed"


def scenario_stream(
    schedule: ScenarioSchedule,
    n: int,
    p: int,
    rng: np.random.Generator,
    mode: str = "auto",
    keep_batches: bool = False,
) -> StreamResult:
    """Generate the summary stream of a scheduled scenario.

    Pre-change batches come from the identity covariance (vector mode) or
    the level-1 law (model mode); each post-change segment is generated at
    its own level: model-level regimes are sampled directly from the
    asymptotic law, covariance regimes are sampled as Gaussian batches and
    reduced through the max-magnitude correlation.  In mixed schedules the
    pre-change side follows the first segment's kind.
    """
    if mode not in ("auto", "model", "vector"):
        raise ValueError(f"mode must be auto, model or vector, got {mode!r}")
    inferred = _infer_mode(schedule)
    if mode == "model" and inferred == "vector":
        raise ValueError("model mode cannot realize covariance-level segments")
    if mode == "vector" and inferred == "model" and schedule.segments:
        raise ValueError("vector mode cannot realize model-level segments (the level is emergent)")
    effective = inferred if mode == "auto" else mode
    if keep_batches and effective != "vector":
        raise ValueError("raw batches exist only in vector mode")

    horizon = schedule.horizon
    values = np.empty(horizon)
    segment_j: list = [None] * horizon
    batches = np.empty((horizon, n, p)) if keep_batches else None

    def fill_vector(idx: np.ndarray, spec: CovarianceSpec):
        raw = mvn_batches(spec, n, idx.size, rng)
        for k, b in zip(idx, raw):
            values[k] = max_magnitude_correlation(b)
        if batches is not None:
            batches[idx] = raw

    def fill_model(idx: np.ndarray, level: float, tagged: bool):
        model = MaxCorrModel(n=n, p=p, j=level)
        values[idx] = model.sample(rng, idx.size)
        if tagged:
            for k in idx:
                segment_j[k] = float(level)

    # Pre-change block (untagged: it carries no level metadata), then each
    # segment in schedule order.
    n_pre = horizon if math.isinf(schedule.nu) else int(schedule.nu) - 1
    if n_pre:
        pre_idx = np.arange(n_pre)
        if effective == "vector":
            fill_vector(pre_idx, identity_covariance(p))
        else:
            fill_model(pre_idx, 1.0, tagged=False)
    for seg in schedule.segments:
        stop = seg.end if seg is schedule.segments[-1] else seg.end - 1
        idx = np.arange(seg.start - 1, stop)
        if isinstance(seg.regime, CovarianceSpec):
            fill_vector(idx, seg.regime)
        else:
            fill_model(idx, float(seg.regime), tagged=True)
    return StreamResult(values=values, segment_j=segment_j, mode=effective, batches=batches)


# Correlation levels for the built-in vector scenario, calibrated so the
# fitted post-change levels land near 7.2, 11.1, 3.6 and 2.8 at
# (n, p) = (10, 100) with block size 5.
_FIG2_BLOCK_CORR = (0.656, 0.692, 0.580, 0.550)
_FIG2_BREAKS = ((500, 800), (800, 1300), (1300, 1670), (1670, 2000))
_FIG2_LEVELS = (7.23, 11.12, 3.62, 2.79)


def fig2_schedule() -> ScenarioSchedule:
    """Change at batch 500, then four model-level correlation regimes."""
    segments = tuple(
        Segment(start=a, end=b, regime=j) for (a, b), j in zip(_FIG2_BREAKS, _FIG2_LEVELS)
    )
    return ScenarioSchedule(nu=500, segments=segments)


def fig2_vector_schedule(p: int, s: int = 5) -> ScenarioSchedule:
    """Vector-level analog: block-equicorrelated covariances per regime."""
    segments = tuple(
        Segment(start=a, end=b, regime=block_equicorrelation(p, s, c))
        for (a, b), c in zip(_FIG2_BREAKS, _FIG2_BLOCK_CORR)
    )
    return ScenarioSchedule(nu=500, segments=segments)


def prechange_schedule(horizon: int) -> ScenarioSchedule:
    """No change ever: the whole stream is pre-change."""
    return ScenarioSchedule(nu=math.inf, horizon=horizon)


SCENARIO_NAMES = ("paper-fig2", "paper-fig2-vector", "prechange")


def named_scenario(name: str, p: int = 100, s: int = 5, horizon: int = 2000) -> ScenarioSchedule:
    """Look up a built-in scenario by CLI name."""
    if name == "paper-fig2":
        return fig2_schedule()
    if name == "paper-fig2-vector":
        return fig2_vector_schedule(p, s)
    if name == "prechange":
        return prechange_schedule(horizon)
    raise ValueError(f"unknown scenario {name!r}; available: {', '.join(SCENARIO_NAMES)}")


def trial_rng(master_seed: int, trial: int, substream: tuple[int, ...] = ()) -> np.random.Generator:
    """Deterministic, order-independent generator for one Monte Carlo trial.

    Distinct (substream, trial) keys yield statistically independent
    streams for the same master seed, so trials may run in any order or in
    parallel and still reproduce bit-identically.
    """
    seq = np.random.SeedSequence(master_seed, spawn_key=(*substream, trial))
    return np.random.default_rng(seq)
