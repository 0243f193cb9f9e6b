"""Sample moments and the max-magnitude correlation summary of a batch.

A batch is an (n, p) array holding n observation vectors of dimension p
(rows are observations, columns are coordinates).  Each batch is reduced
to one summary value: the largest absolute off-diagonal entry of its
sample correlation matrix.
"""

from __future__ import annotations

import numpy as np

# |R_ij| values in (1, 1 + CLAMP_TOL] are rounded down to 1; anything
# further outside the unit interval means the input was not a covariance.
CLAMP_TOL = 1e-12


class ZeroVarianceColumnError(ValueError):
    """A column has zero sample variance, so its correlations are undefined."""

    def __init__(self, column: int):
        self.column = int(column)
        super().__init__(f"column {column} has zero sample variance")


def validate_batch(data) -> np.ndarray:
    """Return ``data`` as a float (n, p) array, checking batch preconditions.

    Requires n >= 2 (correlation needs at least two observations),
    p >= 2 (the summary needs at least one off-diagonal pair), and all
    entries finite.
    """
    batch = np.asarray(data, dtype=float)
    if batch.ndim != 2:
        raise ValueError(f"batch must be 2-D, got shape {batch.shape}")
    n, p = batch.shape
    if n < 2:
        raise ValueError(f"batch needs at least 2 rows, got {n}")
    if p < 2:
        raise ValueError(f"batch needs at least 2 columns, got {p}")
    if not np.all(np.isfinite(batch)):
        raise ValueError("batch contains non-finite entries")
    return batch


def sample_covariance(batch) -> np.ndarray:
    """Sample covariance of the rows of a batch, with divisor n - 1.

    Returns the (p, p) matrix S = (1/(n-1)) * sum_i (x_i - xbar)^T (x_i - xbar),
    symmetrized against rounding.
    """
    x = validate_batch(batch)
    n = x.shape[0]
    centered = x - x.mean(axis=0)
    cov = centered.T @ centered / (n - 1)
    return 0.5 * (cov + cov.T)


def correlation_matrix(cov) -> np.ndarray:
    """Scale a covariance matrix to unit diagonal.

    Raises ZeroVarianceColumnError for the first column with a
    non-positive diagonal entry; degenerate columns are never silently
    skipped because that would bias the maximum downward.
    """
    s = np.asarray(cov, dtype=float)
    if s.ndim != 2 or s.shape[0] != s.shape[1]:
        raise ValueError(f"covariance must be square, got shape {s.shape}")
    diag = np.diag(s)
    bad = np.nonzero(diag <= 0.0)[0]
    if bad.size:
        raise ZeroVarianceColumnError(bad[0])
    scale = 1.0 / np.sqrt(diag)
    corr = s * np.outer(scale, scale)
    np.fill_diagonal(corr, 1.0)
    excess = np.max(np.abs(corr)) - 1.0
    if excess > CLAMP_TOL:
        raise RuntimeError(
            f"correlation magnitude exceeds 1 by {excess:.3e}; input is not a covariance matrix"
        )
    return np.clip(corr, -1.0, 1.0)


def max_magnitude_correlation(batch) -> float:
    """Largest |R_ij| over the strict upper triangle of the batch correlation.

    Symmetry makes the upper-triangle scan equivalent to the full
    off-diagonal scan.  The result lies in [0, 1].
    """
    corr = correlation_matrix(sample_covariance(batch))
    rows, cols = np.triu_indices(corr.shape[0], k=1)
    return float(np.max(np.abs(corr[rows, cols])))
