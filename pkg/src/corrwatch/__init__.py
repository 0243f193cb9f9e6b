"""Correlation-change detection for high-dimensional vector streams.

Batches of observation vectors are reduced to the maximum-magnitude
sample correlation, whose asymptotic law drives robust and non-robust
CUSUM detectors, simulation scenarios, and Monte Carlo benchmarks.
"""

from .bench import (
    FitReport,
    OcPoint,
    estimate_mfa,
    estimate_wadd,
    histogram_fit,
    ks_distance,
    oc_curve,
    run_preset,
)
from .density import (
    AllSamplesAtOneError,
    MaxCorrModel,
    beta_const,
    incomplete_beta_tail,
    incomplete_beta_tail_inv,
    kl_divergence,
    mle_j,
    robust_llr,
)
from .detectors import (
    CusumState,
    DetectorSpec,
    cusum_step,
    increment,
    nonparametric_spec,
    nonrobust_spec,
    reset,
    robust_spec,
    run_stream,
    threshold_from_beta,
    with_threshold,
)
from .simulation import (
    CovarianceSpec,
    ScenarioSchedule,
    Segment,
    SparsityMask,
    StreamResult,
    apply_sparsity_mask,
    banded_mask,
    block_equicorrelation,
    identity_covariance,
    mvn_batches,
    named_scenario,
    repair_psd,
    sample_wishart,
    scenario_stream,
    trial_rng,
)
from .stats_core import (
    ZeroVarianceColumnError,
    correlation_matrix,
    max_magnitude_correlation,
    sample_covariance,
    validate_batch,
)

__version__ = "0.1.0"
