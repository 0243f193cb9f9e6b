"""Tests for the CUSUM engine and the three increment rules."""

import math

import numpy as np
import pytest

from corrwatch.density import MaxCorrModel
from corrwatch.detectors import (
    CusumState,
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

MODEL = MaxCorrModel(n=10, p=100)


def fold_steps(spec, values):
    """Reference fold of cusum_step, returning (tau, trajectory)."""
    state = CusumState()
    traj = []
    for v in values:
        state = cusum_step(state, increment(spec, float(v)), spec.threshold)
        traj.append(state.w)
    return state.tau, np.array(traj)


class TestIncrements:
    def test_nonparametric_published_constants(self):
        spec = nonparametric_spec(0.9117, 0.9467, 1.0)
        assert increment(spec, 0.9467) == pytest.approx(0.0175, abs=1e-12)

    def test_robust_at_one(self):
        spec = robust_spec(MODEL, 2.0, 1.0)
        assert increment(spec, 1.0) == pytest.approx(math.log(2.0), abs=1e-14)

    def test_nonrobust_at_zero(self):
        spec = nonrobust_spec(MODEL, 10.0, 1.0)
        assert increment(spec, 0.0) == pytest.approx(math.log(10.0) - 9.0 * 4950.0, abs=1e-8)

    def test_robust_increasing_in_v(self):
        spec = robust_spec(MODEL, 2.0, 1.0)
        vals = increment(spec, np.linspace(0.0, 1.0, 200))
        assert np.all(np.diff(vals) > 0.0)

    def test_nonparametric_affine_in_v(self):
        spec = nonparametric_spec(0.9, 0.95, 1.0)
        grid = np.linspace(0.0, 1.0, 50)
        np.testing.assert_allclose(increment(spec, grid), grid - 0.925, atol=1e-15)

    def test_invalid_parameters_rejected(self):
        with pytest.raises(ValueError):
            robust_spec(MODEL, 1.0, 1.0)
        with pytest.raises(ValueError):
            nonrobust_spec(MODEL, 0.5, 1.0)
        with pytest.raises(ValueError):
            nonparametric_spec(0.95, 0.9, 1.0)
        with pytest.raises(ValueError):
            robust_spec(MODEL, 2.0, 0.0)

    def test_rejects_summary_outside_unit_interval(self):
        spec = robust_spec(MODEL, 2.0, 1.0)
        with pytest.raises(ValueError):
            increment(spec, 1.5)


class TestCusumStep:
    def test_reflection_at_zero(self):
        state = cusum_step(CusumState(), -5.0, 10.0)
        assert state.w == 0.0 and not state.alarmed

    def test_plain_accumulation(self):
        state = cusum_step(CusumState(w=1.2, m=3), 0.3, 10.0)
        assert state.w == pytest.approx(1.5) and state.m == 4 and not state.alarmed

    def test_first_crossing_sets_tau(self):
        state = cusum_step(CusumState(w=9.9, m=7), 0.3, 10.0)
        assert state.alarmed and state.tau == 8 and state.w == pytest.approx(10.2)

    def test_tau_frozen_after_alarm(self):
        state = CusumState(w=11.0, m=5, alarmed=True, tau=5)
        state = cusum_step(state, -20.0, 10.0)
        assert state.tau == 5 and state.w == 0.0 and state.alarmed

    def test_reset(self):
        state = CusumState(w=11.0, m=5, alarmed=True, tau=5)
        assert reset(state) == CusumState()

    def test_crossing_uses_greater_equal(self):
        state = cusum_step(CusumState(), 10.0, 10.0)
        assert state.alarmed and state.tau == 1


class TestThresholdFromBeta:
    def test_e_gives_one(self):
        assert threshold_from_beta(math.e) == pytest.approx(1.0, abs=1e-15)

    def test_published_values(self):
        assert threshold_from_beta(1000.0) == pytest.approx(6.907755278982137, abs=1e-12)
        assert threshold_from_beta(5000.0) == pytest.approx(8.517193191416238, abs=1e-12)

    def test_rejects_beta_at_most_one(self):
        with pytest.raises(ValueError):
            threshold_from_beta(1.0)


class TestRunStream:
    def test_empty_stream(self):
        spec = robust_spec(MODEL, 2.0, 1.0)
        tau, traj = run_stream(spec, [])
        assert tau is None and traj.size == 0

    def test_deterministic_saturated_stream(self):
        # V = 1 gives increment log(jbar) every batch.
        for beta in (100.0, 1000.0, 5000.0):
            spec = robust_spec(MODEL, 2.0, threshold_from_beta(beta))
            tau, _ = run_stream(spec, np.ones(64))
            assert tau == math.ceil(math.log(beta) / math.log(2.0))

    def test_matches_step_fold(self):
        rng = np.random.default_rng(40)
        spec = robust_spec(MODEL, 2.0, 3.0)
        values = MaxCorrModel(n=10, p=100, j=2.0).sample(rng, 400)
        tau_fast, traj_fast = run_stream(spec, values)
        tau_ref, traj_ref = fold_steps(spec, values)
        assert tau_fast == tau_ref
        np.testing.assert_allclose(traj_fast, traj_ref, atol=1e-8)

    def test_trajectory_continues_past_alarm(self):
        spec = robust_spec(MODEL, 2.0, threshold_from_beta(4.0))
        tau, traj = run_stream(spec, np.ones(10))
        assert tau == 2 and traj.size == 10
        assert traj[-1] == pytest.approx(10 * math.log(2.0), abs=1e-12)

    def test_mostly_quiet_on_prechange_streams(self):
        # Pre-change streams of length 100 should very rarely alarm at
        # A = log(5000): Monte Carlo false-alarm calibration.
        spec = robust_spec(MODEL, 2.0, threshold_from_beta(5000.0))
        pre = MaxCorrModel(n=10, p=100, j=1.0)
        quiet = 0
        runs = 200
        for i in range(runs):
            values = pre.sample(np.random.default_rng(1000 + i), 100)
            tau, _ = run_stream(spec, values)
            quiet += tau is None
        assert quiet / runs >= 0.95

    def test_markov_reset_property(self):
        # The trajectory after a visit to zero equals a fresh run on the suffix.
        rng = np.random.default_rng(41)
        spec = robust_spec(MODEL, 2.0, 50.0)
        values = MaxCorrModel(n=10, p=100, j=1.0).sample(rng, 300)
        _, traj = run_stream(spec, values)
        zeros = np.nonzero(traj == 0.0)[0]
        assert zeros.size > 0
        k = int(zeros[zeros > 50][0]) if np.any(zeros > 50) else int(zeros[-1])
        _, suffix = run_stream(spec, values[k + 1:])
        np.testing.assert_allclose(traj[k + 1:], suffix, atol=1e-9)

    def test_alarm_monotone_in_threshold(self):
        rng = np.random.default_rng(42)
        values = MaxCorrModel(n=10, p=100, j=2.0).sample(rng, 500)
        spec_lo = robust_spec(MODEL, 2.0, 2.0)
        taus = []
        for a in (2.0, 4.0, 6.0, 8.0):
            tau, _ = run_stream(with_threshold(spec_lo, a), values)
            taus.append(math.inf if tau is None else tau)
        assert taus == sorted(taus)

    def test_delay_from_positive_state_never_larger(self):
        # Coupled on the same stream, a head start w0 > 0 can only cross
        # earlier: pathwise form of the worst-case-at-zero property.
        rng = np.random.default_rng(43)
        spec = robust_spec(MODEL, 2.0, 6.0)
        post = MaxCorrModel(n=10, p=100, j=2.0)
        for i in range(50):
            values = post.sample(np.random.default_rng(2000 + i), 400)
            inc = increment(spec, values)
            for w0 in (0.5, 2.0, 5.0):
                tau0 = tau_w = None
                s0, sw = 0.0, w0
                for k, x in enumerate(inc, start=1):
                    s0 = max(0.0, s0 + x)
                    sw = max(0.0, sw + x)
                    assert sw >= s0
                    if tau_w is None and sw >= spec.threshold:
                        tau_w = k
                    if tau0 is None and s0 >= spec.threshold:
                        tau0 = k
                        break
                if tau0 is not None:
                    assert tau_w is not None and tau_w <= tau0
