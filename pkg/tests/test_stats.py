"""Mini-batch statistics and regularizer behavior."""

import math

import numpy as np
import pytest

from vropt.numerics import RngStream
from vropt.stats import (
    BatchStats,
    cochran_scaling_check,
    impact_factor_from_lambda0,
    init_regularizer,
    lambda_from_ratio,
    minibatch_stats,
    regularizer_lambda,
    scale_free_one_pass,
    sigmoid_regularizer,
    update_history,
)


class TestMinibatchStats:
    def test_identical_samples_have_zero_variance(self):
        bs = minibatch_stats([[1.0], [1.0], [1.0], [1.0]])
        assert bs.mean_increment[0] == 1.0
        assert bs.var[0] == 0.0
        assert bs.scale_free[0] == 0.0

    def test_hand_evaluated_two_sample_batch(self):
        """[[1],[3]]: mean 2, 1/m-normalized variance 1, rho 1/4."""
        bs = minibatch_stats([[1.0], [3.0]])
        assert bs.mean_increment[0] == 2.0
        assert bs.var[0] == 1.0
        assert bs.scale_free[0] == 0.25

    def test_zero_batch_takes_guard_path(self):
        bs = minibatch_stats([[0.0], [0.0]])
        assert bs.mean_increment[0] == 0.0
        assert bs.var[0] == 0.0
        assert bs.scale_free[0] == 0.0

    def test_empty_batch_is_error(self):
        with pytest.raises(ValueError):
            minibatch_stats(np.empty((0, 3)))

    def test_ragged_batch_is_error(self):
        with pytest.raises(ValueError):
            minibatch_stats([[1.0, 2.0], [1.0]])

    def test_one_pass_two_pass_agreement(self):
        """The expanded-square form must agree to 1e-10 relative when the
        mean increment clears the guard."""
        rng = RngStream(101)
        for _ in range(200):
            m = 2 + rng.index_uniform(30)
            d = 1 + rng.index_uniform(6)
            inc = rng.normals(m * d).reshape(m, d) + 3.0  # mean well above guard
            two = minibatch_stats(inc).scale_free
            one = scale_free_one_pass(inc)
            np.testing.assert_allclose(one, two, rtol=1e-10, atol=1e-12)

    def test_scale_freeness_power_of_two_exact(self):
        """Doubling all samples leaves rho bit-identical (exponent shift)."""
        rng = RngStream(102)
        inc = rng.normals(24).reshape(8, 3) + 2.0
        base = minibatch_stats(inc).scale_free
        scaled = minibatch_stats(inc * 2.0).scale_free
        np.testing.assert_array_equal(base, scaled)

    def test_scale_freeness_general_factor(self):
        rng = RngStream(103)
        inc = rng.normals(40).reshape(10, 4) + 2.0
        base = minibatch_stats(inc).scale_free
        for c in (0.37, -1.9, 125.0):
            scaled = minibatch_stats(inc * c).scale_free
            np.testing.assert_allclose(scaled, base, rtol=1e-12)

    def test_global_scalar_granularity(self):
        rng = RngStream(104)
        inc = rng.normals(30).reshape(10, 3) + 1.5
        per = minibatch_stats(inc)
        glob = minibatch_stats(inc, granularity="global_scalar")
        assert glob.var.shape == (1,) and glob.scale_free.shape == (1,)
        np.testing.assert_allclose(glob.var[0], per.var.sum(), rtol=1e-12)
        expected_rho = per.var.sum() / (per.mean_increment ** 2).sum()
        np.testing.assert_allclose(glob.scale_free[0], expected_rho, rtol=1e-12)


class TestRegularizerLambda:
    def test_equal_rho_gives_exactly_one(self):
        """Homoskedastic identity: current rho equal to its reference."""
        rng = RngStream(111)
        for _ in range(100):
            rho = math.exp(rng.uniform01() * 10 - 5)
            s = 0.5 + rng.uniform01() * 19
            assert lambda_from_ratio([rho], [rho], s)[0] == 1.0

    def test_zero_rho_hits_upper_bound(self):
        assert lambda_from_ratio([0.0], [1.0], 2.0)[0] == 3.0

    def test_ratio_four_with_s_two(self):
        """(1+2)/(1+2*4) = 1/3."""
        lam = lambda_from_ratio([4.0], [1.0], 2.0)[0]
        np.testing.assert_allclose(lam, 1.0 / 3.0, rtol=1e-15)

    def test_bounds_hold_for_random_inputs(self):
        rng = RngStream(112)
        rho = np.exp(rng.uniforms(5000) * 24 - 12)
        ref = np.exp(rng.uniforms(5000) * 24 - 12)
        for s in (0.5, 2.0, 20.0):
            lam = lambda_from_ratio(rho, ref, s)
            assert (lam > 0).all() and (lam <= 1.0 + s).all()

    def test_monotone_decreasing_in_rho(self):
        rng = RngStream(113)
        ref = np.exp(rng.uniforms(2000) * 10 - 5)
        rho1 = np.exp(rng.uniforms(2000) * 10 - 5)
        rho2 = rho1 * (1.5 + rng.uniforms(2000))
        lam1 = lambda_from_ratio(rho1, ref, 2.0)
        lam2 = lambda_from_ratio(rho2, ref, 2.0)
        assert (lam2 < lam1).all()

    def test_inactive_before_history(self):
        state = init_regularizer(3)
        lam = regularizer_lambda([1.0, 2.0, 3.0], state)
        np.testing.assert_array_equal(lam, [1.0, 1.0, 1.0])

    def test_zero_history_gives_one(self):
        state = init_regularizer(1)
        state = update_history(state, [0.0])
        assert regularizer_lambda([0.0], state)[0] == 1.0

    def test_constant_history_identity_is_exact(self):
        """Running mean of a constant rho sequence stays exactly equal to it,
        so lambda is exactly 1 at every step (mean_normalized)."""
        rng = RngStream(114)
        for _ in range(25):
            rho = math.exp(rng.uniform01() * 8 - 4)
            state = init_regularizer(1)
            for _ in range(17):
                state = update_history(state, [rho])
                assert regularizer_lambda([rho], state)[0] == 1.0

    def test_algorithm_literal_divides_by_running_sum(self):
        state = init_regularizer(1, mode="algorithm_literal")
        state = update_history(state, [2.0])
        # first step: rho/omega = 1 regardless of magnitude
        assert regularizer_lambda([2.0], state)[0] == 1.0
        state = update_history(state, [2.0])
        lam = regularizer_lambda([2.0], state)[0]
        np.testing.assert_allclose(lam, 3.0 / (1.0 + 2.0 * 0.5), rtol=1e-15)


class TestUpdateHistory:
    def test_accumulates_and_counts(self):
        state = init_regularizer(1)
        state = update_history(state, [2.0])
        assert state.omega[0] == 2.0 and state.t == 1
        state = update_history(state, [4.0])
        assert state.omega[0] == 6.0 and state.t == 2
        assert state.rho_bar[0] == 3.0

    def test_zero_rho_keeps_omega(self):
        state = init_regularizer(1)
        state = update_history(state, [5.0])
        state = update_history(state, [0.0])
        assert state.omega[0] == 5.0 and state.t == 2

    def test_omega_nondecreasing(self):
        rng = RngStream(115)
        state = init_regularizer(4)
        prev = state.omega
        for _ in range(50):
            state = update_history(state, np.exp(rng.normals(4)))
            assert (state.omega >= prev).all()
            prev = state.omega

    def test_shape_mismatch(self):
        state = init_regularizer(2)
        with pytest.raises(Exception):
            update_history(state, [1.0, 2.0, 3.0])


class TestSigmoidRegularizer:
    def test_unit_value_at_equal_variances(self):
        """a = 1 + 1/e makes the value exactly 1 when the variances agree."""
        v = sigmoid_regularizer(0.8, 0.8, 2.0, a=1.0 + 1.0 / math.e)
        np.testing.assert_allclose(v, 1.0, rtol=1e-15)

    def test_large_variance_limit(self):
        lam0 = 2.0
        a = 1.0 + 1.0 / math.e
        limit = a / (1.0 + math.exp(lam0 / 2.0))
        v = sigmoid_regularizer(1e12, 1.0, lam0, a=a)
        np.testing.assert_allclose(v, limit, rtol=1e-6)

    def test_first_order_agreement_with_rational_form(self):
        """At sigma^2/sbar^2 = 1.1 both bounded forms differ only at second
        order in the 10% offset."""
        lam0 = 2.0
        s = impact_factor_from_lambda0(lam0)
        rational = (1.0 + s) / (1.0 + s * 1.1)
        sig = sigmoid_regularizer(1.1, 1.0, lam0)
        assert abs(rational - sig) < 0.02
        assert abs(rational - sig) > 0.0  # genuinely different forms

    def test_impact_factor_range(self):
        """lambda0 in (1, 5) maps into roughly (0.5, 20)."""
        lo = impact_factor_from_lambda0(1.0)
        hi = impact_factor_from_lambda0(5.0)
        assert 0.5 < lo < 1.0
        assert 10.0 < hi < 20.0

    def test_invalid_inputs(self):
        with pytest.raises(ValueError):
            sigmoid_regularizer(-1.0, 1.0, 2.0)


class TestCochranScaling:
    def test_batch_variance_expectation_m2(self):
        """E[batch variance] = (m-1)/m * sigma0^2; at m=2 that is 0.5."""
        ev2, _ = cochran_scaling_check(2, 1.0, RngStream(116), n_batches=10**6)
        assert abs(ev2 - 0.5) < 0.005

    def test_single_sample_variance_is_zero(self):
        ev2, _ = cochran_scaling_check(1, 1.0, RngStream(117), n_batches=1000)
        assert ev2 == 0.0

    def test_mean_variance_scaling(self):
        """Var[batch mean] = sigma0^2/m: m=100, sigma0^2=4 -> 0.04."""
        _, var_mean = cochran_scaling_check(100, 4.0, RngStream(118), n_batches=3 * 10**4)
        assert abs(var_mean - 0.04) / 0.04 < 0.05

    def test_ratio_bridge(self):
        """batch-variance ratios estimate mean-variance ratios (same (m-1)
        factor cancels)."""
        rng = RngStream(119)
        ev2_a, var_a = cochran_scaling_check(8, 1.0, rng, n_batches=10**5)
        ev2_b, var_b = cochran_scaling_check(8, 5.0, rng, n_batches=10**5)
        np.testing.assert_allclose(ev2_b / ev2_a, var_b / var_a, rtol=0.05)
