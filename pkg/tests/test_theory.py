"""Bound calculators against hand-computed values and independent oracles."""

import math

import numpy as np
import pytest

from vropt import theory
from vropt.numerics import RngStream
from vropt.problems import NoiseSchedule


def _hand_trace():
    """1-D quadratic, l = L = 1, gamma = 0.5, x0 = 1, noise [0.3, -0.2].

    Every number below is worked out by direct substitution:
      x1 = 1 - 0.5*(1 + 0.3)  = 0.35,   f1 = 0.06125
      x2 = 0.35 - 0.5*(0.35 - 0.2) = 0.275, f2 = 0.0378125
    """
    x = np.array([[1.0], [0.35], [0.275]])
    g = np.array([[1.0], [0.35]])
    eps = np.array([[0.3], [-0.2]])
    f = 0.5 * x[:, 0] ** 2
    r = x[:, 0] ** 2
    return theory.TrajectoryTrace(
        x=x, gamma=np.array([0.5, 0.5]), lam=np.ones(2), g=g, eps=eps, f=f, r=r,
        x_star=np.zeros(1), f_star=0.0,
    )


class TestAverageLossCriterion:
    def test_zero_when_at_optimum(self):
        tr = _hand_trace()
        flat = theory.TrajectoryTrace(
            x=tr.x * 0, gamma=tr.gamma, lam=tr.lam, g=tr.g * 0, eps=tr.eps,
            f=np.zeros(3), r=np.zeros(3), x_star=tr.x_star, f_star=0.0,
        )
        assert theory.average_loss_criterion(flat) == 0.0

    def test_simple_mean(self):
        tr = _hand_trace()
        shifted = theory.TrajectoryTrace(
            x=tr.x, gamma=tr.gamma, lam=tr.lam, g=tr.g, eps=tr.eps,
            f=np.array([0.0, 2.0, 4.0]), r=tr.r, x_star=tr.x_star, f_star=0.0,
        )
        assert theory.average_loss_criterion(shifted) == 3.0

    def test_matches_independent_accumulation(self):
        rng = RngStream(50)
        sched = NoiseSchedule(kind="constant", base=0.2)
        tr = theory.simulate_noisy_quadratic(1.0, 2, 100, 0.4, sched, rng)
        direct = sum(tr.f[1:] - tr.f_star) / tr.steps
        np.testing.assert_allclose(theory.average_loss_criterion(tr), direct, rtol=1e-12)


class TestUpperBound:
    def test_noise_free_single_step(self):
        """With no noise and T = 1 the bound collapses to M^2/(2 gamma)."""
        tr = theory.TrajectoryTrace(
            x=np.array([[1.0], [0.5]]), gamma=np.array([0.5]), lam=np.ones(1),
            g=np.array([[1.0]]), eps=np.array([[0.0]]), f=np.array([0.5, 0.125]),
            r=np.array([1.0, 0.25]), x_star=np.zeros(1), f_star=0.0,
        )
        assert theory.upper_bound_S_T(tr, 1.0, 2.0) == 2.0 / (2 * 0.5 * 1)

    def test_hand_computed_two_step_example(self):
        """All three terms substituted by hand for the fixture trace."""
        tr = _hand_trace()
        term1 = 1.0 / (2 * 0.5 * 2)
        term2 = 0.5 * 1.5 * (0.3**2 + 0.2**2) / (2 * 2)
        term3 = (0.3 * (1 - 0.25 * 1.0) + (-0.2) * (0.35 - 0.25 * 0.35)) / 2
        expected = term1 + term2 - term3
        got = theory.upper_bound_S_T(tr, 1.0, 1.0)
        np.testing.assert_allclose(got, expected, rtol=1e-12)
        assert theory.average_loss_criterion(tr) <= got

    def test_rate_above_lipschitz_rejected(self):
        tr = _hand_trace()  # gamma = 0.5; L = 3 makes 1/L = 0.33 < gamma
        with pytest.raises(ValueError):
            theory.upper_bound_S_T(tr, 3.0, 1.0)

    def test_increasing_rates_rejected(self):
        tr = _hand_trace()
        bad = theory.TrajectoryTrace(
            x=tr.x, gamma=np.array([0.3, 0.5]), lam=tr.lam, g=tr.g, eps=tr.eps,
            f=tr.f, r=tr.r, x_star=tr.x_star, f_star=tr.f_star,
        )
        with pytest.raises(ValueError):
            theory.upper_bound_S_T(bad, 2.0, 1.0)

    def test_audit_holds_on_noisy_runs(self):
        """Pathwise inequality at every checkpoint on fresh seeded runs."""
        for i in range(10):
            rng = RngStream(51, stream_id=i)
            sched = NoiseSchedule(kind="two_level", base=0.02, high=0.3, block=10)
            tr = theory.simulate_noisy_quadratic(
                1.3, 2, 120, 0.6 / 1.3, sched, rng, x0=np.array([1.0, -0.5])
            )
            audit = theory.lemma1_audit(tr, lipschitz=1.3)
            assert audit.min_slack >= -1e-10


class TestExpectationBound:
    def test_constant_schedule_collapse(self):
        """gamma constant: bound = M^2/(2 gamma T) + gamma sigma0^2."""
        got = theory.expected_bound_theorem1(np.full(100, 0.1), 1.0, 1.0)
        np.testing.assert_allclose(got, 0.05 + 0.1, rtol=1e-12)

    def test_decaying_schedule_arithmetic(self):
        gammas = np.array([0.4, 0.2])
        got = theory.expected_bound_theorem1(gammas, 2.0, 3.0)
        np.testing.assert_allclose(got, 2.0 / (2 * 0.2 * 2) + 0.6 / 2 * 3.0, rtol=1e-12)

    def test_power_schedule_scaling(self):
        """For gamma_t ~ t^-a the two terms scale as T^(a-1) and T^-a;
        verified as fitted log-log slopes over T in [1e2, 1e5]."""
        a = 0.5
        Ts = np.array([100, 1000, 10000, 100000])
        first, second = [], []
        for T in Ts:
            gammas = (np.arange(1, T + 1, dtype=float)) ** (-a)
            first.append(1.0 / (2 * gammas[-1] * T))
            second.append(gammas.sum() / T)
        s1 = theory.fit_decay_exponent(Ts, np.array(first))
        s2 = theory.fit_decay_exponent(Ts, np.array(second))
        assert abs(s1 - (a - 1.0)) < 0.02
        assert abs(s2 - (-a)) < 0.05


class TestVarianceBound:
    def test_zero_moments(self):
        assert theory.variance_bound_theorem2(100, 1.0, 0.0, 0.0, 1.0) == 0.0

    def test_arithmetic(self):
        got = theory.variance_bound_theorem2(100, 1.0, 1.0, 3.0, 1.0)
        np.testing.assert_allclose(got, 0.07, rtol=1e-12)


class TestLyapunovVariance:
    def test_zero_noise(self):
        assert theory.lyapunov_variance_step(0.1, 0.0, 0.0, 0.0, 2.0) == 0.0

    def test_gaussian_moment_substitution(self):
        """eta4 = 3 sigma^4, iota3 = 0: Var = 2 g^4 s^4 + 4 g^2 s^2 d^2."""
        gamma, s2, d = 0.1, 1.3, 2.0
        got = theory.lyapunov_variance_step(gamma, s2, 0.0, 3 * s2 * s2, d)
        expected = 2 * gamma**4 * s2**2 + 4 * gamma**2 * s2 * d**2
        np.testing.assert_allclose(got, expected, rtol=1e-12)

    def test_monte_carlo_matches_closed_form(self):
        sched = NoiseSchedule(kind="constant", base=1.0)
        closed = theory.lyapunov_variance_step(0.1, 1.0, 0.0, 3.0, 2.0)
        mc = theory.lyapunov_variance_monte_carlo(0.1, 2.0, sched, RngStream(52), 10**6)
        assert abs(mc - closed) / closed < 0.01

    def test_skewed_noise_third_moment_term(self):
        """Centered-exponential noise exercises the iota3 term."""
        sched = NoiseSchedule(kind="constant", base=1.0, dist="exponential")
        s2, i3, e4 = sched.moments(1)
        closed = theory.lyapunov_variance_step(0.2, s2, i3, e4, 1.5)
        mc = theory.lyapunov_variance_monte_carlo(0.2, 1.5, sched, RngStream(53), 10**6)
        assert abs(mc - closed) / closed < 0.02


class TestStrongConvexity:
    def test_bound_arithmetic(self):
        """l = 1, G = 1, R1 = 4: bound at t = 4 is max{4, 1}/4 = 1."""
        assert theory.strong_convexity_bound(1.0, 1.0, 4.0, 4) == 1.0

    def test_zero_noise_recursion(self):
        """With gamma_t = 1/(t l) the first factor (1 - 1/1) kills the
        deterministic part: R_t = 0 for t >= 2, strictly under the bound."""
        a = theory.exact_second_moment_recursion(1.0, 4.0, lambda t: 0.0, 10)
        assert a[0] == 4.0
        np.testing.assert_array_equal(a[1:], np.zeros(9))

    def test_exact_recursion_matches_monte_carlo(self):
        """The linear-dynamics second-moment recursion is the oracle for the
        simulated ensemble mean."""
        l, r1, s2, T, n = 1.0, 4.0, 1.0, 200, 4000
        a = theory.exact_second_moment_recursion(l, r1, lambda t: s2, T)
        streams = [RngStream(54, stream_id=i) for i in range(n)]
        noise = np.stack([s.normals(T - 1) for s in streams], axis=1)
        x = np.full(n, 2.0)
        for t in range(1, T):
            gam = 1.0 / (t * l)
            x = x * (1 - gam * l) - gam * noise[t - 1]
        emp = (x * x).mean()
        se = (x * x).std() / math.sqrt(n)
        assert abs(emp - a[-1]) < 3 * se

    def test_rate_check_passes(self):
        g_sq = theory.valid_g_sq(1.0, 4.0, 1.0, 300)
        report = theory.strong_convexity_rate_check(
            1.0, g_sq, 4.0, 300, 300, 1.0, seed=55
        )
        assert report.passed
        assert report.cond_var_slope < report.gamma_sq_slope


class TestQtObjective:
    def test_zero_lambdas(self):
        assert theory.qt_objective(np.zeros(5), np.ones(5), 2.0) == 0.0

    def test_arithmetic(self):
        got = theory.qt_objective([1.0, 1.0], [1.0, 1.0], 2.0)
        np.testing.assert_allclose(got, 3.0, rtol=1e-15)

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            theory.qt_objective([1.0], [1.0, 2.0], 2.0)

    def test_midpoint_convexity(self):
        rng = RngStream(56)
        for _ in range(30):
            T = 4 + rng.index_uniform(10)
            s2 = np.exp(rng.normals(T))
            a, b = rng.normals(T) + 1, rng.normals(T) + 1
            lam0 = 1.0 + rng.uniform01() * 4
            mid = theory.qt_objective((a + b) / 2, s2, lam0)
            assert mid <= (theory.qt_objective(a, s2, lam0)
                           + theory.qt_objective(b, s2, lam0)) / 2 + 1e-12


class TestClosedFormOptimum:
    def test_equal_variances_give_unit_lambdas(self):
        lams = theory.optimal_lambdas_closed_form(np.full(7, 2.5), 3.0)
        np.testing.assert_allclose(lams, np.ones(7), rtol=1e-14)

    def test_hand_example(self):
        """sigma^2 = [1, 2], lambda0 = 2: harmonic-style mean 4/3 gives
        lambdas [5/3, 1/3] summing to exactly 2."""
        lams = theory.optimal_lambdas_closed_form([1.0, 2.0], 2.0)
        np.testing.assert_allclose(lams, [5.0 / 3.0, 1.0 / 3.0], rtol=1e-14)
        assert abs(lams.sum() - 2.0) < 1e-10

    def test_nonpositive_variance_rejected(self):
        with pytest.raises(ValueError):
            theory.optimal_lambdas_closed_form([1.0, 0.0], 2.0)

    def test_matches_projected_gradient_oracle(self):
        rng = RngStream(57)
        for _ in range(10):
            T = 3 + rng.index_uniform(18)
            lam0 = 1.0 + rng.uniform01() * 4
            s2 = 1.0 + (rng.uniforms(T) * 2 - 1) * 0.1
            closed = theory.optimal_lambdas_closed_form(s2, lam0)
            numeric = theory.minimize_qt_projected_gradient(s2, lam0)
            np.testing.assert_allclose(closed, numeric, atol=1e-6)

    def test_optimum_beats_perturbations(self):
        rng = RngStream(58)
        s2 = 1.0 + (rng.uniforms(10) * 2 - 1) * 0.08
        lams = theory.optimal_lambdas_closed_form(s2, 2.0)
        q_star = theory.qt_objective(lams, s2, 2.0)
        for _ in range(1000):
            z = rng.normals(10) * 0.1
            z -= z.mean()  # stay on the constraint plane
            assert q_star <= theory.qt_objective(lams + z, s2, 2.0) + 1e-12


class TestBoundedRegularizerConsistency:
    def test_zero_spread_zero_deviation(self):
        rep = theory.bounded_regularizer_consistency(np.full(6, 0.9), 2.0)
        assert rep.max_rel_dev_sigmoid < 1e-14

    def test_one_percent_spread(self):
        rng = RngStream(59)
        s2 = 1.0 + (rng.uniforms(32) * 2 - 1) * 0.01
        rep = theory.bounded_regularizer_consistency(s2, 2.0)
        assert rep.max_rel_dev_sigmoid < 1e-3

    def test_quadratic_growth_away_from_degenerate_point(self):
        """At lambda0 = 3 the deviation scales quadratically with spread
        (the quadratic coefficient vanishes at exactly lambda0 = 2)."""
        rng = RngStream(60)
        devs = []
        for spread in (0.01, 0.1):
            s2 = 1.0 + (rng.uniforms(64) * 2 - 1) * spread
            s2[0] = 1.0 + spread
            devs.append(theory.bounded_regularizer_consistency(s2, 3.0).max_rel_dev_sigmoid)
        assert 50.0 <= devs[1] / devs[0] <= 200.0


class TestTraceValidation:
    def test_inconsistent_lengths(self):
        with pytest.raises(ValueError):
            theory.TrajectoryTrace(
                x=np.zeros((3, 1)), gamma=np.ones(1), lam=np.ones(1),
                g=np.zeros((1, 1)), eps=np.zeros((1, 1)), f=np.zeros(2),
                r=np.zeros(2), x_star=np.zeros(1), f_star=0.0,
            )

    def test_negative_distance(self):
        with pytest.raises(ValueError):
            theory.TrajectoryTrace(
                x=np.zeros((2, 1)), gamma=np.ones(1), lam=np.ones(1),
                g=np.zeros((1, 1)), eps=np.zeros((1, 1)), f=np.zeros(2),
                r=np.array([1.0, -1.0]), x_star=np.zeros(1), f_star=0.0,
            )

    def test_simulation_records_consistent_fields(self):
        rng = RngStream(61)
        sched = NoiseSchedule(kind="constant", base=0.1)
        tr = theory.simulate_noisy_quadratic(2.0, 3, 50, 0.2, sched, rng)
        np.testing.assert_allclose(tr.f, 0.5 * 2.0 * (tr.x**2).sum(axis=1), rtol=1e-12)
        np.testing.assert_allclose(tr.r, (tr.x**2).sum(axis=1), rtol=1e-12)
        np.testing.assert_allclose(tr.g, 2.0 * tr.x[:-1], rtol=1e-12)
        rebuilt = tr.x[:-1] - tr.gamma[:, None] * (tr.g + tr.eps)
        np.testing.assert_allclose(tr.x[1:], rebuilt, rtol=1e-12)
