"""Enstrophy estimation, bound envelopes, fitting protocol, regularity checks."""

import numpy as np
import pytest

from stoqg import (
    DIRICHLET_C1,
    EnstrophyTrace,
    InitialCondition,
    ModelParams,
    PathTrajectory,
    SimConfig,
    asymptotics_check,
    build_basis,
    build_spectrum,
    estimate_enstrophy,
    fit_and_validate_bound,
    gamma_threshold,
    holder_exponent_fit,
    lemma1_pathwise_check,
    run_ensemble,
    theorem2_envelope,
    theorem2_shape,
    trace_class_envelope,
    validate_bound,
)


def fake_trajectory(times, omega_sq, index=0, **extra):
    times = np.asarray(times, dtype=float)
    omega_sq = np.asarray(omega_sq, dtype=float)
    zeros = np.zeros_like(omega_sq)
    kw = dict(grad_sq=zeros, u_sq=zeros, wa_sq=zeros, v_inf=zeros)
    kw.update(extra)
    return PathTrajectory(path_index=index, times=times, omega_sq=omega_sq, **kw)


def synthetic_trace(times, ens, se=None):
    times = np.asarray(times, dtype=float)
    ens = np.asarray(ens, dtype=float)
    se = np.zeros_like(ens) if se is None else np.asarray(se, dtype=float)
    return EnstrophyTrace(times=times, ens_mean=ens, ens_se=se, n_paths=2)


class TestEstimator:
    def test_rejects_single_path(self):
        with pytest.raises(ValueError):
            estimate_enstrophy([fake_trajectory([0.0, 1.0], [1.0, 1.0])])

    def test_all_zero_paths(self):
        trajs = [fake_trajectory([0.0, 1.0], [0.0, 0.0], i) for i in range(3)]
        trace = estimate_enstrophy(trajs)
        assert np.all(trace.ens_mean == 0.0) and np.all(trace.ens_se == 0.0)

    def test_two_point_statistics(self):
        trajs = [
            fake_trajectory([0.5], [2.0], 0),
            fake_trajectory([0.5], [4.0], 1),
        ]
        trace = estimate_enstrophy(trajs)
        assert trace.ens_mean[0] == pytest.approx(1.5)
        assert trace.ens_se[0] == pytest.approx(0.5)

    @pytest.mark.parametrize("mu_exp", [2.0, 0.5])  # trace-class and not
    def test_linear_system_matches_analytic(self, mu_exp):
        b = build_basis(8, 1.0)
        spec = build_spectrum(b, 1.0, mu_exp, 0.1)
        params = ModelParams(nu=1.0, r=0.1, beta=0.0, linearized=True, beta_term=False)
        cfg = SimConfig(
            M=8, dt=0.02, T=0.4, output_times=np.round(np.arange(0, 11) * 0.04, 10),
            n_paths=500, master_seed=314,
        )
        trajs = run_ensemble(cfg, params, spec)
        trace = estimate_enstrophy(trajs, spec, b.eigenvalues - params.r)
        assert trace.wa_half_analytic is not None
        dev = np.abs(trace.ens_mean - trace.wa_half_analytic)
        assert np.all(dev <= 3.0 * np.maximum(trace.ens_se, 1e-300))

    def test_se_shrinks_with_sqrt_paths(self):
        b = build_basis(4, 1.0)
        spec = build_spectrum(b, 1.0, 2.0, 0.1)
        params = ModelParams(nu=1.0, r=0.1, beta=0.0, linearized=True, beta_term=False)

        def run(n):
            cfg = SimConfig(M=4, dt=0.02, T=0.2, output_times=np.array([0.2]),
                            n_paths=n, master_seed=9)
            return estimate_enstrophy(run_ensemble(cfg, params, spec)).ens_se[0]

        ratio = run(2000) / run(4000)
        assert ratio == pytest.approx(np.sqrt(2.0), rel=0.1)


class TestGammaThreshold:
    def test_dirichlet_value(self):
        got = gamma_threshold(1.0, 0.1, 0.0, DIRICHLET_C1)
        assert got == pytest.approx(-2 * np.pi**2 - 0.1)
        assert got == pytest.approx(-19.839, abs=1e-3)

    def test_negative_without_beta(self):
        for nu, r in [(0.1, 0.01), (2.0, 5.0), (1e-3, 1e-3)]:
            assert gamma_threshold(nu, r, 0.0) < 0

    def test_algebraic_inversion(self):
        beta = np.pi * np.sqrt(2.0) * (2 * np.pi**2 + 2.0)
        assert gamma_threshold(1.0, 1.0, beta, DIRICHLET_C1) == pytest.approx(1.0)

    def test_rejects_bad_c1(self):
        with pytest.raises(ValueError):
            gamma_threshold(1.0, 0.1, 0.0, c1=0.0)


class TestTraceClassEnvelope:
    def test_long_time_limit(self):
        env = trace_class_envelope(0.0, -1.0, 1.0, np.array([0.0, 1.0, 50.0]))
        assert env.values[-1] == pytest.approx(0.25, rel=1e-10)
        assert env.params["long_time_limit"] == pytest.approx(0.25)

    def test_initial_value(self):
        env = trace_class_envelope(2.5, -3.0, 7.0, np.array([0.0, 0.5]))
        assert env.values[0] == pytest.approx(2.5)

    def test_pure_decay_term(self):
        env = trace_class_envelope(1.0, -1.0, 0.0, np.array([1.0]))
        assert env.values[0] == pytest.approx(np.exp(-2.0), rel=1e-12)

    def test_gamma_zero_limit_form(self):
        env = trace_class_envelope(1.0, 0.0, 2.0, np.array([0.0, 3.0]))
        assert env.params["gamma_zero_limit_form"]
        assert env.values[1] == pytest.approx(1.0 + 3.0, rel=1e-12)  # Ens0 + TrQ t / 2

    def test_validate_dominates(self):
        times = np.linspace(0.0, 1.0, 9)
        env = trace_class_envelope(1.0, -1.0, 1.0, times)
        good = synthetic_trace(times, env.values * 0.9)
        bad = synthetic_trace(times, env.values * 1.1)
        assert validate_bound(good, env).verdict == "pass"
        report = validate_bound(bad, env)
        assert report.verdict == "fail" and len(report.violations) == 9


class TestTheorem2:
    def test_case_b_frozen_value(self):
        # closed-form integral: t (1 - e^(2 gamma t)) / (-2 gamma) + 1 at t=1
        env = theorem2_envelope("b", 0.0, 1.0, -1.0, np.array([1.0]))
        assert env.values[0] == pytest.approx(0.43233235838169365 + 1.0, rel=1e-12)

    def test_case_a_with_unit_exponent_matches_case_b(self):
        times = np.linspace(0.0, 2.0, 7)
        a = theorem2_shape("a", 1.5, -0.7, times, mu_tilde=1.0, mu_exp=2.0)
        b = theorem2_shape("b", 1.5, -0.7, times)
        np.testing.assert_allclose(a, b, rtol=1e-14)

    def test_value_at_time_zero(self):
        env = theorem2_envelope("b", 4.0, 2.0, -1.0, np.array([0.0]))
        assert env.values[0] == pytest.approx(2.0 * (4.0 + 1.0))

    def test_rejects_bad_mu_tilde(self):
        with pytest.raises(ValueError):
            theorem2_shape("a", 0.0, -1.0, np.array([1.0]), mu_tilde=2.5, mu_exp=2.0)
        with pytest.raises(ValueError):
            theorem2_shape("a", 0.0, -1.0, np.array([1.0]), mu_tilde=None, mu_exp=2.0)


class TestFitProtocol:
    def test_self_consistency_recovers_constant(self):
        times = np.linspace(0.0, 1.0, 12)
        shape = theorem2_shape("b", 1.0, -2.0, times)
        trace = synthetic_trace(times, 2.0 * shape)
        report = fit_and_validate_bound(trace, shape, split=0.5, kind="theorem2b")
        assert report.verdict == "pass"
        assert report.fitted["C"] == pytest.approx(2.0, rel=1e-12)

    def test_fit_recovers_generating_constant_within_1pct(self):
        times = np.linspace(0.0, 2.0, 16)
        shape = theorem2_shape("b", 0.5, -1.0, times)
        trace = synthetic_trace(times, 3.7 * shape, se=1e-4 * shape)
        report = fit_and_validate_bound(trace, shape, split=0.5)
        assert report.fitted["C"] == pytest.approx(3.7, rel=0.01)
        assert report.verdict == "pass"

    def test_constructed_counterexample_fails(self):
        gamma = -1.0
        times = np.linspace(0.0, 3.0, 16)
        shape = np.exp(2 * gamma * times) + 1e-12  # decaying envelope family
        trace = synthetic_trace(times, np.exp(3.0 * abs(gamma) * times))
        report = fit_and_validate_bound(trace, shape, split=0.5)
        assert report.verdict == "fail"
        assert report.violations

    def test_degenerate_trace_not_applicable(self):
        times = np.linspace(0.0, 1.0, 10)
        trace = synthetic_trace(times, np.zeros_like(times))
        report = fit_and_validate_bound(trace, np.ones_like(times))
        assert report.verdict == "not_applicable"

    def test_requires_enough_times(self):
        times = np.linspace(0.0, 1.0, 5)
        with pytest.raises(ValueError):
            fit_and_validate_bound(synthetic_trace(times, times), np.ones_like(times))


class TestLemma1:
    def test_zero_noise_zero_forcing_reduces_to_decay(self):
        # V == 0: A = 2 gamma, B = 0; exponential decay dominates for
        # gamma above the threshold (dt small enough that the forward
        # difference does not eat the gamma margin)
        b = build_basis(8, 1.0)
        spec = build_spectrum(b, 0.0, 2.0, 0.1)
        params = ModelParams(nu=1.0, r=0.1, beta=0.0, linearized=False, beta_term=False)
        rng = np.random.default_rng(3)
        ic = tuple(rng.standard_normal(64) / (1.0 + b.sq_wavenumbers / np.pi**2))
        cfg = SimConfig(
            M=8, dt=1e-4, T=0.04, output_times=np.round(np.arange(0, 401) * 1e-4, 12),
            n_paths=1, master_seed=0, initial_condition=InitialCondition("coeffs", coeffs=ic),
        )
        traj = run_ensemble(cfg, params, spec)[0]
        gamma = gamma_threshold(1.0, 0.1, 0.0) + 0.1
        result = lemma1_pathwise_check(traj, gamma)
        assert result["verdict"] == "pass"
        assert result["c_fit"] == 0.0
        assert np.all(result["residuals"] <= 0.0)

    def test_zero_states_give_nonpositive_residuals(self):
        times = np.linspace(0.0, 1.0, 11)
        traj = fake_trajectory(times, np.zeros_like(times))
        result = lemma1_pathwise_check(traj, gamma_threshold(1.0, 0.1, 0.0) + 0.1)
        assert result["verdict"] == "pass"
        assert np.all(result["residuals"] <= 0.0)

    def test_stochastic_run_violation_fraction(self):
        # run long enough that prefix and suffix both sample the
        # statistically stationary regime
        b = build_basis(8, 1.0)
        spec = build_spectrum(b, 1.0, 2.0, 0.1)
        params = ModelParams(nu=1.0, r=0.1, beta=0.0, linearized=False, beta_term=False)
        cfg = SimConfig(
            M=8, dt=1e-3, T=1.0, output_times=np.round(np.arange(0, 201) * 5e-3, 12),
            n_paths=1, master_seed=2718,
        )
        traj = run_ensemble(cfg, params, spec)[0]
        gamma = gamma_threshold(1.0, 0.1, 0.0) + 0.1
        result = lemma1_pathwise_check(traj, gamma)
        assert result["verdict"] == "pass"
        assert result["violation_fraction"] <= 0.05


class TestHolderFit:
    LAGS = [1e-3, 3e-3, 1e-2, 3e-2, 1e-1]

    def test_sqrt_trace_recovers_half(self):
        t0 = 1e-8
        times = np.concatenate(([t0], t0 + np.asarray(self.LAGS)))
        trace = synthetic_trace(times, np.sqrt(times))
        result = holder_exponent_fit(trace, (t0, 1.0), self.LAGS)
        assert result["exponent"] == pytest.approx(0.5, abs=0.01)
        assert result["verdict"] == "pass"

    def test_linear_trace_recovers_one(self):
        t0 = 1e-8
        times = np.concatenate(([t0], t0 + np.asarray(self.LAGS)))
        trace = synthetic_trace(times, times)
        result = holder_exponent_fit(trace, (t0, 1.0), self.LAGS)
        assert result["exponent"] == pytest.approx(1.0, abs=0.01)
        assert result["verdict"] == "pass"

    def test_noise_floor_triggers_not_applicable(self):
        t0 = 1e-8
        times = np.concatenate(([t0], t0 + np.asarray(self.LAGS)))
        trace = synthetic_trace(times, np.sqrt(times), se=np.full(len(times), 10.0))
        result = holder_exponent_fit(trace, (t0, 1.0), self.LAGS)
        assert result["verdict"] == "not_applicable"
        assert result["exponent"] is None

    def test_requires_lag_span(self):
        trace = synthetic_trace(np.linspace(0.01, 1.0, 100), np.linspace(0.01, 1.0, 100))
        with pytest.raises(ValueError):
            holder_exponent_fit(trace, (0.01, 1.0), [0.01, 0.02, 0.03, 0.04, 0.05])

    def test_uniform_grid_pairs(self):
        # on a uniform grid every lag has many (t, t+h) pairs; for a concave
        # increasing trace the max increment sits at the window start, so the
        # recorded maxima must equal the closed form there
        times = np.round(np.arange(1, 201) * 1e-3, 12)
        trace = synthetic_trace(times, times**0.75)
        lags = [1e-3, 4e-3, 1e-2, 4e-2, 1e-1]
        result = holder_exponent_fit(trace, (1e-3, 0.2), lags)
        t0 = 1e-3
        expected = [(t0 + h) ** 0.75 - t0**0.75 for h in lags]
        np.testing.assert_allclose(result["max_increments"], expected, rtol=1e-9)
        assert result["verdict"] == "pass"


class TestAsymptotics:
    def zero_mode_linear_run(self, n_paths=64, r=0.1):
        b = build_basis(4, 1.0)
        spec = build_spectrum(b, 1.0, 2.0, 0.1)
        params = ModelParams(nu=1.0, r=r, beta=0.0, linearized=True, beta_term=False)
        times = np.round(np.array([0.0, 1e-3, 2e-3, 4e-3, 8e-3, 1.6e-2, 3.2e-2]), 12)
        cfg = SimConfig(M=4, dt=1e-3, T=0.032, output_times=times,
                        n_paths=n_paths, master_seed=555)
        trajs = run_ensemble(cfg, params, spec)
        return spec, estimate_enstrophy(trajs, spec, b.eigenvalues - params.r)

    def test_zero_mode_empirical_ratio_is_one_for_linear_runs(self):
        spec, trace = self.zero_mode_linear_run()
        result = asymptotics_check(trace, spec, "zero", delta=0.5)
        ratios = np.asarray(result["ratio_empirical"])
        np.testing.assert_allclose(ratios, 1.0, rtol=1e-12)

    def test_general_mode_deterministic_decay_exponent_one(self):
        # omega_0 = phi_11, zero noise: |Ens(t) - Ens(0)| = O(t) exactly
        b = build_basis(2, 1.0)
        spec = build_spectrum(b, 0.0, 2.0, 0.1)
        params = ModelParams(nu=1.0, r=0.1, beta=0.0, linearized=False, beta_term=False)
        times = np.round(np.concatenate(([0.0], np.geomspace(1e-4, 1e-3, 7))), 12)
        snapped = np.unique(np.round(times / 1e-4) * 1e-4)
        cfg = SimConfig(M=2, dt=1e-4, T=1e-3, output_times=snapped,
                        n_paths=2, master_seed=1,
                        initial_condition=InitialCondition("coeffs", coeffs=(1.0, 0.0, 0.0, 0.0)))
        trace = estimate_enstrophy(run_ensemble(cfg, params, spec), spec, b.eigenvalues - 0.1)
        result = asymptotics_check(trace, spec, "general", delta=0.5, gamma_reg=1.0)
        assert result["exponent"] == pytest.approx(1.0, abs=0.05)
        assert result["verdict"] == "pass"

    def test_general_mode_noise_floor(self):
        times = np.array([0.0, 1e-4, 1e-3, 1e-2])
        trace = synthetic_trace(times, np.full(4, 5.0), se=np.full(4, 2.0))
        spec = build_spectrum(build_basis(2, 1.0), 1.0, 2.0, 0.1)
        result = asymptotics_check(trace, spec, "general", delta=0.5, ens0=5.0)
        assert result["verdict"] == "not_applicable"

    def test_rejects_unknown_mode(self):
        spec = build_spectrum(build_basis(2, 1.0), 1.0, 2.0, 0.1)
        trace = synthetic_trace(np.array([1e-3, 1e-2, 1e-1]), np.array([1.0, 1.0, 1.0]))
        with pytest.raises(ValueError):
            asymptotics_check(trace, spec, "weird", delta=0.5)
