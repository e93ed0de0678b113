"""Forward representation, source influence and interior stability."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from fracbackward.constants import derived_constants
from fracbackward.exceptions import ConfigurationError, DomainError, ParameterError
from fracbackward.forward import (
    decay_rates,
    effective_data,
    forward_solve,
    psi,
    psi_modes,
    relaxation,
    stability_bound,
    stability_bound_check,
)
from fracbackward.inverse import apply_T, build_operator
from fracbackward.mittag_leffler import MLOrder, ml_eval
from fracbackward.spectral import (
    SourceSet,
    SpectralField,
    TimeSource,
    build_domain,
    inject_noise,
    synthesize_source_member,
)

from oracles import erfc_ml_half

PSI_HALF = 1.0 - erfc_ml_half(1.0)


def random_sampled(domain, tau, pieces, rng, scale=1.0):
    inner = np.sort(rng.uniform(0, tau, pieces - 1))
    times = np.concatenate([[0.0], inner, [tau]])
    values = rng.normal(scale=scale, size=(pieces, domain.n_modes))
    return TimeSource.sampled(domain, times, values)


class TestPsi:
    def test_zero_time(self):
        assert psi(0.5, 3.0, 2.0, 0.0, tau=1.0) == 0.0

    def test_erfc_value(self):
        assert PSI_HALF == pytest.approx(0.57241642, abs=1e-8)
        assert psi(0.5, 1.0, 1.0, 1.0) == pytest.approx(PSI_HALF, abs=1e-13)

    def test_classical(self):
        assert psi(1.0, 2.0, 3.0, 1.0) == pytest.approx(1.5 * (1 - math.exp(-2)), rel=1e-14)
        # 3(1 - e^-2)/2 = 1.2969970751
        assert psi(1.0, 2.0, 3.0, 1.0) == pytest.approx(1.29699709, abs=2e-8)

    def test_outside_horizon(self):
        with pytest.raises(DomainError):
            psi(0.5, 1.0, 1.0, -0.1)
        with pytest.raises(DomainError):
            psi(0.5, 1.0, ([0.0, 1.0], [1.0]), 1.5)

    def test_bad_alpha(self):
        with pytest.raises(ParameterError):
            psi(1.5, 1.0, 1.0, 1.0)

    @pytest.mark.parametrize("alpha", [0.3, 0.7])
    def test_sampled_against_quadrature(self, alpha):
        # direct convolution with substitution w = (t-s)^alpha per piece
        times, vals = [0.0, 0.2, 0.55, 1.0], [1.0, -2.0, 0.5]
        lam2, t = 4.0, 0.8
        order = MLOrder(alpha, alpha)

        def piece(a, b):
            wa, wb = (t - b) ** alpha, (t - a) ** alpha
            f = lambda w: ml_eval(order, -lam2 * w) / alpha
            return integrate.quad(f, wa, wb, epsabs=1e-14, epsrel=1e-13)[0]

        ref = sum(v * piece(a, min(b, t)) for a, b, v in zip(times, times[1:], vals) if a < t)
        assert psi(alpha, lam2, (times, vals), t) == pytest.approx(ref, rel=1e-10)

    def test_sampled_constant_matches_constant(self):
        val = psi(0.5, 9.0, ([0.0, 0.3, 0.6, 1.0], [2.0, 2.0, 2.0]), 1.0)
        assert val == pytest.approx(psi(0.5, 9.0, 2.0, 1.0), rel=1e-12)


class TestPsiModes:
    def test_sampled_equals_scalar(self, small_domain):
        rng = np.random.default_rng(3)
        src = random_sampled(small_domain, 1.0, 6, rng)
        for t in [0.13, 0.5, 1.0]:
            got = psi_modes(src, 0.5, t)
            rates = decay_rates(small_domain)
            ref = [psi(0.5, float(rates[n]), (src.times, src.values[:, n]), t) for n in range(32)]
            np.testing.assert_allclose(got, ref, rtol=1e-12, atol=1e-15)

    def test_bound(self, domain):
        rng = np.random.default_rng(11)
        rates = decay_rates(domain)
        for trial in range(8):
            src = random_sampled(domain, 1.0, 5, rng, scale=rng.uniform(0.1, 10))
            t = rng.uniform(0, 1)
            for alpha in (0.3, 0.5, 0.9, 1.0):
                vals = psi_modes(src, alpha, t)
                assert np.all(np.abs(vals) <= src.sup_norm / rates * (1 + 1e-12))

    def test_lipschitz(self, small_domain):
        rng = np.random.default_rng(5)
        rates = decay_rates(small_domain)
        for _ in range(20):
            a = random_sampled(small_domain, 1.0, 4, rng)
            b = TimeSource.sampled(small_domain, a.times, a.values + rng.normal(scale=0.1, size=a.values.shape))
            diff = np.abs(psi_modes(a, 0.5, 1.0) - psi_modes(b, 0.5, 1.0))
            assert np.all(diff <= a.difference_sup(b) / rates * (1 + 1e-12))

    def test_rates_guard(self, small_domain):
        from fracbackward.forward import _require_rates

        with pytest.raises(ParameterError):
            _require_rates(small_domain, small_domain.eigenvalues)


class TestForwardSolve:
    def test_classical_single_mode(self):
        d = build_domain(1, math.pi, 8)
        sol = forward_solve(d, 1.0, SpectralField.unit(d, 1), TimeSource.zero(d, 1.0), 1.0)
        c = sol.coefficients(1.0)
        assert c[0] == pytest.approx(0.36787944, abs=1e-8)
        assert np.all(c[1:] == 0)

    def test_source_only(self, small_domain):
        f = TimeSource.constant(small_domain, 1.0, SpectralField.unit(small_domain, 1).coeffs)
        sol = forward_solve(small_domain, 0.5, SpectralField.zeros(small_domain), f, 1.0)
        assert sol.mode_eval(1, 1.0) == pytest.approx(0.57241642, abs=1e-8)

    def test_initial_condition(self, small_domain):
        rng = np.random.default_rng(0)
        g = SpectralField(rng.normal(size=32), small_domain)
        sol = forward_solve(small_domain, 0.5, g, random_sampled(small_domain, 2.0, 3, rng), 2.0)
        np.testing.assert_array_equal(sol.coefficients(0.0), g.coeffs)

    def test_representation(self, small_domain):
        rng = np.random.default_rng(1)
        g = SpectralField(rng.normal(size=32), small_domain)
        src = random_sampled(small_domain, 1.0, 4, rng)
        sol = forward_solve(small_domain, 0.4, g, src, 1.0)
        t = 0.7
        for n in (1, 5, 32):
            lam2 = small_domain.eigenvalues[n - 1] ** 2
            ref = ml_eval(MLOrder(0.4, 1.0), -lam2 * t**0.4) * g.coeffs[n - 1] + psi(
                0.4, lam2, (src.times, src.values[:, n - 1]), t
            )
            assert sol.mode_eval(n, t) == pytest.approx(ref, rel=1e-12, abs=1e-15)

    def test_continuity(self, small_domain):
        rng = np.random.default_rng(2)
        g = SpectralField(rng.normal(size=32), small_domain)
        src = random_sampled(small_domain, 1.0, 5, rng)
        sol = forward_solve(small_domain, 0.5, g, src, 1.0)
        # largest step on a grid shrinks as the grid is refined, including across breakpoints
        steps = []
        for h in (1e-3, 1e-5, 1e-7):
            ts = np.concatenate([src.times[1:-1] - h / 2, [0.3, 0.9]])
            steps.append(max(np.max(np.abs(sol.coefficients(t + h) - sol.coefficients(t))) for t in ts))
        assert steps[1] < steps[0] / 5 and steps[2] < steps[1] / 5

    def test_mismatch(self, small_domain):
        other = build_domain(1, 1.0, 32)
        with pytest.raises(ConfigurationError):
            forward_solve(small_domain, 0.5, SpectralField.zeros(other), TimeSource.zero(small_domain, 1.0), 1.0)
        with pytest.raises(ConfigurationError):
            forward_solve(small_domain, 0.5, SpectralField.zeros(small_domain), TimeSource.zero(small_domain, 2.0), 1.0)

    def test_outside_time(self, small_domain):
        sol = forward_solve(small_domain, 0.5, SpectralField.zeros(small_domain), TimeSource.zero(small_domain, 1.0), 1.0)
        with pytest.raises(DomainError):
            sol.coefficients(1.5)
        with pytest.raises(ParameterError):
            sol.mode_eval(33, 0.5)

    def test_final_value_effective_data_is_T(self, small_domain):
        rng = np.random.default_rng(9)
        g = SpectralField(rng.normal(size=32), small_domain)
        src = random_sampled(small_domain, 1.0, 3, rng)
        h = forward_solve(small_domain, 0.5, g, src, 1.0).final_value()
        ups = effective_data(h, src, 0.5, 1.0)
        Tg = apply_T(build_operator(small_domain, 0.5, 1.0), g)
        np.testing.assert_allclose(ups.coeffs, Tg.coeffs, rtol=1e-12, atol=1e-15)


class TestEffectiveData:
    def test_zero_source(self, small_domain):
        h = SpectralField(np.arange(32.0), small_domain)
        ups = effective_data(h, TimeSource.zero(small_domain, 1.0), 0.5, 1.0)
        np.testing.assert_array_equal(ups.coeffs, h.coeffs)

    def test_single_mode(self, small_domain):
        f = TimeSource.constant(small_domain, 1.0, SpectralField.unit(small_domain, 1).coeffs)
        ups = effective_data(SpectralField.zeros(small_domain), f, 0.5, 1.0, "noisy")
        assert ups.coeffs[0] == pytest.approx(-0.57241642, abs=1e-8)
        assert ups.provenance == "noisy"

    @given(seed=st.integers(0, 2**31), alpha=st.floats(0.05, 1.0), scale=st.floats(1e-3, 1e3))
    @settings(max_examples=40, deadline=None)
    def test_norm_bound(self, seed, alpha, scale):
        d = build_domain(1, math.pi, 64)
        rng = np.random.default_rng(seed)
        h = SpectralField(rng.normal(size=64), d)
        src = random_sampled(d, 1.0, 3, rng, scale=scale)
        ups = effective_data(h, src, alpha, 1.0)
        assert ups.norm() ** 2 <= 2 * (h.norm() ** 2 + d.theta * src.sup_norm**2) * (1 + 1e-12)


class TestStability:
    def _pair(self, domain, seed, perturb_f=False):
        rng = np.random.default_rng(seed)
        g = synthesize_source_member(domain, SourceSet(1.0, 2.0), seed=seed)
        f = TimeSource.constant(domain, 1.0, 0.1 * rng.normal(size=domain.n_modes) / np.arange(1, domain.n_modes + 1))
        u = forward_solve(domain, 0.5, g, f, 1.0)
        h = u.final_value()
        nd = inject_noise(h, f, 1e-3, split=0.5 if perturb_f else 1.0, seed=seed)
        ups = effective_data(nd.h_noisy, nd.f_noisy, 0.5, 1.0)
        op = build_operator(domain, 0.5, 1.0)
        g_t = SpectralField(ups.coeffs / op.kappas, domain)
        u_t = forward_solve(domain, 0.5, g_t, nd.f_noisy, 1.0)
        return u, u_t, nd, h, f

    def test_identical(self, domain):
        g = SpectralField.unit(domain, 3)
        u = forward_solve(domain, 0.5, g, TimeSource.zero(domain, 1.0), 1.0)
        assert stability_bound_check(u, u, 0.5)

    def test_perturbed_h_trials(self, small_domain):
        fails = 0
        for seed in range(100):
            u, u_t, nd, h, f = self._pair(small_domain, seed)
            dh = (h - nd.h_noisy).norm() ** 2
            df = f.difference_sup(nd.f_noisy) ** 2
            fails += not stability_bound_check(u, u_t, 0.5, (dh, df))
        assert fails == 0

    def test_perturbed_both(self, small_domain):
        for seed in range(20):
            u, u_t, nd, h, f = self._pair(small_domain, seed, perturb_f=True)
            assert stability_bound_check(u, u_t, 0.5)

    def test_bound_scaling(self):
        c = derived_constants(build_domain(1, math.pi, 8), 0.5, 1.0).stability
        for alpha in (0.3, 0.5, 0.8):
            r = stability_bound(0.1, alpha, 1.0, 1.0, 0.0, c) / stability_bound(0.2, alpha, 1.0, 1.0, 0.0, c)
            assert r == pytest.approx(2 ** (2 * alpha), rel=1e-13)

    def test_endpoints(self, small_domain):
        u = forward_solve(small_domain, 0.5, SpectralField.zeros(small_domain), TimeSource.zero(small_domain, 1.0), 1.0)
        for t in (0.0, 1.0):
            with pytest.raises(DomainError):
                stability_bound_check(u, u, t)


def test_relaxation_monotone(domain):
    k = relaxation(domain, 0.5, 1.0)
    assert np.all(k > 0) and np.all(np.diff(k) < 0)
