"""Diagonal operator, exact inversion, ill-posedness and conditional stability."""

import math

import numpy as np
import pytest

from fracbackward.exceptions import ConfigurationError, ParameterError
from fracbackward.forward import effective_data, forward_solve
from fracbackward.inverse import (
    amplification_table,
    apply_T,
    build_operator,
    conditional_stability_check,
    conditional_stability_sides,
    exact_backward,
    illposedness_demo,
)
from fracbackward.spectral import (
    SourceSet,
    SpectralField,
    TimeSource,
    build_domain,
    synthesize_source_member,
)


@pytest.fixture(scope="module")
def op_classical(domain):
    return build_operator(domain, 1.0, 1.0)


def test_apply_T_classical(op_classical, domain):
    assert apply_T(op_classical, SpectralField.unit(domain, 1)).coeffs[0] == pytest.approx(0.36787944, abs=1e-8)
    assert apply_T(op_classical, SpectralField.zeros(domain)).norm() == 0.0


def test_self_adjoint(op, domain):
    rng = np.random.default_rng(0)
    for _ in range(20):
        g = SpectralField(rng.normal(size=256), domain)
        w = SpectralField(rng.normal(size=256), domain)
        assert apply_T(op, g).inner(w) == pytest.approx(g.inner(apply_T(op, w)), rel=1e-12, abs=1e-14)


def test_norm_contraction(op, domain):
    g = SpectralField(np.random.default_rng(1).normal(size=256), domain)
    assert apply_T(op, g).norm() <= op.kappas[0] * g.norm() * (1 + 1e-14)


def test_reciprocal_classical(op_classical, domain):
    g = exact_backward(op_classical, SpectralField.unit(domain, 2))
    assert g.coeffs[1] == pytest.approx(math.exp(16), rel=1e-13)
    assert g.coeffs[1] == pytest.approx(8886110.52, abs=0.01)


def test_diagonal_identity(op, domain):
    g = SpectralField(np.random.default_rng(2).normal(size=256), domain)
    back = exact_backward(op, apply_T(op, g))
    np.testing.assert_allclose(back.coeffs, g.coeffs, rtol=1e-12)


# classical kappa_n = exp(-n^4) underflows from n = 6 on (0, pi), so the
# classical round trip uses a longer box where every stored kappa_n is a
# normal double and roundoff in h_n - Psi_n is not amplified past 1e-8
@pytest.mark.parametrize("alpha,side,modes", [(0.5, math.pi, 256), (1.0, 20 * math.pi, 64)])
@pytest.mark.parametrize("const_source", [False, True])
def test_round_trip(alpha, side, modes, const_source):
    domain = build_domain(1, side, modes)
    rng = np.random.default_rng(3)
    c = np.zeros(modes)
    c[:20] = rng.normal(size=20)
    g = SpectralField(c, domain)
    f = (
        TimeSource.constant(domain, 1.0, rng.normal(size=modes) * 0.1)
        if const_source
        else TimeSource.zero(domain, 1.0)
    )
    h = forward_solve(domain, alpha, g, f, 1.0).final_value()
    op = build_operator(domain, alpha, 1.0)
    back = exact_backward(op, effective_data(h, f, alpha, 1.0))
    assert (back - g).norm() / g.norm() <= 1e-8


def test_domain_mismatch(op):
    with pytest.raises(ConfigurationError):
        apply_T(op, SpectralField.zeros(build_domain(1, 1.0, 256)))


def test_tau_positive(domain):
    with pytest.raises(ParameterError):
        build_operator(domain, 0.5, 0.0)


class TestKappa:
    def test_positive_decreasing(self, op):
        assert np.all(op.kappas > 0) and np.all(np.diff(op.kappas) < 0)

    @pytest.mark.parametrize("alpha", [0.3, 0.5, 0.8])
    @pytest.mark.parametrize("tau", [0.5, 1.0, 2.0])
    def test_two_sided(self, domain, alpha, tau):
        o = build_operator(domain, alpha, tau)
        lam2 = domain.eigenvalues**2
        c = o.constants
        assert np.all(c.c4 / lam2 <= o.kappas * (1 + 1e-12))
        assert np.all(o.kappas <= c.kappa_upper / lam2 * (1 + 1e-12))

    def test_amplification_monotone(self, op):
        amp = op.amplification()
        assert np.all(np.diff(amp) > 0)

    def test_table(self, op):
        rows = amplification_table(op).strip().splitlines()
        assert rows[0] == "n,lambda_n,kappa_n,ratio" and len(rows) == 257
        n, lam, k, r = rows[17].split(",")
        assert int(n) == 17 and float(r) == pytest.approx(1 / float(k), rel=1e-15)


class TestIllposedness:
    def test_classical_example(self, op_classical):
        rep = illposedness_demo(op_classical, 2)
        assert rep.data_perturbation == pytest.approx(0.25, rel=1e-15)
        assert rep.solution_perturbation == pytest.approx(math.exp(16) / 4, rel=1e-12)
        assert rep.solution_perturbation == pytest.approx(2.22e6, rel=2e-3)

    def test_ratio_growth(self, op):
        r = illposedness_demo(op, 32).ratio / illposedness_demo(op, 16).ratio
        assert 8 <= r <= 32

    def test_lower_bound(self, op):
        for n in (1, 5, 50, 256):
            rep = illposedness_demo(op, n)
            assert rep.ratio == pytest.approx(1 / rep.kappa_n, rel=1e-12)
            assert rep.ratio >= rep.ratio_lower_bound * (1 - 1e-12)
            assert rep.data_perturbation == pytest.approx(1 / rep.lambda_n, rel=1e-14)

    def test_visible_amplification(self, op):
        hits = [
            n
            for n in range(1, 257)
            if (rep := illposedness_demo(op, n)).data_perturbation <= 1e-3 and rep.solution_perturbation > 1
        ]
        assert hits

    def test_bad_probe(self, op):
        with pytest.raises(ParameterError):
            illposedness_demo(op, 0)


class TestConditionalStability:
    def test_zero(self, op, domain):
        z = SpectralField.zeros(domain)
        assert conditional_stability_check(z, apply_T(op, z), 2.0, op.constants.c3)

    def test_seeded_members(self, op, domain):
        fails = 0
        for seed in range(100):
            g = synthesize_source_member(domain, SourceSet(1.0, 2.0), seed=seed)
            fails += not conditional_stability_check(g, apply_T(op, g), 2.0, op.constants.c3)
        assert fails == 0

    def test_one_mode_algebra(self, op, domain):
        # g = phi_1: ||g|| = 1, ||g||_p = lambda_1^p, Upsilon = kappa_1, so the
        # inequality reads kappa_1 >= 1 / (C3 lambda_1^2)
        g = SpectralField.unit(domain, 1)
        c3 = op.constants.c3
        lhs, rhs = conditional_stability_sides(g, apply_T(op, g), 2.0, c3)
        lam = domain.lambda1
        assert lhs == 1.0
        assert rhs == pytest.approx((c3 * lam**2 * op.kappas[0]) ** 0.5, rel=1e-14)
        assert op.kappas[0] >= 1 / (c3 * lam**2)
        # a constant too small to cover kappa_1 must break the inequality
        assert not conditional_stability_check(g, apply_T(op, g), 2.0, 0.5 / (op.kappas[0] * lam**2))

    @pytest.mark.parametrize("p", [0.5, 1.0, 4.0])
    def test_other_smoothness(self, op, domain, p):
        for seed in range(10):
            g = synthesize_source_member(domain, SourceSet(2.0, p), seed=seed)
            assert conditional_stability_check(g, apply_T(op, g), p, op.constants.c3)

    def test_invalid_p(self, op, domain):
        with pytest.raises(ParameterError):
            conditional_stability_sides(SpectralField.zeros(domain), SpectralField.zeros(domain), 0.0, 1.0)


def test_underflowed_modes(op_classical, domain):
    assert op_classical.kappas[5] == 0.0 and op_classical.kappas[4] > 0
    g = exact_backward(op_classical, SpectralField.unit(domain, 1))
    assert np.all(np.isfinite(g.coeffs)) and np.all(g.coeffs[1:] == 0)
    assert exact_backward(op_classical, SpectralField.unit(domain, 6)).coeffs[5] == np.inf
