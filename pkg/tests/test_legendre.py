import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pss.errors import MalformedInputError, QuadratureBudgetError, SurrogateViolationError, TruncationInsufficientError
from pss.legendre import (LegendreSurrogate, coefficient_bound, estimate_surrogate, legendre_1d,
                          legendre_coeffs_quadrature, legendre_table)
from pss.model import FemSpace, assemble, constant_family, disjoint_inclusions
from pss.multiindex import IndexSet, MultiIndex, box_set, total_degree_set

Z = MultiIndex.zero()


def e(p, k=1):
    return MultiIndex.unit(p, k)


class TestPolynomials:
    def test_against_numpy(self):
        t = np.linspace(-1, 1, 41)
        P, L = legendre_table(t, 9)
        for k in range(10):
            want = np.polynomial.legendre.Legendre.basis(k)(t)
            assert np.allclose(P[k], want, atol=1e-13)
            assert np.allclose(L[k], math.sqrt(2 * k + 1) * want, atol=1e-12)

    def test_normalization(self):
        x, w = np.polynomial.legendre.leggauss(30)
        _, L = legendre_table(x, 12)
        gram = (L * w / 2) @ L.T
        assert np.allclose(gram, np.eye(13), atol=1e-13)
        assert legendre_1d(7, 1.0)[0] == pytest.approx(1.0)

    def test_negative_degree(self):
        with pytest.raises(MalformedInputError):
            legendre_1d(-1, 0.0)


class TestQuadrature:
    def test_recovers_legendre_polynomial(self):
        lam = box_set(2, 3)
        coef = np.random.default_rng(0).normal(size=len(lam))

        def f(y):
            _, L1 = legendre_table(y[0], 3)
            _, L2 = legendre_table(y[1], 3)
            return np.array([sum(c * L1[nu[1]] * L2[nu[2]] for c, nu in zip(coef, lam))])

        res = legendre_coeffs_quadrature(f, lam, 2, 5)
        assert np.allclose(res.v[0], coef, atol=1e-13)
        assert res.solves == 25
        y = np.array([0.3, -0.7])
        assert res.evaluate(y)[0] == pytest.approx(f(y)[0], abs=1e-13)

    def test_w_scaling(self):
        sp = FemSpace(31)
        stiff = assemble(constant_family(sp, [0.5]), sp)
        res = legendre_coeffs_quadrature(stiff, total_degree_set(1, 6), 1, 20)
        for k in range(7):
            assert res.w_norms[k] == pytest.approx(math.sqrt(2 * k + 1) * res.v_norms[k])

    def test_parseval_scalar_model(self):
        # |u|^2 in L2(dy/2) equals the sum of squared orthonormal coefficients
        sp = FemSpace(31)
        stiff = assemble(constant_family(sp, [0.5]), sp)
        res = legendre_coeffs_quadrature(stiff, total_degree_set(1, 40), 1, 60)
        u0 = stiff.v_norm(stiff.solve([0.0]))
        # u(y) = u(0) / (1 + 0.5 y) and int_{-1}^{1} (1 + 0.5 y)^(-2) dy / 2 = 4/3
        assert np.sum(res.v_norms ** 2) == pytest.approx(u0 ** 2 * 4 / 3, rel=1e-10)

    def test_budget_and_validation(self):
        with pytest.raises(QuadratureBudgetError):
            legendre_coeffs_quadrature(lambda y: y, box_set(4, 2), 4, 40)
        with pytest.raises(MalformedInputError):
            legendre_coeffs_quadrature(lambda y: y, box_set(2, 5), 2, 5)
        with pytest.raises(MalformedInputError):
            legendre_coeffs_quadrature(lambda y: y, box_set(2, 1), 5, 3)
        with pytest.raises(MalformedInputError):
            legendre_coeffs_quadrature(lambda y: y, box_set(3, 1), 2, 3)


class TestSurrogate:
    def test_anchor_and_constants(self):
        s = LegendreSurrogate([0.4, 0.2, 0.1], 0.5)
        assert s(Z) == 1.0
        assert s.kappa == pytest.approx(1 + 0.5 / (3 * 0.7))
        assert s.c_kappa == pytest.approx(math.pi * s.kappa / (2 * (s.kappa - 1)))
        assert s.beta == pytest.approx(max(2 * math.e, 3 * s.c_kappa * math.e))
        assert s.J == 3
        assert estimate_surrogate([0.4, 0.2, 0.1], 0.5, e(1)) == pytest.approx(s.eta)

    def test_split_dimension(self):
        b = [0.5 * j ** -3.0 for j in range(1, 41)]
        s = LegendreSurrogate(b, 0.5)
        tail = sum(b[s.J:])
        assert tail <= 0.5 / (3 * s.beta)
        assert sum(b[s.J - 1:]) > 0.5 / (3 * s.beta)

    def test_truncation_error(self):
        with pytest.raises(TruncationInsufficientError):
            LegendreSurrogate([0.5], 0.5, tail_l1=1.0)

    def test_validation(self):
        with pytest.raises(MalformedInputError):
            LegendreSurrogate([0.1, 0.2], 0.5)
        with pytest.raises(MalformedInputError):
            LegendreSurrogate([0.1], 0.0)

    @settings(max_examples=60, deadline=None)
    @given(st.lists(st.integers(0, 4), min_size=1, max_size=8), st.integers(1, 8))
    def test_monotone(self, dense, j):
        b = [0.5 * k ** -3.0 for k in range(1, 41)]
        s = LegendreSurrogate(b, 0.5)
        nu = MultiIndex.from_dense(dense)
        assert s(nu.plus(j)) <= s(nu) * (1 + 1e-12)

    def test_violation_detected(self):
        s = LegendreSurrogate([0.4, 0.2, 0.1], 0.5)
        s.eta = 1.5
        with pytest.raises(SurrogateViolationError):
            s(e(1))


class TestCoefficientBound:
    def test_single_variable_closed_form(self):
        b, eps, k = 0.3, 0.2, 5
        rho = 1 + eps / b
        want = 2.0 * math.pi * rho / (2 * (rho - 1)) * (1 + 2 * k) * rho ** -k
        assert coefficient_bound([b], eps, e(1, k), 2.0) == pytest.approx(want)
        assert coefficient_bound([b], eps, Z, 2.0) == 2.0
        assert coefficient_bound([b], eps, e(2), 2.0) == 0.0

    def test_bound_is_a_minimum_over_splits(self):
        b, eps = np.array([0.3, 0.2]), 0.4
        nu = MultiIndex({1: 3, 2: 2})
        got = coefficient_bound(b, eps, nu, 1.0)
        for w in np.linspace(0.05, 0.95, 19):
            s = eps * np.array([w, 1 - w]) / b
            rho = 1 + s
            val = np.prod(np.pi * rho / (2 * s) * (1 + 2 * np.array([3, 2])) * rho ** -np.array([3, 2]))
            assert got <= val * (1 + 1e-9)

    def test_dominates_computed_coefficients(self):
        sp = FemSpace(63)
        stiff = assemble(disjoint_inclusions(sp, [0.5, 0.3]), sp)
        lam = box_set(2, 8)
        res = legendre_coeffs_quadrature(stiff, lam, 2, 20)
        constant = 1.1 * res.w_norms[0]
        eps = stiff.r / 2
        for i, nu in enumerate(lam):
            assert res.w_norms[i] <= coefficient_bound(stiff.family.norms, eps, nu, constant)
