import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pss.errors import MalformedInputError, SequenceTooShortError
from pss.interp import (UnivariateSequence, adaptive_interpolate, grid_points, hierarchical_matrix, interpolate,
                        lebesgue_constant, lebesgue_constant_1d, leja_sequence, rleja_sequence, weight_norms)
from pss.model import FemSpace, assemble, disjoint_inclusions
from pss.multiindex import IndexSet, MultiIndex, random_downward_closed
from pss.taylor import monomial_table
from pss.multiindex import product_basis

Z = MultiIndex.zero()


def e(p, k=1):
    return MultiIndex.unit(p, k)


@pytest.fixture(scope="module")
def leja():
    return leja_sequence(30)


def _leja_by_roots(K):
    """Leja points from the critical points of prod (t - t_l), an independent construction."""
    pts = [1.0]
    for _ in range(K):
        poly = np.poly1d(np.poly(pts))
        crit = [r.real for r in poly.deriv().roots if abs(r.imag) < 1e-12 and -1 <= r.real <= 1]
        cands = sorted(set(crit + [-1.0, 1.0]))
        vals = [abs(poly(c)) for c in cands]
        best = max(vals)
        pts.append(min(c for c, v in zip(cands, vals) if v >= best * (1 - 1e-10)))
    return np.array(pts)


class TestSequences:
    def test_leja_start(self, leja):
        assert leja.points[:3] == pytest.approx([1.0, -1.0, 0.0], abs=1e-12)
        assert leja.points[3] == pytest.approx(-1 / math.sqrt(3), abs=1e-12)

    def test_leja_against_root_construction(self, leja):
        assert np.allclose(leja.points[:9], _leja_by_roots(8), atol=1e-9)

    def test_rleja(self):
        r = rleja_sequence(8)
        c8 = math.cos(math.pi / 8)
        want = [1, -1, 0, 1 / math.sqrt(2), -1 / math.sqrt(2), c8, -c8, -math.sin(math.pi / 8), math.sin(math.pi / 8)]
        assert np.allclose(r.points, want, atol=1e-12)

    def test_validation(self):
        with pytest.raises(MalformedInputError):
            UnivariateSequence([0.0, 0.0])
        with pytest.raises(MalformedInputError):
            UnivariateSequence([1.5])
        with pytest.raises(SequenceTooShortError):
            UnivariateSequence([1.0, -1.0]).hierarchical(0.3, 2)

    def test_hierarchical_property(self, leja):
        H = leja.hierarchical(leja.points)
        assert np.allclose(np.diag(H), 1.0)
        assert np.allclose(np.triu(H.T, 1), 0.0, atol=1e-13)

    def test_weight_norms(self, leja):
        assert np.allclose(weight_norms(leja, "inf"), 1.0)
        x, w = np.polynomial.legendre.leggauss(200)
        want = np.sqrt(np.sum(leja.hierarchical(x) ** 2 * w / 2, axis=1))
        assert np.allclose(weight_norms(leja, 2), want, rtol=1e-12)


class TestLebesgue1D:
    def test_small_cases(self, leja):
        assert lebesgue_constant_1d(leja, 0) == 1.0
        assert lebesgue_constant_1d(leja, 1) == pytest.approx(1.0)
        assert lebesgue_constant_1d(leja, 2) == pytest.approx(1.25, rel=1e-8)

    def test_against_lagrange(self, leja):
        t = np.linspace(-1, 1, 20001)
        for k in (3, 5, 8):
            pts = leja.points[: k + 1]
            total = np.zeros_like(t)
            for i in range(k + 1):
                others = np.delete(pts, i)
                total += np.abs(np.prod((t[:, None] - others) / (pts[i] - others), axis=1))
            assert lebesgue_constant_1d(leja, k) == pytest.approx(total.max(), rel=1e-6)


def _random_poly(rng, lam, dims):
    coef = rng.normal(size=len(lam))
    degree = max((k for nu in lam for _, k in nu.items), default=0)

    def p(y):
        return np.array([coef @ product_basis(lam, monomial_table(np.atleast_2d(y), dims, degree))[:, 0]])

    return p


class TestInterpolation:
    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 2**31), st.integers(1, 30), st.integers(1, 5))
    def test_polynomial_exactness(self, seed, size, dims):
        rng = np.random.default_rng(seed)
        lam = random_downward_closed(rng, size, dims)
        p = _random_poly(rng, lam, dims)
        interp = interpolate(p, lam, leja_sequence(30), dims=dims)
        Y = rng.uniform(-1, 1, (50, dims))
        exact = np.array([p(y)[0] for y in Y])
        assert np.max(np.abs(interp.evaluate(Y)[0] - exact)) <= 1e-10 * max(np.max(np.abs(exact)), 1.0)

    def test_interpolates_at_grid(self, leja):
        rng = np.random.default_rng(4)
        lam = random_downward_closed(rng, 20, 3)
        f = lambda y: np.array([np.exp(y[0]) * np.cos(y[1] + 2 * y[2])])
        interp = interpolate(f, lam, leja, dims=3)
        for y in grid_points(lam, leja, 3):
            assert interp.evaluate(y)[0] == pytest.approx(f(y)[0], abs=1e-12)

    def test_grids_are_nested(self, leja):
        rng = np.random.default_rng(5)
        lam = random_downward_closed(rng, 25, 3)
        small = lam.prefix(10)
        big = {tuple(y) for y in grid_points(lam, leja, 3)}
        assert {tuple(y) for y in grid_points(small, leja, 3)} <= big

    def test_coefficients_do_not_depend_on_order(self, leja):
        lam = IndexSet([Z, e(1), e(2), e(1, 2), MultiIndex({1: 1, 2: 1}), e(2, 2)])
        other = IndexSet([Z, e(2), e(2, 2), e(1), MultiIndex({1: 1, 2: 1}), e(1, 2)])
        f = lambda y: np.array([1 / (2 + y[0] + 0.5 * y[1])])
        a, b = interpolate(f, lam, leja, dims=2), interpolate(f, other, leja, dims=2)
        for nu in lam:
            assert a.coeff(nu) == pytest.approx(b.coeff(nu), abs=1e-14)

    def test_solve_count_and_fields(self, leja):
        sp = FemSpace(63)
        stiff = assemble(disjoint_inclusions(sp, [0.5] * 4), sp)
        lam = random_downward_closed(np.random.default_rng(6), 15, 4)
        stiff.reset_counters()
        interp = interpolate(stiff, lam, leja)
        assert stiff.truth_solves == len(lam) == interp.solves
        y = grid_points(lam, leja, 4)[7]
        assert np.allclose(interp.evaluate(y), stiff.solve(y), atol=1e-13)

    def test_callable_needs_dims(self, leja):
        with pytest.raises(MalformedInputError):
            interpolate(lambda y: y, IndexSet([Z]), leja)

    def test_sequence_too_short(self):
        with pytest.raises(SequenceTooShortError):
            grid_points([Z, e(1), e(1, 2)], UnivariateSequence([1.0, -1.0]), 1)

    def test_multivariate_lebesgue_identity(self, leja):
        lam = IndexSet([Z, e(1), e(1, 2)])
        # tensor case in one variable reduces to the 1-D Lebesgue constant
        probe = np.linspace(-1, 1, 20001)[:, None]
        assert lebesgue_constant(lam, leja, 1, probe=probe) == pytest.approx(1.25, rel=1e-6)
        H = hierarchical_matrix(lam, leja, 1)
        assert np.allclose(np.diag(H), 1) and np.allclose(np.triu(H, 1), 0)


def _product_target(y):
    # u2(t_0) = u2(t_1) since the first two Leja points are +1 and -1
    return np.array([(1 + 0.5 * y[0]) * (1 + y[1] ** 2)])


def _stalling_target(y):
    # every surplus along e1 is nonzero while the surplus of e2 vanishes
    return np.array([(1 + y[1] ** 2) / (2 + y[0])])


class TestAdaptive:
    def test_pure_greedy_stalls(self, leja):
        run = adaptive_interpolate(_stalling_target, 10, leja, dims=2, alternate=False)
        assert all(nu.max_position <= 1 for nu in run.order)

    def test_alternating_reaches_second_direction(self, leja):
        run = adaptive_interpolate(_stalling_target, 10, leja, dims=2)
        assert 2 in run.order[2].support and e(2, 2) in run.order
        assert run.rules[1:4] == ["greedy", "oldest", "greedy"]
        Y = np.random.default_rng(0).uniform(-1, 1, (40, 2))
        run = adaptive_interpolate(_product_target, 12, leja, dims=2)
        exact = np.array([_product_target(y)[0] for y in Y])
        assert np.max(np.abs(run.final.evaluate(Y)[0] - exact)) < 1e-12

    def test_sets_are_anchored_and_counts(self, leja):
        sp = FemSpace(31)
        stiff = assemble(disjoint_inclusions(sp, [0.6, 0.4, 0.2, 0.1]), sp)
        stiff.reset_counters()
        run = adaptive_interpolate(stiff, 25, leja, weight_p=2)
        assert run.final.index_set.is_anchored_set()
        assert stiff.truth_solves == run.solves_at[-1] == len(run.order) + len(run.frontier)
        for n in range(1, 26):
            assert run.interpolant(n).index_set.prefix(n) is not None
        assert np.all(np.diff(run.solves_at) >= 1)

    def test_prefix_surpluses_match_fresh_interpolation(self, leja):
        run = adaptive_interpolate(_product_target, 9, leja, dims=2)
        part = run.interpolant(6)
        fresh = interpolate(_product_target, part.index_set, leja, dims=2)
        assert np.allclose(part.alphas, fresh.alphas, atol=1e-14)
