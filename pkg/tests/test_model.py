import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pss.errors import MalformedInputError
from pss.model import (AffineCoefficientFamily, FemSpace, assemble, check_uea, constant_family, disjoint_inclusions,
                       smooth_family)


@pytest.fixture(scope="module")
def d4():
    sp = FemSpace(127)
    return assemble(disjoint_inclusions(sp, [0.5] * 4), sp)


class TestUEA:
    def test_constant(self):
        assert check_uea(constant_family(FemSpace(7), [0.6])) == pytest.approx(0.4)

    def test_disjoint(self):
        assert check_uea(disjoint_inclusions(FemSpace(7), [0.9] * 4)) == pytest.approx(0.1)

    def test_rejected(self):
        sp = FemSpace(7)
        fam = constant_family(sp, [0.6, 0.5])
        assert check_uea(fam) == pytest.approx(-0.1)
        with pytest.raises(MalformedInputError):
            assemble(fam, sp)

    def test_smooth_family_hits_target(self):
        fam = smooth_family(FemSpace(63), 16, 2.0, 0.3)
        assert check_uea(fam) == pytest.approx(0.3, abs=1e-12)
        assert np.all(np.diff(fam.norms) <= 0)

    def test_reordered_by_norm(self):
        fam = disjoint_inclusions(FemSpace(7), [0.1, 0.4, 0.2, 0.3])
        assert list(fam.norms) == [0.4, 0.3, 0.2, 0.1]

    def test_mesh_must_align(self):
        with pytest.raises(MalformedInputError):
            disjoint_inclusions(FemSpace(8), [0.5] * 4)
        with pytest.raises(MalformedInputError):
            FemSpace(2)


class TestAssembly:
    def test_laplacian(self):
        sp = FemSpace(3)
        st_ = assemble(constant_family(sp, [0.5]), sp)
        want = 4 * (2 * np.eye(3) - np.eye(3, k=1) - np.eye(3, k=-1))
        assert np.allclose(st_.bbar.to_dense(), want)
        # psi = 0.5 constant gives B_1 = 0.5 Bbar
        assert np.allclose(st_.bjs[0].to_dense(), 0.5 * want)

    def test_half_indicator_by_hand(self):
        sp = FemSpace(3)
        st_ = assemble(disjoint_inclusions(sp, [1.0, 0.5], abar=2.0), sp)
        want = np.array([[8.0, -4.0, 0.0], [-4.0, 4.0, 0.0], [0.0, 0.0, 0.0]])
        assert np.allclose(st_.bjs[0].to_dense(), want)


class TestSolve:
    def test_nodally_exact(self, d4):
        x = d4.space.nodes
        assert np.max(np.abs(d4.solve(np.zeros(4)) - x * (1 - x) / 2)) < 1e-13

    def test_constant_scaling(self):
        sp = FemSpace(31)
        st_ = assemble(constant_family(sp, [0.6]), sp)
        u0 = st_.solve([0.0])
        for y in (-1.0, -0.3, 0.7, 1.0):
            assert np.allclose(st_.solve([y]), u0 / (1 + 0.6 * y), rtol=1e-12)

    def test_residual(self):
        sp = FemSpace(63)
        st_ = assemble(disjoint_inclusions(sp, [0.7, 0.4]), sp)
        for y in np.random.default_rng(0).uniform(-1, 1, (10, 2)):
            u = st_.solve(y)
            assert st_.dual_norm(st_.operator(y) @ u - st_.F) <= 1e-12 * st_.load_dual_norm

    def test_bad_parameters(self, d4):
        with pytest.raises(MalformedInputError):
            d4.solve([1.5, 0, 0, 0])
        with pytest.raises(MalformedInputError):
            d4.solve(np.zeros(5))

    def test_counts(self, d4):
        d4.reset_counters()
        d4.solve_many(np.zeros((3, 4)), threads=2)
        assert d4.truth_solves == 3

    def test_stability_and_lipschitz(self, d4):
        rng = np.random.default_rng(1)
        f_star = d4.load_dual_norm
        ys = rng.uniform(-1, 1, (30, 4))
        U = d4.solve_many(ys)
        assert np.all(d4.v_norm(U) <= f_star / d4.r * (1 + 1e-12))
        const = 2 * f_star / d4.r ** 2
        for i in range(0, 30, 2):
            da = np.max(np.abs(d4.family.coefficient(ys[i]) - d4.family.coefficient(ys[i + 1])))
            assert d4.v_norm(U[:, i] - U[:, i + 1]) <= const * da


class TestNorms:
    def test_limit_value(self, d4):
        x = d4.space.nodes
        assert abs(d4.v_norm(x * (1 - x) / 2) - 1 / np.sqrt(12)) <= d4.space.h
        assert d4.v_norm(np.zeros(127)) == 0.0

    def test_mesh_convergence(self):
        errs = []
        for n in (15, 31, 63, 127):
            sp = FemSpace(n)
            st_ = assemble(constant_family(sp, [0.5]), sp)
            # Galerkin orthogonality: |u - u_h|^2 = |u|^2 - |u_h|^2 with |u|^2 = 1/12
            errs.append(np.sqrt(1 / 12 - st_.v_norm(st_.solve([0.0])) ** 2))
        ratios = np.array(errs[:-1]) / np.array(errs[1:])
        assert np.all(np.abs(ratios - 2) < 0.05)

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 2**31))
    def test_equivalence(self, seed):
        sp = FemSpace(31)
        st_ = assemble(smooth_family(sp, 6, 2.0, 0.4, abar=1.0), sp)
        v = np.random.default_rng(seed).normal(size=31)
        assert st_.abar_norm(v) == pytest.approx(st_.v_norm(v), rel=1e-12)

    def test_equivalence_variable_abar(self):
        sp = FemSpace(31)
        abar = 1 + 0.5 * np.sin(np.pi * sp.midpoints)
        fam = AffineCoefficientFamily(abar, 0.2 * np.ones((1, 32)))
        st_ = assemble(fam, sp)
        rng = np.random.default_rng(2)
        for _ in range(20):
            v = rng.normal(size=31)
            a, n = st_.abar_norm(v), st_.v_norm(v)
            assert st_.r * n ** 2 <= a ** 2 * (1 + 1e-12) and a ** 2 <= st_.abar_max * n ** 2 * (1 + 1e-12)
