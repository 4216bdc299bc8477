"""P1 finite elements for -(a u')' = f on (0, 1) with an affine coefficient.

The coefficient is a(y) = abar + sum_j y_j psi_j with y in [-1, 1]^J. All
coefficient functions are sampled at element midpoints, which makes the
assembly exact for piecewise constant data on aligned meshes.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.linalg import LinAlgError, cho_solve_banded, cholesky_banded, solveh_banded

from .errors import MalformedInputError, NumericalError, SolverError

__all__ = [
    "FemSpace",
    "AffineCoefficientFamily",
    "Tridiagonal",
    "StiffnessSet",
    "check_uea",
    "assemble",
    "disjoint_inclusions",
    "smooth_family",
    "constant_family",
]


class FemSpace:
    """Uniform mesh of (0, 1) with ``n_h`` interior nodes and midpoint quadrature."""

    def __init__(self, n_h: int):
        if int(n_h) != n_h or n_h < 3:
            raise MalformedInputError(f"need at least 3 interior nodes, got {n_h}")
        self.n_h = int(n_h)
        self.h = 1.0 / (self.n_h + 1)
        self.nodes = self.h * np.arange(1, self.n_h + 1)
        self.midpoints = self.h * (np.arange(self.n_h + 1) + 0.5)

    @property
    def n_elements(self) -> int:
        return self.n_h + 1

    def sample(self, func: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
        return np.broadcast_to(np.asarray(func(self.midpoints), dtype=float), self.midpoints.shape).copy()

    def __repr__(self) -> str:
        return f"FemSpace(n_h={self.n_h})"


class AffineCoefficientFamily:
    """Midpoint samples of abar and psi_1..psi_J.

    The psi_j are reordered by non-increasing sup norm; ``order[k]`` is the
    original position of the k-th stored function.
    """

    def __init__(self, abar, psis, kinds: Sequence[str] | None = None):
        self.abar = np.asarray(abar, dtype=float).copy()
        psis = np.atleast_2d(np.asarray(psis, dtype=float)) if len(psis) else np.zeros((0, self.abar.size))
        if psis.shape[1] != self.abar.size:
            raise MalformedInputError("psi samples must match the abar sample count")
        if not (np.all(np.isfinite(self.abar)) and np.all(np.isfinite(psis))):
            raise MalformedInputError("coefficient samples must be finite")
        norms = np.max(np.abs(psis), axis=1) if psis.shape[0] else np.zeros(0)
        self.order = np.argsort(-norms, kind="stable")
        self.psis = psis[self.order]
        self.norms = norms[self.order]
        kinds = list(kinds) if kinds is not None else ["custom"] * psis.shape[0]
        self.kinds = [kinds[i] for i in self.order]

    @property
    def n_terms(self) -> int:
        return self.psis.shape[0]

    @property
    def abar_min(self) -> float:
        return float(self.abar.min())

    @property
    def abar_max(self) -> float:
        return float(self.abar.max())

    def sum_abs(self, start: int = 0) -> np.ndarray:
        """Pointwise sum of |psi_j| over stored positions >= start (0-based)."""
        return np.abs(self.psis[start:]).sum(axis=0)

    def check_uea(self) -> float:
        """min_x (abar(x) - sum_j |psi_j(x)|) over the quadrature points."""
        return float(np.min(self.abar - self.sum_abs()))

    def continuity_constant(self) -> float:
        """sup over x and y of a(y)(x)."""
        return float(max(self.abar_max, np.max(self.abar + self.sum_abs())))

    def coefficient(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        if y.size > self.n_terms:
            raise MalformedInputError(f"{y.size} parameters given, model has {self.n_terms}")
        return self.abar + y @ self.psis[: y.size]

    def truncate(self, n_terms: int) -> "AffineCoefficientFamily":
        out = AffineCoefficientFamily(self.abar, self.psis[:n_terms], self.kinds[:n_terms])
        return out


def check_uea(family: AffineCoefficientFamily) -> float:
    return family.check_uea()


def disjoint_inclusions(space: FemSpace, thetas: Sequence[float], abar: float = 1.0) -> AffineCoefficientFamily:
    """psi_j = theta_j on the j-th of d equal subintervals, zero elsewhere."""
    d = len(thetas)
    if d < 1 or space.n_elements % d:
        raise MalformedInputError(f"{space.n_elements} elements cannot be split into {d} equal inclusions")
    per = space.n_elements // d
    psis = np.zeros((d, space.n_elements))
    for j, th in enumerate(thetas):
        psis[j, j * per:(j + 1) * per] = th
    return AffineCoefficientFamily(np.full(space.n_elements, float(abar)), psis, ["disjoint-indicator"] * d)


def smooth_family(space: FemSpace, n_terms: int, beta: float, r_target: float, abar: float = 1.0) -> AffineCoefficientFamily:
    """psi_j(x) = c j^(-beta) sin(j pi x) with c chosen so that UEA holds with r_target."""
    if not 0 < r_target < abar:
        raise MalformedInputError("r_target must lie in (0, abar)")
    j = np.arange(1, n_terms + 1)[:, None]
    shapes = j ** (-float(beta)) * np.sin(j * np.pi * space.midpoints[None, :])
    c = (abar - r_target) / np.max(np.abs(shapes).sum(axis=0))
    return AffineCoefficientFamily(np.full(space.n_elements, float(abar)), c * shapes, ["global-smooth"] * n_terms)


def constant_family(space: FemSpace, thetas: Sequence[float] | float, abar: float = 1.0) -> AffineCoefficientFamily:
    """Spatially constant psi_j = theta_j."""
    thetas = np.atleast_1d(np.asarray(thetas, dtype=float))
    psis = np.repeat(thetas[:, None], space.n_elements, axis=1)
    return AffineCoefficientFamily(np.full(space.n_elements, float(abar)), psis, ["constant"] * thetas.size)


@dataclass(frozen=True)
class Tridiagonal:
    """Symmetric tridiagonal matrix given by its diagonal and off-diagonal."""

    diag: np.ndarray
    off: np.ndarray

    @property
    def n(self) -> int:
        return self.diag.size

    def matvec(self, v: np.ndarray) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        shape = (-1,) + (1,) * (v.ndim - 1)
        out = self.diag.reshape(shape) * v
        off = self.off.reshape(shape)
        out[:-1] += off * v[1:]
        out[1:] += off * v[:-1]
        return out

    def __matmul__(self, v):
        return self.matvec(v)

    def quad(self, u: np.ndarray, v: np.ndarray | None = None) -> np.ndarray:
        """Bilinear form u^T A v, column-wise for 2-D input."""
        v = u if v is None else v
        return np.sum(np.asarray(u) * self.matvec(v), axis=0)

    def banded(self) -> np.ndarray:
        ab = np.zeros((2, self.n))
        ab[0, 1:] = self.off
        ab[1] = self.diag
        return ab

    def to_dense(self) -> np.ndarray:
        return np.diag(self.diag) + np.diag(self.off, 1) + np.diag(self.off, -1)

    def __add__(self, other: "Tridiagonal") -> "Tridiagonal":
        return Tridiagonal(self.diag + other.diag, self.off + other.off)

    def scale(self, c: float) -> "Tridiagonal":
        return Tridiagonal(c * self.diag, c * self.off)


def _stiffness(coef: np.ndarray, h: float) -> Tridiagonal:
    coef = np.asarray(coef, dtype=float)
    return Tridiagonal((coef[:-1] + coef[1:]) / h, -coef[1:-1] / h)


_RESIDUAL_RTOL = 1e-12


class StiffnessSet:
    """Assembled affine model: Bbar, B_j, |B_j|, the load and the Laplacian.

    Parameters
    ----------
    family : AffineCoefficientFamily
    space : FemSpace
    f : callable or array, optional
        Source term; a callable is sampled at the nodes, an array is taken
        as nodal values. Default 1. The load is F_i = h f(x_i).
    require_uea : bool
        Reject families with r <= 0. Disable only to inspect the assembly.
    """

    def __init__(self, family: AffineCoefficientFamily, space: FemSpace, f=None, require_uea: bool = True):
        if family.abar.size != space.n_elements:
            raise MalformedInputError("coefficient samples do not match the mesh")
        self.family = family
        self.space = space
        self.r = family.check_uea()
        if require_uea and self.r <= 0:
            raise MalformedInputError(f"uniform ellipticity fails (r = {self.r:.3g})")
        h = space.h
        self.bbar = _stiffness(family.abar, h)
        self.bjs = [_stiffness(p, h) for p in family.psis]
        self.abs_bjs = [_stiffness(np.abs(p), h) for p in family.psis]
        self.laplacian = _stiffness(np.ones(space.n_elements), h)
        if f is None:
            fn = np.ones(space.n_h)
        elif callable(f):
            fn = np.asarray(f(space.nodes), dtype=float) * np.ones(space.n_h)
        else:
            fn = np.asarray(f, dtype=float)
            if fn.shape != (space.n_h,):
                raise MalformedInputError(f"nodal load must have length {space.n_h}")
        self.F = h * fn
        try:
            self._bbar_chol = cholesky_banded(self.bbar.banded())
            self._lap_chol = cholesky_banded(self.laplacian.banded())
        except LinAlgError as exc:
            raise SolverError("reference operator is not positive definite") from exc
        self._lock = threading.Lock()
        self.truth_solves = 0
        self.back_substitutions = 0

    @property
    def n_terms(self) -> int:
        return self.family.n_terms

    @property
    def n_dofs(self) -> int:
        return self.space.n_h

    @property
    def abar_min(self) -> float:
        return self.family.abar_min

    @property
    def abar_max(self) -> float:
        return self.family.abar_max

    @property
    def continuity(self) -> float:
        return self.family.continuity_constant()

    def reset_counters(self) -> None:
        with self._lock:
            self.truth_solves = 0
            self.back_substitutions = 0

    def operator(self, y) -> Tridiagonal:
        y = np.asarray(y, dtype=float).ravel()
        return _stiffness(self.family.coefficient(y), self.space.h)

    def solve_bbar(self, rhs: np.ndarray) -> np.ndarray:
        """Back-substitution with the cached factorization of Bbar (counted per column)."""
        rhs = np.asarray(rhs, dtype=float)
        with self._lock:
            self.back_substitutions += 1 if rhs.ndim == 1 else rhs.shape[1]
        return cho_solve_banded((self._bbar_chol, False), rhs)

    def solve_laplacian(self, rhs: np.ndarray) -> np.ndarray:
        return cho_solve_banded((self._lap_chol, False), np.asarray(rhs, dtype=float))

    def solve(self, y) -> np.ndarray:
        """Truth solution u_h(y) for |y_j| <= 1."""
        y = np.asarray(y, dtype=float).ravel()
        if y.size > self.n_terms:
            raise MalformedInputError(f"{y.size} parameters given, model has {self.n_terms}")
        if np.any(np.abs(y) > 1 + 1e-12):
            raise MalformedInputError("parameters must lie in [-1, 1]")
        coef = self.family.coefficient(y)
        if np.min(coef) <= 0:
            raise SolverError("coefficient is not positive")
        op = _stiffness(coef, self.space.h)
        try:
            u = solveh_banded(op.banded(), self.F)
        except LinAlgError as exc:
            raise SolverError("system is not positive definite") from exc
        res = self.dual_norm(op.matvec(u) - self.F)
        if not res <= _RESIDUAL_RTOL * self.load_dual_norm:
            raise SolverError(f"residual {res:.3e} above tolerance")
        with self._lock:
            self.truth_solves += 1
        return u

    def solve_many(self, ys, threads: int | None = None) -> np.ndarray:
        """Solutions for each row of ``ys`` as columns, in input order."""
        ys = np.atleast_2d(np.asarray(ys, dtype=float))
        if threads and threads > 1 and len(ys) > 1:
            from concurrent.futures import ThreadPoolExecutor

            with ThreadPoolExecutor(max_workers=threads) as pool:
                cols = list(pool.map(self.solve, ys))
        else:
            cols = [self.solve(y) for y in ys]
        return np.stack(cols, axis=1) if cols else np.zeros((self.n_dofs, 0))

    def v_norm(self, v: np.ndarray):
        """sqrt(v^T L v) with L the unit-coefficient stiffness matrix."""
        return np.sqrt(np.maximum(self.laplacian.quad(v), 0.0))

    def abar_norm(self, v: np.ndarray):
        """sqrt(v^T Bbar v); checked against r |v|_V^2 <= |v|_abar^2 <= abar_max |v|_V^2."""
        a2 = np.maximum(self.bbar.quad(v), 0.0)
        v2 = np.maximum(self.laplacian.quad(v), 0.0)
        slack = 1e-10 * (v2 + 1e-300)
        if np.any(a2 < self.r * v2 - slack) or np.any(a2 > self.abar_max * v2 + slack):
            raise NumericalError("norm equivalence violated")
        return np.sqrt(a2)

    def v_inner(self, u: np.ndarray, v: np.ndarray) -> np.ndarray:
        return np.asarray(u).T @ self.laplacian.matvec(v)

    def dual_norm(self, r: np.ndarray):
        """Norm in the dual of V: sqrt(r^T L^{-1} r)."""
        r = np.asarray(r, dtype=float)
        return np.sqrt(np.maximum(np.sum(r * self.solve_laplacian(r), axis=0), 0.0))

    @property
    def load_dual_norm(self) -> float:
        if not hasattr(self, "_load_dual"):
            self._load_dual = float(self.dual_norm(self.F))
        return self._load_dual

    def truncate(self, n_terms: int) -> "StiffnessSet":
        """The same model keeping only the first ``n_terms`` parameters."""
        return StiffnessSet(self.family.truncate(n_terms), self.space, self.F / self.space.h)

    def __repr__(self) -> str:
        return f"StiffnessSet(n_h={self.space.n_h}, J={self.n_terms}, r={self.r:.4g})"


def assemble(family: AffineCoefficientFamily, space: FemSpace, f=None, require_uea: bool = True) -> StiffnessSet:
    return StiffnessSet(family, space, f, require_uea=require_uea)
