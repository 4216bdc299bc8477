"""Tensorized Legendre polynomials, monotone coefficient surrogates and
quadrature of true Legendre coefficients for few active parameters.

P_k is normalized by P_k(1) = 1 and L_k = sqrt(2k + 1) P_k is orthonormal for
the uniform probability measure dt/2 on [-1, 1].
"""

from __future__ import annotations

import math
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import minimize

from .errors import MalformedInputError, QuadratureBudgetError, TruncationInsufficientError
from .model import StiffnessSet
from .multiindex import IndexSet, MultiIndex, legendre_radius_factor, product_basis

__all__ = [
    "legendre_1d",
    "legendre_table",
    "LegendreSurrogate",
    "estimate_surrogate",
    "LegendreCoefficients",
    "legendre_coeffs_quadrature",
    "coefficient_bound",
    "MAX_QUADRATURE_NODES",
]

MAX_QUADRATURE_NODES = 10**6


def legendre_table(t, degree: int) -> tuple[np.ndarray, np.ndarray]:
    """Arrays P[k], L[k] for k = 0..degree, each shaped like t."""
    t = np.asarray(t, dtype=float)
    P = np.empty((degree + 1,) + t.shape)
    P[0] = 1.0
    if degree >= 1:
        P[1] = t
    for k in range(1, degree):
        P[k + 1] = ((2 * k + 1) * t * P[k] - k * P[k - 1]) / (k + 1)
    scale = np.sqrt(2 * np.arange(degree + 1) + 1.0).reshape((-1,) + (1,) * t.ndim)
    return P, scale * P


def legendre_1d(k: int, t):
    """(P_k(t), L_k(t)) by the three-term recurrence."""
    if k < 0:
        raise MalformedInputError("degree must be non-negative")
    P, L = legendre_table(t, k)
    return P[k], L[k]


class LegendreSurrogate:
    """Monotone a priori surrogate for Legendre coefficient norms.

    With b_j = |psi_j|_inf and eps the admissible perturbation budget:
    kappa = 1 + eps/(3|b|_1), c_kappa = pi kappa / (2(kappa - 1)),
    beta = max(2e, 3 c_kappa e), eta = (1 + kappa)/(2 kappa), and J the
    smallest integer >= 1 with sum_{j>J} b_j <= eps/(3 beta). Then

        r(nu) = prod_{j<=J} eta^nu_j
                * prod_{j>J, nu_j>0} c_kappa (1 + 2 nu_j)(beta + eps nu_j / (3 b_j |nu_F|))^(-nu_j)

    with |nu_F| = sum_{j>J} nu_j, so that r(0) = 1.

    Parameters
    ----------
    norms : sequence of float
        Non-increasing sup norms of the psi_j.
    eps : float
        Budget in the constraint sum_j (rho_j - 1) b_j <= eps.
    tail_l1 : float
        Bound on sum of b_j over terms dropped from the model.
    check_monotone : bool
        Compare each evaluation with its immediate successors.
    """

    def __init__(self, norms: Sequence[float], eps: float, tail_l1: float = 0.0, check_monotone: bool = True):
        b = np.asarray(norms, dtype=float)
        if b.ndim != 1 or b.size == 0 or np.any(b < 0):
            raise MalformedInputError("norms must be a non-empty sequence of non-negative numbers")
        if np.any(np.diff(b) > 0):
            raise MalformedInputError("norms must be non-increasing")
        if eps <= 0:
            raise MalformedInputError("eps must be positive")
        self.b = b
        self.eps = float(eps)
        l1 = float(b.sum()) + tail_l1
        self.kappa = 1.0 + eps / (3.0 * l1)
        self.c_kappa = legendre_radius_factor(self.kappa)
        self.beta = max(2 * math.e, 3 * self.c_kappa * math.e)
        self.eta = (1.0 + self.kappa) / (2.0 * self.kappa)
        tails = np.concatenate([np.cumsum(b[::-1])[::-1], [0.0]]) + tail_l1
        ok = np.nonzero(tails[1:] <= eps / (3 * self.beta))[0]
        if ok.size == 0:
            raise TruncationInsufficientError("the neglected tail of the psi norms is too large for eps")
        self.J = int(ok[0]) + 1
        self.check_monotone = check_monotone

    def _raw(self, nu: MultiIndex) -> float:
        if nu.max_position > self.b.size:
            return 0.0
        J = self.J
        nu_f = sum(e for p, e in nu.items if p > J)
        value = 1.0
        for p, e in nu.items:
            if p <= J:
                value *= self.eta ** e
            else:
                bj = self.b[p - 1]
                if bj == 0:
                    return 0.0
                value *= self.c_kappa * (1 + 2 * e) * (self.beta + self.eps * e / (3 * bj * nu_f)) ** (-e)
        return value

    def __call__(self, nu: MultiIndex) -> float:
        value = self._raw(nu)
        if self.check_monotone and value > 0:
            for p in set(nu.support) | {nu.max_position + 1}:
                nxt = self._raw(nu.plus(p))
                if nxt > value * (1 + 1e-12):
                    from .errors import SurrogateViolationError

                    raise SurrogateViolationError(f"surrogate increases from {nu} to {nu.plus(p)}")
        return value


def estimate_surrogate(norms: Sequence[float], eps: float, nu: MultiIndex) -> float:
    return LegendreSurrogate(norms, eps)(nu)


def coefficient_bound(norms: Sequence[float], eps: float, nu: MultiIndex, constant: float) -> float:
    """constant * min over admissible rho of prod_{supp} theta(rho_j)(1 + 2 nu_j) rho_j^(-nu_j).

    Admissible rho satisfy rho_j > 1 and sum_j (rho_j - 1) |psi_j| <= eps.
    """
    b = np.asarray(norms, dtype=float)
    supp = [(p, e) for p, e in nu.items]
    if not supp:
        return float(constant)
    if any(p > b.size or b[p - 1] == 0 for p, _ in supp):
        return 0.0
    bs = np.array([b[p - 1] for p, _ in supp])
    es = np.array([e for _, e in supp], dtype=float)

    def log_bound(s):
        rho = 1.0 + s
        return float(np.sum(np.log(np.pi * rho / (2 * s)) + np.log(1 + 2 * es) - es * np.log(rho)))

    def from_logits(z):
        w = np.exp(z - z.max())
        w /= w.sum()
        return eps * w / bs

    if len(supp) == 1:
        best = log_bound(np.array([eps / bs[0]]))
    else:
        z0 = np.log(es / es.sum())
        res = minimize(lambda z: log_bound(from_logits(z)), z0, method="Nelder-Mead",
                       options={"xatol": 1e-10, "fatol": 1e-13, "maxiter": 4000})
        best = min(float(res.fun), log_bound(from_logits(z0)))
    return float(constant) * math.exp(best)


class LegendreCoefficients:
    """Coefficients v_nu (orthonormal basis) and w_nu (P_k(1)=1 basis) on an index set."""

    basis = "legendre"

    def __init__(self, index_set: IndexSet, v: np.ndarray, norm: Callable[[np.ndarray], np.ndarray], solves: int):
        self.index_set = index_set
        self.v = v
        scale = np.array([math.sqrt(math.prod(1 + 2 * e for _, e in nu.items)) for nu in index_set])
        self.w = v * scale
        self.v_norms = norm(v)
        self.w_norms = self.v_norms * scale
        self.solves = solves

    def coeff(self, nu: MultiIndex) -> np.ndarray:
        return self.v[:, self.index_set.position(nu)]

    def evaluate(self, y) -> np.ndarray:
        Y = np.asarray(y, dtype=float)
        single = Y.ndim == 1
        Y = np.atleast_2d(Y)
        dims = max(self.index_set.max_active_dim, 1)
        degree = max((e for nu in self.index_set for _, e in nu.items), default=0)
        cols = np.zeros((dims, Y.shape[0]))
        used = min(dims, Y.shape[1])
        cols[:used] = Y[:, :used].T
        _, L = legendre_table(cols, degree)
        out = self.v @ product_basis(self.index_set, np.moveaxis(L, 0, 1))
        return out[:, 0] if single else out


def legendre_coeffs_quadrature(
    target: StiffnessSet | Callable[[np.ndarray], np.ndarray],
    lam: IndexSet,
    j_active: int,
    nodes_per_dim: int,
    n_dofs: int | None = None,
    threads: int | None = None,
) -> LegendreCoefficients:
    """Tensor Gauss-Legendre projection of y -> u(y) onto L_nu, nu in Lambda.

    Parameters beyond ``j_active`` are fixed at 0. A callable target must map
    a parameter vector to a field (or scalar) and then ``n_dofs`` is inferred.
    """
    if not 1 <= j_active <= 4:
        raise MalformedInputError("between 1 and 4 active parameters are supported")
    if lam.max_active_dim > j_active:
        raise MalformedInputError("index set uses more than j_active dimensions")
    degree = max((e for nu in lam for _, e in nu.items), default=0)
    if nodes_per_dim < degree + 1:
        raise MalformedInputError(f"need at least {degree + 1} nodes per dimension")
    total = nodes_per_dim ** j_active
    if total > MAX_QUADRATURE_NODES:
        raise QuadratureBudgetError(f"{total} quadrature nodes exceed the budget of {MAX_QUADRATURE_NODES}")
    x, wts = np.polynomial.legendre.leggauss(nodes_per_dim)
    wts = wts / 2.0
    grid = np.array(np.meshgrid(*([x] * j_active), indexing="ij")).reshape(j_active, -1).T
    if isinstance(target, StiffnessSet):
        pad = np.zeros((grid.shape[0], target.n_terms))
        pad[:, :j_active] = grid
        U = target.solve_many(pad, threads=threads)
        norm = target.v_norm
    else:
        cols = [np.atleast_1d(np.asarray(target(y), dtype=float)) for y in grid]
        U = np.stack(cols, axis=1)
        norm = lambda v: np.sqrt(np.sum(v * v, axis=0))
    n = U.shape[0]
    _, L = legendre_table(x, degree)
    weighted = L * wts[None, :]
    # contract one parameter axis at a time: U[dof, i1, ..., iJ] -> C[dof, k1, ..., kJ]
    C = U.reshape((n,) + (nodes_per_dim,) * j_active)
    for axis in range(1, j_active + 1):
        C = np.moveaxis(np.tensordot(C, weighted, axes=([axis], [1])), -1, axis)
    v = np.stack([C[(slice(None),) + nu.dense(j_active)] for nu in lam], axis=1)
    return LegendreCoefficients(lam, v, norm, solves=total)
