"""Taylor coefficients of the parametric solution map at y = 0.

t_0 solves Bbar t_0 = F and, for nu != 0,
Bbar t_nu = -sum_{j in supp(nu)} B_j t_{nu - e_j}.
Every coefficient costs one back-substitution with the single Bbar factor.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import MalformedInputError, OrderingError, TruncationInsufficientError
from .model import StiffnessSet
from .multiindex import IndexSet, MultiIndex, margin, product_basis

__all__ = [
    "SaturationConstants",
    "saturation_constants",
    "TaylorCache",
    "TaylorSurrogate",
    "compute_taylor",
    "monomial_table",
    "product_bound",
    "product_tail_bound",
    "TaylorReference",
    "sparse_margin",
    "PolydiscSurrogate",
    "BulkStep",
    "bulk_chase_run",
]


@dataclass(frozen=True)
class SaturationConstants:
    r: float
    abar_max: float
    gamma: float
    alpha: float
    delta: float

    def kappa(self, theta: float) -> float:
        return 1.0 - theta / self.delta


def saturation_constants(stiff: StiffnessSet) -> SaturationConstants:
    """gamma = 1 - r/abar_max, alpha = abar_max/(r + abar_max), delta = (abar_max/r)(1 + ag/(1 - ag))."""
    r, amax = stiff.r, stiff.abar_max
    gamma = 1.0 - r / amax
    alpha = amax / (r + amax)
    ag = alpha * gamma
    return SaturationConstants(r, amax, gamma, alpha, (amax / r) * (1.0 + ag / (1.0 - ag)))


class TaylorCache:
    """Incrementally computed Taylor coefficients with a solve counter.

    Indices requested together are processed in layers of equal |nu|; each
    layer is one multi-right-hand-side back-substitution.
    """

    def __init__(self, stiff: StiffnessSet):
        self.stiff = stiff
        self._vec: dict[MultiIndex, np.ndarray] = {}
        self._vnorm: dict[MultiIndex, float] = {}
        self.solves = 0

    def __contains__(self, nu: MultiIndex) -> bool:
        return nu in self._vec

    def __len__(self) -> int:
        return len(self._vec)

    def vector(self, nu: MultiIndex) -> np.ndarray:
        if nu.max_position > self.stiff.n_terms:
            return np.zeros(self.stiff.n_dofs)
        return self._vec[nu]

    def v_norm(self, nu: MultiIndex) -> float:
        if nu.max_position > self.stiff.n_terms:
            return 0.0
        return self._vnorm[nu]

    def energy(self, indices: Iterable[MultiIndex]) -> float:
        """sum of |t_nu|_V^2, accumulated in the given order."""
        return math.fsum(self.v_norm(nu) ** 2 for nu in indices)

    def energy_abar(self, indices: Iterable[MultiIndex]) -> float:
        return math.fsum(self.d(nu) for nu in indices)

    def d(self, nu: MultiIndex) -> float:
        if nu.max_position > self.stiff.n_terms:
            return 0.0
        return float(self.stiff.bbar.quad(self._vec[nu]))

    def ensure(self, indices: Iterable[MultiIndex]) -> None:
        todo = sorted({nu for nu in indices if nu not in self._vec and nu.max_position <= self.stiff.n_terms})
        if not todo:
            return
        stiff = self.stiff
        layers: dict[int, list[MultiIndex]] = {}
        for nu in todo:
            layers.setdefault(nu.order, []).append(nu)
        for order in sorted(layers):
            layer = layers[order]
            if order == 0:
                rhs = stiff.F[:, None].copy()
            else:
                rhs = np.zeros((stiff.n_dofs, len(layer)))
                by_pos: dict[int, tuple[list[int], list[np.ndarray]]] = {}
                for col, nu in enumerate(layer):
                    for p in nu.support:
                        pred = nu.minus(p)
                        if pred not in self._vec:
                            raise OrderingError(f"coefficient of {pred} is needed before {nu}")
                        cols, vecs = by_pos.setdefault(p, ([], []))
                        cols.append(col)
                        vecs.append(self._vec[pred])
                for p, (cols, vecs) in by_pos.items():
                    np.subtract.at(rhs.T, cols, stiff.bjs[p - 1].matvec(np.stack(vecs, axis=1)).T)
            sol = stiff.solve_bbar(rhs)
            norms = stiff.v_norm(sol)
            for col, nu in enumerate(layer):
                self._vec[nu] = sol[:, col].copy()
                self._vnorm[nu] = float(norms[col])
            self.solves += len(layer)


def monomial_table(Y: np.ndarray, dims: int, degree: int) -> np.ndarray:
    """table[j, k] = y_{j+1}^k; missing coordinates count as 0."""
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    m = Y.shape[0]
    cols = np.zeros((dims, m))
    used = min(dims, Y.shape[1])
    cols[:used] = Y[:, :used].T
    table = np.empty((dims, degree + 1, m))
    table[:, 0] = 1.0
    for k in range(1, degree + 1):
        table[:, k] = table[:, k - 1] * cols
    return table


class TaylorSurrogate:
    """Truncated Taylor series sum_{nu in Lambda} t_nu y^nu.

    ``coeffs`` has one column per member of ``index_set`` in insertion order.
    """

    basis = "monomial"

    def __init__(self, stiff: StiffnessSet, index_set: IndexSet, coeffs: np.ndarray):
        if coeffs.shape != (stiff.n_dofs, len(index_set)):
            raise MalformedInputError("coefficient matrix does not match the index set")
        self.stiff = stiff
        self.index_set = index_set
        self.coeffs = coeffs
        self.v_norms = stiff.v_norm(coeffs) if len(index_set) else np.zeros(0)
        self.d_values = stiff.bbar.quad(coeffs) if len(index_set) else np.zeros(0)

    def coeff(self, nu: MultiIndex) -> np.ndarray:
        return self.coeffs[:, self.index_set.position(nu)]

    def evaluate(self, y) -> np.ndarray:
        """Field(s) at y; a 2-D input gives one column per row of y."""
        Y = np.asarray(y, dtype=float)
        single = Y.ndim == 1
        Y = np.atleast_2d(Y)
        if np.any(np.abs(Y) > 1 + 1e-12):
            raise MalformedInputError("parameters must lie in [-1, 1]")
        dims = max(self.index_set.max_active_dim, 1)
        degree = max((e for nu in self.index_set for _, e in nu.items), default=0)
        basis = product_basis(self.index_set, monomial_table(Y, dims, degree))
        out = self.coeffs @ basis
        return out[:, 0] if single else out

    def quantities_d(self, nu: MultiIndex) -> tuple[float, list[float]]:
        """d_nu = t^T Bbar t and d_{nu,j} = t^T |B_j| t for every model term j."""
        t = self.coeff(nu)
        return float(self.stiff.bbar.quad(t)), [float(b.quad(t)) for b in self.stiff.abs_bjs]

    def energy(self) -> float:
        return math.fsum(self.v_norms ** 2)


def compute_taylor(stiff: StiffnessSet, lam: IndexSet | Sequence[MultiIndex], cache: TaylorCache | None = None) -> TaylorSurrogate:
    """Coefficients t_nu for every nu in a downward closed set.

    Exactly #Lambda back-substitutions are spent when no cache is given.
    """
    if not isinstance(lam, IndexSet):
        try:
            lam = IndexSet(lam)
        except MalformedInputError as exc:
            raise OrderingError(str(exc)) from exc
    if lam.max_active_dim > stiff.n_terms:
        raise MalformedInputError(f"index set uses {lam.max_active_dim} dimensions, model has {stiff.n_terms}")
    cache = cache if cache is not None else TaylorCache(stiff)
    cache.ensure(lam)
    coeffs = np.stack([cache.vector(nu) for nu in lam], axis=1) if len(lam) else np.zeros((stiff.n_dofs, 0))
    return TaylorSurrogate(stiff, lam, coeffs)


def _disjoint_supports(stiff: StiffnessSet) -> bool:
    active = (np.abs(stiff.family.psis) > 0).sum(axis=0)
    return bool(np.all(active <= 1))


def _ratios(stiff: StiffnessSet, t: float) -> np.ndarray:
    """q_j(t) with |t_nu|_V <= C prod q_j^nu_j on the polydisc where Re a >= t."""
    fam = stiff.family
    if _disjoint_supports(stiff):
        return np.max(np.abs(fam.psis) / (fam.abar - t), axis=1)
    rho = np.min((fam.abar - t) / np.maximum(fam.sum_abs(), 1e-300))
    return np.where(fam.norms > 0, 1.0 / rho, 0.0)


def product_bound(stiff: StiffnessSet, nu: MultiIndex, constant: float, t: float | None = None) -> float:
    """constant * prod_j (sup |psi_j| / (abar - t))^nu_j, t = r/2 by default."""
    t = stiff.r / 2 if t is None else t
    q = _ratios(stiff, t)
    if nu.max_position > q.size:
        return 0.0
    return constant * math.prod(q[p - 1] ** e for p, e in nu.items)


def _complete_homogeneous_tail(x: np.ndarray, degree: int) -> float:
    """sum over |nu| > degree of prod_j x_j^nu_j, for 0 <= x_j < 1."""
    x = x[x > 0]
    if x.size == 0:
        return 0.0
    if np.max(x) >= 1:
        return math.inf
    # col[k] = complete homogeneous polynomial of degree n in x_1..x_k
    col = np.ones(x.size + 1)
    tail = 0.0
    n = 0
    while True:
        n += 1
        cur = np.zeros_like(col)
        for k in range(1, x.size + 1):
            cur[k] = cur[k - 1] + x[k - 1] * col[k]
        col = cur
        if n > degree:
            tail += col[-1]
            if col[-1] < 1e-300 or (n > degree + 20 and col[-1] <= 1e-17 * tail):
                return tail


def product_tail_bound(stiff: StiffnessSet, degree: int, t_grid: Sequence[float] | None = None) -> float:
    """Certified bound on sum_{|nu| > degree} |t_nu|_V^2.

    Uses |t_nu|_V <= (|f|_{V*} / t) prod q_j(t)^nu_j on polydiscs where
    Re a >= t, minimized over a grid of t in (0, r).
    """
    grid = np.linspace(0.02, 0.98, 49) * stiff.r if t_grid is None else np.asarray(t_grid, dtype=float)
    best = math.inf
    for t in grid:
        q = _ratios(stiff, float(t))
        tail = _complete_homogeneous_tail(q ** 2, degree)
        best = min(best, (stiff.load_dual_norm / t) ** 2 * tail)
    return best


class TaylorReference:
    """Coefficients on a declared superset {|nu| <= degree} with a certified tail.

    Quadratic errors sigma(Lambda) are reported as an interval
    [sum over reference minus Lambda, same plus tail bound].
    """

    def __init__(self, stiff: StiffnessSet, degree: int):
        from .multiindex import total_degree_set

        self.stiff = stiff
        self.degree = degree
        self.index_set = total_degree_set(stiff.n_terms, degree)
        self.cache = TaylorCache(stiff)
        self.cache.ensure(self.index_set)
        self.tail = product_tail_bound(stiff, degree)
        self.tail_abar = stiff.abar_max * self.tail
        self._total = self.cache.energy(self.index_set)
        self._total_abar = self.cache.energy_abar(self.index_set)

    def _inside(self, indices: Iterable[MultiIndex]) -> list[MultiIndex]:
        out = list(indices)
        for nu in out:
            if nu.order > self.degree and nu.max_position <= self.stiff.n_terms:
                raise MalformedInputError(f"{nu} lies outside the reference set")
        return out

    def energy(self, indices: Iterable[MultiIndex]) -> float:
        return self.cache.energy(self._inside(indices))

    def energy_abar(self, indices: Iterable[MultiIndex]) -> float:
        return self.cache.energy_abar(self._inside(indices))

    def sigma(self, lam: Iterable[MultiIndex]) -> tuple[float, float]:
        lower = max(self._total - self.energy(lam), 0.0)
        return lower, lower + self.tail

    def sigma_abar(self, lam: Iterable[MultiIndex]) -> tuple[float, float]:
        lower = max(self._total_abar - self.energy_abar(lam), 0.0)
        return lower, lower + self.tail_abar

    def check_saturation(self, lam: IndexSet) -> dict:
        """Test sigma_bar(Lambda) <= delta * e_bar(M(Lambda)) with the certified upper sigma."""
        consts = saturation_constants(self.stiff)
        marg = [nu for nu in margin(lam, max(self.stiff.n_terms, lam.max_active_dim)) if nu.max_position <= self.stiff.n_terms]
        e_bar = self.energy_abar(marg)
        lo, hi = self.sigma_abar(lam)
        return {"sigma_bar_lower": lo, "sigma_bar_upper": hi, "e_bar_margin": e_bar,
                "delta": consts.delta, "ok": hi <= consts.delta * e_bar}


def _tail_norms(stiff: StiffnessSet) -> np.ndarray:
    """tails[J] = max_x sum_{j > J} |psi_j(x)| / abar(x) for J = 0..n_terms."""
    fam = stiff.family
    rel = np.abs(fam.psis) / fam.abar
    cums = np.vstack([np.cumsum(rel[::-1], axis=0)[::-1], np.zeros((1, rel.shape[1]))])
    return np.max(cums, axis=1)


def sparse_margin(
    stiff: StiffnessSet,
    lam: IndexSet,
    e_bar_lambda: float,
    eps: float,
    neglected_tail: float = 0.0,
) -> tuple[list[MultiIndex], int]:
    """Finite part of the margin that captures all but eps of its energy.

    Returns (M_tilde, J) with J the smallest integer such that
    max_x sum_{j > J} |psi_j| / abar <= (1 - alpha gamma) r eps / (alpha e_bar(Lambda)),
    and M_tilde = {nu in M : nu - e_j in Lambda implies j <= J}.
    ``neglected_tail`` bounds the contribution of terms dropped from the model.
    """
    if eps <= 0:
        raise MalformedInputError("eps must be positive")
    c = saturation_constants(stiff)
    threshold = (1.0 - c.alpha * c.gamma) * c.r * eps / (c.alpha * max(e_bar_lambda, 1e-300))
    tails = _tail_norms(stiff) + neglected_tail
    ok = np.nonzero(tails <= threshold)[0]
    if ok.size == 0:
        raise TruncationInsufficientError(
            f"the model tail {tails[-1]:.3e} never drops below {threshold:.3e}; enlarge the model")
    J = max(int(ok[0]), 1)
    n_terms = stiff.n_terms
    marg = margin(lam, max(n_terms, lam.max_active_dim))
    keep = [nu for nu in marg if nu.max_position <= n_terms
            and all(p <= J for p in nu.support if nu.minus(p) in lam)]
    return keep, J


class PolydiscSurrogate:
    """Surrogate s_nu = min rho^(-nu) over rho_j >= 1 with sum_j (rho_j - 1) b_j <= eps.

    Under UEA(r) any such rho with eps = r - t keeps Re a >= t on the
    polydisc, so |t_nu|_V <= (|f|_{V*}/t) s_nu. The minimizer is found by
    water-filling: rho_j = max(1, nu_j / (lam b_j)). Monotone in nu, and
    anchored when b is non-increasing.
    """

    def __init__(self, norms: Sequence[float], eps: float):
        self.b = np.asarray(norms, dtype=float)
        if np.any(np.diff(self.b) > 0) or np.any(self.b < 0):
            raise MalformedInputError("norms must be non-negative and non-increasing")
        if eps <= 0:
            raise MalformedInputError("eps must be positive")
        self.eps = float(eps)

    @classmethod
    def for_model(cls, stiff: StiffnessSet, t: float | None = None) -> "PolydiscSurrogate":
        t = stiff.r / 2 if t is None else t
        return cls(stiff.family.norms, stiff.r - t)

    def radii(self, nu: MultiIndex) -> dict[int, float]:
        if nu.is_zero():
            return {}
        items = [(p, e, self.b[p - 1]) for p, e in nu.items]
        if any(b == 0 for _, _, b in items):
            return {p: math.inf for p, _, b in items if b == 0}
        items.sort(key=lambda it: -it[1] / it[2])
        num = den = 0.0
        lam = math.inf
        for k, (_, e, b) in enumerate(items):
            num += e
            den += b
            cand = num / (self.eps + den)
            nxt = items[k + 1][1] / items[k + 1][2] if k + 1 < len(items) else 0.0
            if cand >= nxt:
                lam = cand
                break
        return {p: max(1.0, e / (lam * b)) for p, e, b in items}

    def __call__(self, nu: MultiIndex) -> float:
        if nu.max_position > self.b.size:
            return 0.0
        rho = self.radii(nu)
        return math.prod(rho[p] ** (-e) for p, e in nu.items)


@dataclass
class BulkStep:
    step: int
    card: int
    sparse_card: int
    J: int
    e_sparse: float
    sigma_lower: float = math.nan
    sigma_upper: float = math.nan
    solves: int = 0
    index_set: IndexSet | None = field(default=None, repr=False)


def bulk_chase_run(
    stiff: StiffnessSet,
    theta: float,
    eps: float,
    reference: TaylorReference | None = None,
    max_steps: int = 10_000,
    neglected_tail: float = 0.0,
) -> list[BulkStep]:
    """Bulk chasing with eps-accuracy; one record per visited set Lambda^k.

    Each step adds the smallest prefix S of the finite margin, ordered by
    decreasing m_nu (max of |t|_V over the upward cone inside the finite
    margin, ties to the smaller index), with e(S) >= theta e(M_tilde).
    The run stops once e(M_tilde) <= 2 theta eps.
    """
    if not 0 < theta < 1:
        raise MalformedInputError("theta must lie in (0, 1)")
    cache = TaylorCache(stiff)
    zero = MultiIndex.zero()
    lam = IndexSet([zero])
    cache.ensure(lam)
    steps: list[BulkStep] = []
    for k in range(1, max_steps + 1):
        e_bar = cache.energy_abar(lam)
        m_tilde, J = sparse_margin(stiff, lam, e_bar, eps, neglected_tail)
        cache.ensure(m_tilde)
        e_m = cache.energy(m_tilde)
        rec = BulkStep(k, len(lam), len(m_tilde), J, e_m, solves=cache.solves, index_set=lam.copy())
        if reference is not None:
            rec.sigma_lower, rec.sigma_upper = reference.sigma(lam)
        steps.append(rec)
        if e_m <= 2 * theta * eps or not m_tilde:
            break
        dense = np.array([nu.dense(stiff.n_terms) for nu in m_tilde])
        norms = {nu: cache.v_norm(nu) for nu in m_tilde}
        nvec = np.array([norms[nu] for nu in m_tilde])
        m_val = {nu: float(np.max(nvec[np.all(dense >= dense[i], axis=1)])) for i, nu in enumerate(m_tilde)}
        ranked = sorted(m_tilde, key=lambda v: (-m_val[v], v.sort_key))
        target = theta * e_m
        acc = 0.0
        for nu in ranked:
            try:
                lam.add(nu)
            except MalformedInputError as exc:
                raise OrderingError(str(exc)) from exc
            acc += norms[nu] ** 2
            if acc >= target:
                break
    return steps
