"""Sparse polynomial interpolation on tensorized nested point sequences.

For a univariate sequence t_0, t_1, ... the hierarchical functions are
h_0 = 1 and h_k(t) = prod_{l<k} (t - t_l)/(t_k - t_l). On a downward closed
set Lambda the interpolant is sum_nu alpha_nu H_nu with H_nu = prod_j h_{nu_j}
and grid points y_nu = (t_{nu_1}, t_{nu_2}, ...).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.linalg import solve_triangular
from scipy.optimize import brentq

from .errors import MalformedInputError, SequenceTooShortError
from .model import StiffnessSet
from .multiindex import IndexSet, MultiIndex, anchored_neighbors, product_basis

__all__ = [
    "UnivariateSequence",
    "leja_sequence",
    "rleja_sequence",
    "lebesgue_constant_1d",
    "SparseInterpolant",
    "interpolate",
    "grid_points",
    "hierarchical_matrix",
    "lebesgue_constant",
    "weight_norms",
    "AdaptiveRun",
    "adaptive_interpolate",
]


class UnivariateSequence:
    """Pairwise distinct points in [-1, 1] with their hierarchical functions."""

    def __init__(self, points: Sequence[float], kind: str = "custom"):
        pts = np.asarray(points, dtype=float)
        if pts.ndim != 1 or pts.size == 0:
            raise MalformedInputError("need a non-empty 1-D point list")
        if np.any(np.abs(pts) > 1 + 1e-14):
            raise MalformedInputError("points must lie in [-1, 1]")
        gaps = np.abs(pts[:, None] - pts[None, :]) + np.eye(pts.size)
        if np.min(gaps) <= 1e-14:
            raise MalformedInputError("points must be pairwise distinct")
        self.points = pts
        self.kind = kind
        # denominators prod_{l<k} (t_k - t_l)
        self.denominators = np.array([np.prod(pts[k] - pts[:k]) for k in range(pts.size)])

    @property
    def max_degree(self) -> int:
        return self.points.size - 1

    def __len__(self) -> int:
        return self.points.size

    def hierarchical(self, t, degree: int | None = None) -> np.ndarray:
        """table[k] = h_k(t) for k = 0..degree."""
        degree = self.max_degree if degree is None else degree
        if degree > self.max_degree:
            raise SequenceTooShortError(f"degree {degree} needs {degree + 1} points, have {len(self)}")
        t = np.asarray(t, dtype=float)
        out = np.empty((degree + 1,) + t.shape)
        out[0] = 1.0
        prod = np.ones_like(t)
        for k in range(1, degree + 1):
            prod = prod * (t - self.points[k - 1])
            out[k] = prod / self.denominators[k]
        return out


def _log_product(t: np.ndarray, pts: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.sum(np.log(np.abs(t[:, None] - pts[None, :])), axis=1)


_TIE_LOG_TOL = 1e-10


def _refine(center: float, width: float, pts: np.ndarray, passes: int = 3, m: int = 201) -> tuple[float, float]:
    lo, hi = max(-1.0, center - width), min(1.0, center + width)
    best_t, best_v = center, float(_log_product(np.array([center]), pts)[0])
    for _ in range(passes):
        cand = np.linspace(lo, hi, m)
        vals = _log_product(cand, pts)
        i = int(np.argmax(vals))
        if vals[i] > best_v:
            best_t, best_v = float(cand[i]), float(vals[i])
        step = (hi - lo) / (m - 1)
        lo, hi = max(-1.0, best_t - step), min(1.0, best_t + step)
    # the log product is flat to sqrt(eps) at the peak; its derivative has a clean root
    slope = lambda t: float(np.sum(1.0 / (t - pts)))
    lo, hi = max(-1.0, center - width), min(1.0, center + width)
    if lo < hi and not np.any((pts >= lo) & (pts <= hi)) and slope(lo) > 0 > slope(hi):
        root = brentq(slope, lo, hi, xtol=1e-16, rtol=4 * np.finfo(float).eps)
        value = float(_log_product(np.array([root]), pts)[0])
        if value >= best_v - 1e-14 * max(1.0, abs(best_v)):
            best_t, best_v = root, max(value, best_v)
    return best_t, best_v


def leja_sequence(K: int, grid_size: int = 10**4) -> UnivariateSequence:
    """Leja points t_0 = 1, t_k = argmax prod_{l<k} |t - t_l| on [-1, 1].

    The argmax is searched on a Chebyshev grid, every grid local maximum close
    to the best one is refined by three local passes, and values equal within
    1e-10 (log scale) are resolved toward the smaller t.
    """
    if K < 0:
        raise MalformedInputError("K must be non-negative")
    if grid_size < 10**4:
        raise MalformedInputError("the search grid needs at least 10^4 points")
    grid = np.sort(np.cos(np.pi * np.arange(grid_size) / (grid_size - 1)))
    spacing = np.diff(grid)
    pts = [1.0]
    for _ in range(K):
        arr = np.array(pts)
        vals = _log_product(grid, arr)
        left = np.concatenate([[-np.inf], vals[:-1]])
        right = np.concatenate([vals[1:], [-np.inf]])
        peaks = np.nonzero((vals >= left) & (vals >= right) & np.isfinite(vals))[0]
        top = vals[peaks].max()
        cands = []
        for i in peaks[vals[peaks] >= top - 1.0]:
            width = max(spacing[max(i - 1, 0)], spacing[min(i, spacing.size - 1)])
            cands.append(_refine(float(grid[i]), width, arr))
        best_v = max(v for _, v in cands)
        tied = [t for t, v in cands if v >= best_v - _TIE_LOG_TOL * max(1.0, abs(best_v))]
        pts.append(min(tied))
    return UnivariateSequence(pts, kind="leja")


def rleja_sequence(K: int, circle_size: int = 2**16) -> UnivariateSequence:
    """Real parts of Leja points on the unit circle started at 1, without repeats.

    The circle search grid holds the 2^m-th roots of unity, so the circle
    Leja points are found exactly; ties go to the smallest angle.
    """
    if K < 0:
        raise MalformedInputError("K must be non-negative")
    angles = 2 * np.pi * np.arange(circle_size) / circle_size
    grid = np.exp(1j * angles)
    logs = np.zeros(circle_size)
    chosen = [0]
    reals = [1.0]
    with np.errstate(divide="ignore"):
        logs += np.log(np.abs(grid - grid[0]))
        while len(reals) < K + 1:
            if len(chosen) >= circle_size:
                raise SequenceTooShortError("circle grid exhausted")
            best = np.max(logs)
            i = int(np.nonzero(logs >= best - _TIE_LOG_TOL * max(1.0, abs(best)))[0][0])
            chosen.append(i)
            logs += np.log(np.abs(grid - grid[i]))
            x = float(np.cos(angles[i]))
            if all(abs(x - r) > 1e-12 for r in reals):
                reals.append(x)
    return UnivariateSequence(reals, kind="rleja")


def _barycentric_log_weights(pts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    diff = pts[:, None] - pts[None, :]
    np.fill_diagonal(diff, 1.0)
    logw = -np.sum(np.log(np.abs(diff)), axis=1)
    sign = np.prod(np.sign(diff), axis=1)
    return logw - logw.max(), sign


def lebesgue_constant_1d(seq: UnivariateSequence, k: int, probe_size: int = 10**5) -> float:
    """max over a probe grid of sum_{i<=k} |l_i(t)| for the points t_0..t_k."""
    if k > seq.max_degree:
        raise SequenceTooShortError(f"sequence has only {len(seq)} points")
    if k == 0:
        return 1.0
    pts = seq.points[: k + 1]
    logw, sign = _barycentric_log_weights(pts)
    w = sign * np.exp(logw)
    probe = np.linspace(-1.0, 1.0, probe_size)
    best = 1.0
    for start in range(0, probe_size, 20000):
        t = probe[start:start + 20000]
        diff = t[:, None] - pts[None, :]
        hit = np.any(diff == 0, axis=1)
        diff[hit] = 1.0
        terms = w[None, :] / diff
        with np.errstate(divide="ignore", invalid="ignore"):
            leb = np.sum(np.abs(terms), axis=1) / np.abs(np.sum(terms, axis=1))
        leb[hit] = 1.0
        best = max(best, float(leb.max()))
    return best


def grid_points(lam: Sequence[MultiIndex], seq: UnivariateSequence, dims: int) -> np.ndarray:
    """y_nu with y_j = t_{nu_j} for j <= dims (rows in the order of lam)."""
    members = list(lam)
    top = max((e for nu in members for _, e in nu.items), default=0)
    if top > seq.max_degree:
        raise SequenceTooShortError(f"exponent {top} needs {top + 1} points, have {len(seq)}")
    if any(nu.max_position > dims for nu in members):
        raise MalformedInputError("index set uses more dimensions than the target has")
    Y = np.full((len(members), dims), seq.points[0])
    for i, nu in enumerate(members):
        for p, e in nu.items:
            Y[i, p - 1] = seq.points[e]
    return Y


def _hier_table(Y: np.ndarray, seq: UnivariateSequence, dims: int, degree: int) -> np.ndarray:
    cols = np.asarray(Y, dtype=float)[:, :dims].T
    return np.moveaxis(seq.hierarchical(cols, degree), 0, 1)


def hierarchical_matrix(lam: Sequence[MultiIndex], seq: UnivariateSequence, dims: int) -> np.ndarray:
    """M[i, k] = H_{nu_k}(y_{nu_i}); unit lower triangular in any downward closed order."""
    members = list(lam)
    degree = max((e for nu in members for _, e in nu.items), default=0)
    Y = grid_points(members, seq, dims)
    return product_basis(members, _hier_table(Y, seq, max(dims, 1), degree)).T


class SparseInterpolant:
    """Hierarchical interpolant sum_{nu in Lambda} alpha_nu H_nu."""

    basis = "hierarchical"

    def __init__(self, index_set: IndexSet, seq: UnivariateSequence, alphas: np.ndarray, dims: int, solves: int,
                 norm: Callable[[np.ndarray], np.ndarray] | None = None):
        self.index_set = index_set
        self.seq = seq
        self.alphas = alphas
        self.dims = dims
        self.solves = solves
        self._norm = norm or (lambda v: np.sqrt(np.sum(v * v, axis=0)))
        self.points = grid_points(index_set, seq, dims)

    def coeff(self, nu: MultiIndex) -> np.ndarray:
        return self.alphas[:, self.index_set.position(nu)]

    @property
    def alpha_norms(self) -> np.ndarray:
        return self._norm(self.alphas)

    def basis_values(self, y) -> np.ndarray:
        Y = np.atleast_2d(np.asarray(y, dtype=float))
        if Y.shape[1] < self.dims:
            Y = np.hstack([Y, np.zeros((Y.shape[0], self.dims - Y.shape[1]))])
        degree = max((e for nu in self.index_set for _, e in nu.items), default=0)
        return product_basis(self.index_set, _hier_table(Y, self.seq, max(self.dims, 1), degree))

    def evaluate(self, y) -> np.ndarray:
        Y = np.asarray(y, dtype=float)
        single = Y.ndim == 1
        out = self.alphas @ self.basis_values(Y)
        return out[:, 0] if single else out

    def prefix(self, n: int) -> "SparseInterpolant":
        """The interpolant on the first n members (valid since surpluses are order independent)."""
        return SparseInterpolant(self.index_set.prefix(n), self.seq, self.alphas[:, :n], self.dims, n, self._norm)


def _as_target(target, dims: int | None):
    if isinstance(target, StiffnessSet):
        return target.n_terms if dims is None else dims, target.solve_many, target.v_norm
    if dims is None:
        raise MalformedInputError("dims is required for a callable target")

    def solve_many(Ys, threads=None):
        return np.stack([np.atleast_1d(np.asarray(target(y), dtype=float)) for y in Ys], axis=1)

    return dims, solve_many, None


def interpolate(
    target: StiffnessSet | Callable[[np.ndarray], np.ndarray],
    lam: IndexSet,
    seq: UnivariateSequence,
    dims: int | None = None,
    threads: int | None = None,
) -> SparseInterpolant:
    """Hierarchical surpluses alpha_nu = u(y_nu) - (partial interpolant)(y_nu).

    One evaluation of the target per member of Lambda.
    """
    if not isinstance(lam, IndexSet):
        lam = IndexSet(lam)
    dims, solve_many, norm = _as_target(target, dims)
    Y = grid_points(lam, seq, dims)
    values = solve_many(Y, threads=threads)
    H = hierarchical_matrix(lam, seq, dims)
    alphas = solve_triangular(H, values.T, lower=True, unit_diagonal=True).T
    return SparseInterpolant(lam, seq, alphas, dims, len(lam), norm)


def lebesgue_constant(lam: IndexSet, seq: UnivariateSequence, dims: int | None = None,
                      probe: np.ndarray | None = None, n_probe: int = 10**4, seed: int = 0) -> float:
    """max over probe points of sum_nu |l_nu(y)| for the Lagrange basis of the grid."""
    dims = max(lam.max_active_dim, 1) if dims is None else dims
    if probe is None:
        probe = np.random.default_rng(seed).uniform(-1, 1, (n_probe, dims))
    H = hierarchical_matrix(lam, seq, dims)
    degree = max((e for nu in lam for _, e in nu.items), default=0)
    hv = product_basis(lam, _hier_table(probe, seq, dims, degree))
    lag = solve_triangular(H.T, hv, lower=False, unit_diagonal=True)
    return float(np.max(np.sum(np.abs(lag), axis=0)))


def weight_norms(seq: UnivariateSequence, p: str | float, probe_size: int = 20001) -> np.ndarray:
    """|h_k| in L^p(dt/2) for k = 0..K; p = 2 exactly by Gauss-Legendre, p = inf on a fine grid."""
    if p in ("inf", math.inf):
        t = np.union1d(np.linspace(-1, 1, probe_size), seq.points)
        return np.max(np.abs(seq.hierarchical(t)), axis=1)
    if p in (2, "2"):
        x, w = np.polynomial.legendre.leggauss(seq.max_degree + 1)
        return np.sqrt(np.sum(seq.hierarchical(x) ** 2 * (w / 2), axis=1))
    raise MalformedInputError("p must be 2 or inf")


@dataclass
class AdaptiveRun:
    """Record of an alternating greedy run; interpolants are prefixes of ``final``."""

    final: SparseInterpolant
    order: list[MultiIndex]
    entered: dict[MultiIndex, int]
    rules: list[str]
    solves_at: list[int]
    frontier: dict[MultiIndex, np.ndarray] = field(repr=False, default_factory=dict)

    def interpolant(self, n: int) -> SparseInterpolant:
        out = self.final.prefix(n)
        out.solves = self.solves_at[n - 1]
        return out

    def interpolants(self):
        return [self.interpolant(n) for n in range(1, len(self.order) + 1)]


def adaptive_interpolate(
    target: StiffnessSet | Callable[[np.ndarray], np.ndarray],
    n_max: int,
    seq: UnivariateSequence | None = None,
    weight_p: str | float = "inf",
    dims: int | None = None,
    alternate: bool = True,
    threads: int | None = None,
) -> AdaptiveRun:
    """Grow anchored downward closed sets one index at a time.

    At step n (building Lambda_n, n >= 2) the candidates are the anchored
    neighbors of Lambda_{n-1}, each with its surplus computed once. Even n
    pick the largest c_nu |alpha_nu|; odd n pick the candidate that entered
    the frontier earliest. With ``alternate=False`` every step is greedy.
    Ties go to the smaller index in the total order.
    """
    if n_max < 1:
        raise MalformedInputError("n_max must be at least 1")
    dims, solve_many, norm = _as_target(target, dims)
    norm = norm or (lambda v: np.sqrt(np.sum(v * v, axis=0)))
    seq = seq if seq is not None else leja_sequence(max(n_max, 1))
    c1d = weight_norms(seq, weight_p)
    zero = MultiIndex.zero()
    lam = IndexSet([zero], anchored=True)
    alpha = {zero: solve_many(grid_points([zero], seq, dims), threads=threads)[:, 0]}
    solves = 1
    entered: dict[MultiIndex, int] = {}
    pending: dict[MultiIndex, np.ndarray] = {}
    rules = ["init"]
    solves_at = [solves]
    for n in range(2, n_max + 1):
        cands = [nu for nu in anchored_neighbors(lam) if nu.max_position <= dims]
        new = [nu for nu in cands if nu not in pending]
        if new:
            Y = grid_points(new, seq, dims)
            vals = solve_many(Y, threads=threads)
            solves += len(new)
            # H_mu(y_nu) vanishes unless mu <= nu, and those mu are all in lam already
            current = np.stack([alpha[mu] for mu in lam], axis=1)
            degree = max((e for nu in list(lam) + new for _, e in nu.items), default=0)
            partial = current @ product_basis(lam, _hier_table(Y, seq, dims, degree))
            for col, nu in enumerate(new):
                pending[nu] = vals[:, col] - partial[:, col]
                entered[nu] = n
        if not cands:
            break
        if alternate and n % 2 == 1:
            pick = min(cands, key=lambda nu: (entered[nu], nu.sort_key))
            rules.append("oldest")
        else:
            score = {nu: math.prod(c1d[e] for _, e in nu.items) * float(norm(pending[nu])) for nu in cands}
            top = max(score.values())
            pick = min((nu for nu in cands if score[nu] >= top * (1 - 1e-12)), key=lambda nu: nu.sort_key)
            rules.append("greedy")
        lam.add(pick)
        alpha[pick] = pending.pop(pick)
        solves_at.append(solves)
    alphas = np.stack([alpha[nu] for nu in lam], axis=1)
    final = SparseInterpolant(lam, seq, alphas, dims, solves, norm)
    return AdaptiveRun(final, list(lam), entered, rules, solves_at, pending)
