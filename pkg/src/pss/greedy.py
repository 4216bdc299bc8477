"""Weak greedy selection on finite vector families and its reduced basis form.

Vectors are stored in Euclidean coordinates of the chosen inner product
(for the V-norm, x -> U x with L = U^T U the banded Cholesky factor), so
projections and Gram-Schmidt are plain linear algebra.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy.linalg import qr, solve_banded, svd
from scipy.stats import qmc

from .errors import ConfigurationError, MalformedInputError, NumericalError, SolverError
from .model import StiffnessSet

__all__ = [
    "CompactSet",
    "GreedyTrace",
    "weak_greedy",
    "matrix_trace",
    "diagonal_set",
    "block_set",
    "width_upper",
    "training_set",
    "covering_radius",
    "ReducedBasis",
    "rb_offline",
    "rb_online",
    "snapshot_widths",
    "v_coordinates",
]

_ORTH_TOL = 1e-8


def v_coordinates(stiff: StiffnessSet, U: np.ndarray, inner: str = "V") -> np.ndarray:
    """Coordinates in which the Euclidean product equals the requested one."""
    U = np.asarray(U, dtype=float)
    if inner == "euclidean":
        return U
    if inner == "V":
        chol = stiff._lap_chol
    elif inner == "abar":
        chol = stiff._bbar_chol
    else:
        raise MalformedInputError(f"unknown inner product {inner!r}")
    diag, sup = chol[1], chol[0][1:]
    out = diag.reshape((-1,) + (1,) * (U.ndim - 1)) * U
    out[:-1] += sup.reshape((-1,) + (1,) * (U.ndim - 1)) * U[1:]
    return out


@dataclass
class CompactSet:
    """Finite family of vectors (columns) with labels, in Euclidean coordinates."""

    vectors: np.ndarray
    labels: list = field(default_factory=list)
    inner: str = "euclidean"

    def __post_init__(self):
        self.vectors = np.atleast_2d(np.asarray(self.vectors, dtype=float))
        if not np.all(np.isfinite(self.vectors)):
            raise MalformedInputError("vectors must be finite")
        if not self.labels:
            self.labels = list(range(self.vectors.shape[1]))
        if len(self.labels) != self.vectors.shape[1]:
            raise MalformedInputError("one label per vector")

    def __len__(self) -> int:
        return self.vectors.shape[1]

    @classmethod
    def from_model(cls, stiff: StiffnessSet, ys: np.ndarray, inner: str = "V", threads: int | None = None) -> "CompactSet":
        ys = np.atleast_2d(ys)
        U = stiff.solve_many(ys, threads=threads)
        return cls(v_coordinates(stiff, U, inner), [tuple(map(float, y)) for y in ys], inner)

    @classmethod
    def from_file(cls, path: str | Path) -> "CompactSet":
        """A .npy/.txt matrix whose columns are the vectors (Euclidean)."""
        path = Path(path)
        data = np.load(path) if path.suffix == ".npy" else np.loadtxt(path, ndmin=2)
        return cls(data)


def diagonal_set(x: Sequence[float]) -> CompactSet:
    """{x_j e_j}."""
    x = np.asarray(x, dtype=float)
    return CompactSet(np.diag(x))


def block_set(s: float, levels: int) -> CompactSet:
    """{x_j e_j} with x_j = 2^(-k s) for 2^(k-1) <= j <= 2^k - 1, k = 1..levels."""
    x = [2.0 ** (-k * s) for k in range(1, levels + 1) for _ in range(2 ** (k - 1))]
    return diagonal_set(x)


@dataclass
class GreedyTrace:
    """Selections, orthonormal basis, sigma_n and the matrix a_{i,j} = <g_i, q_j>.

    sigma[n] is the largest distance of the set to the span of the first n
    selections (sigma[0] is the largest norm).
    """

    labels: list
    indices: list[int]
    basis: np.ndarray
    sigma: np.ndarray
    A: np.ndarray
    gamma: float
    estimates: list[float] = field(default_factory=list)
    reorthogonalizations: int = 0

    @property
    def n(self) -> int:
        return len(self.indices)


def _orthonormalize(Q: np.ndarray, v: np.ndarray) -> tuple[np.ndarray, int]:
    # two classical passes, a third only if orthogonality is still lost
    w = v - Q @ (Q.T @ v)
    w = w - Q @ (Q.T @ w)
    passes = 1
    if Q.shape[1] and np.linalg.norm(Q.T @ w) > _ORTH_TOL * max(np.linalg.norm(w), 1e-300):
        w = w - Q @ (Q.T @ w)
        passes += 1
    return w, passes


def weak_greedy(
    cset: CompactSet,
    gamma: float = 1.0,
    n_max: int | None = None,
    distance: str | Callable[[list[int], np.ndarray], np.ndarray] = "exact",
    selection: str = "first",
    tol: float = 1e-14,
) -> GreedyTrace:
    """Greedy selection from a finite set.

    ``distance="exact"`` uses true projection distances; among members with
    distance >= gamma * max, ``selection="first"`` takes the smallest label
    and ``"worst"`` the smallest admissible distance. A callable ``distance``
    receives the selected indices and the current orthonormal basis and
    returns an estimate per member; its argmax (smallest label on ties) is
    taken. Either way sigma_n is measured exactly on the set.
    """
    if not 0 < gamma <= 1:
        raise MalformedInputError("gamma must lie in (0, 1]")
    if selection not in ("first", "worst"):
        raise MalformedInputError("selection must be 'first' or 'worst'")
    X = cset.vectors
    m, N = X.shape
    n_max = N if n_max is None else n_max
    resid = X.copy()
    Q = np.zeros((m, 0))
    dists = np.linalg.norm(resid, axis=0)
    scale = max(float(dists.max()), 1e-300) if N else 1.0
    sigma = [float(dists.max()) if N else 0.0]
    chosen: list[int] = []
    estimates: list[float] = []
    reorth = 0
    while len(chosen) < min(n_max, N, m) and sigma[-1] > tol * scale:
        if distance == "exact":
            admissible = np.nonzero(dists >= gamma * sigma[-1] * (1 - 1e-12))[0]
            if selection == "first":
                pick = int(admissible[0])
            else:
                pick = int(admissible[np.argmin(dists[admissible])])
            estimates.append(float(dists[pick]))
        else:
            est = np.asarray(distance(chosen, Q), dtype=float)
            top = est.max()
            pick = int(np.nonzero(est >= top * (1 - 1e-12))[0][0])
            estimates.append(float(top))
        w, passes = _orthonormalize(Q, X[:, pick])
        reorth += passes - 1
        nrm = np.linalg.norm(w)
        if nrm <= tol * scale:
            break
        q = w / nrm
        Q = np.hstack([Q, q[:, None]])
        if np.linalg.norm(Q.T @ Q - np.eye(Q.shape[1])) > _ORTH_TOL:
            q2, _ = _orthonormalize(Q[:, :-1], q)
            Q[:, -1] = q2 / np.linalg.norm(q2)
            reorth += 1
        chosen.append(pick)
        resid = X - Q @ (Q.T @ X)
        dists = np.linalg.norm(resid, axis=0)
        sigma.append(float(dists.max()))
    if len(chosen) < n_max and len(chosen) == min(N, m):
        sigma[-1] = 0.0 if sigma[-1] <= tol * scale else sigma[-1]
    A = X[:, chosen].T @ Q
    return GreedyTrace([cset.labels[i] for i in chosen], chosen, Q, np.array(sigma), np.tril(A), gamma,
                       estimates, reorth)


def matrix_trace(trace: GreedyTrace, tol: float = 1e-10) -> dict:
    """Check gamma sigma_n <= |a_nn| <= sigma_n and sum_{j=n}^m a_mj^2 <= sigma_n^2 (m >= n)."""
    A, s, g = trace.A, trace.sigma, trace.gamma
    n = A.shape[0]
    p1, p2 = [], []
    for i in range(n):
        d = abs(A[i, i])
        if not (g * s[i] - tol * max(s[0], 1) <= d <= s[i] + tol * max(s[0], 1)):
            p1.append((i, d, s[i]))
    for i in range(n):
        tails = np.sum(A[i:, i:] ** 2, axis=1)
        for k, val in enumerate(tails):
            if val > s[i] ** 2 + tol * max(s[0] ** 2, 1):
                p2.append((i, i + k, val, s[i] ** 2))
    return {"A": A, "p1_violations": p1, "p2_violations": p2, "ok": not p1 and not p2}


def width_upper(cset: CompactSet, n: int) -> float:
    """max_g dist(g, V_n) with V_n the span of the top n left singular vectors (>= d_n)."""
    X = cset.vectors
    if n == 0:
        return float(np.linalg.norm(X, axis=0).max())
    Uv, _, _ = svd(X, full_matrices=False)
    Uv = Uv[:, :n]
    return float(np.linalg.norm(X - Uv @ (Uv.T @ X), axis=0).max())


def snapshot_widths(stiff: StiffnessSet, ys: np.ndarray, inner: str = "V", threads: int | None = None) -> np.ndarray:
    """Singular values of the snapshot matrix in the chosen inner product."""
    U = stiff.solve_many(np.atleast_2d(ys), threads=threads)
    return svd(v_coordinates(stiff, U, inner), compute_uv=False)


def training_set(spec: str, dims: int, seed: int = 0) -> np.ndarray:
    """'lattice:k' (k points per axis, including the endpoints) or 'lds:m' (scrambled Sobol)."""
    try:
        kind, size = spec.split(":")
        size = int(size)
    except ValueError as exc:
        raise MalformedInputError(f"bad training set spec {spec!r}") from exc
    if kind == "lattice":
        if size < 2 or size ** dims > 10**6:
            raise ConfigurationError(f"lattice {size}^{dims} is outside the supported range")
        axes = np.linspace(-1.0, 1.0, size)
        return np.array(np.meshgrid(*([axes] * dims), indexing="ij")).reshape(dims, -1).T
    if kind == "lds":
        if size < 1:
            raise ConfigurationError("lds size must be positive")
        pts = qmc.Sobol(d=dims, scramble=True, seed=seed).random(size)
        return 2.0 * pts - 1.0
    raise MalformedInputError(f"unknown training set kind {kind!r}")


def covering_radius(train: np.ndarray, spec: str | None = None, n_probe: int = 10**4, seed: int = 0) -> float:
    """Sup-norm covering radius: exact for lattices, a probe estimate otherwise."""
    if spec and spec.startswith("lattice:"):
        return 1.0 / (int(spec.split(":")[1]) - 1)
    probe = np.random.default_rng(seed).uniform(-1, 1, (n_probe, train.shape[1]))
    best = np.full(n_probe, np.inf)
    for start in range(0, train.shape[0], 512):
        chunk = train[start:start + 512]
        dist = np.max(np.abs(probe[:, None, :] - chunk[None, :, :]), axis=2)
        best = np.minimum(best, dist.min(axis=1))
    return float(best.max())


@dataclass
class ReducedBasis:
    """V-orthonormal reduced basis with projected affine operators.

    The residual surrogate d(y, V_n) = |F - B(y) u_n(y)|_{V*} is evaluated as
    |R z| where R is the triangular QR factor of F, Bbar q_i and B_j q_i in
    dual-norm coordinates (R^T R is their Gram matrix). Working with R instead
    of the Gram matrix keeps full relative accuracy for small residuals.
    """

    Q: np.ndarray
    params: np.ndarray
    bbar_n: np.ndarray
    bj_n: np.ndarray
    f_n: np.ndarray
    resid_factor: np.ndarray
    alpha: float
    R: float
    surrogate_max: list[float] = field(default_factory=list)
    truth_solves: int = 0
    covering: float | None = None
    stop_threshold: float | None = None

    @property
    def n(self) -> int:
        return self.Q.shape[1]

    @property
    def delta(self) -> float:
        return (self.alpha / self.R) ** 1.5

    @property
    def beta(self) -> float:
        return self.R / self.alpha

    @property
    def gamma(self) -> float:
        return self.delta / self.beta

    def coefficients(self, Y: np.ndarray, n: int | None = None) -> np.ndarray:
        """Galerkin coefficients (rows) for parameter rows of Y using the first n basis vectors."""
        n = self.n if n is None else n
        Y = np.atleast_2d(Y)
        J = self.bj_n.shape[0]
        Yp = np.zeros((Y.shape[0], J))
        Yp[:, :min(J, Y.shape[1])] = Y[:, :J]
        M = self.bbar_n[None, :n, :n] + np.einsum("kj,jab->kab", Yp, self.bj_n[:, :n, :n])
        rhs = np.broadcast_to(self.f_n[:n], (Y.shape[0], n))[..., None]
        try:
            return np.linalg.solve(M, rhs)[..., 0]
        except np.linalg.LinAlgError as exc:
            raise SolverError("reduced system is singular") from exc

    def surrogate(self, Y: np.ndarray, n: int | None = None) -> np.ndarray:
        n = self.n if n is None else n
        Y = np.atleast_2d(Y)
        J = self.bj_n.shape[0]
        Yp = np.zeros((Y.shape[0], J))
        Yp[:, :min(J, Y.shape[1])] = Y[:, :J]
        if n == 0:
            return np.full(Y.shape[0], float(np.linalg.norm(self.resid_factor[:, 0])))
        c = self.coefficients(Y, n)
        N = self.n
        idx = [0] + list(range(1, 1 + n)) + [1 + N + j * N + i for j in range(J) for i in range(n)]
        z = np.hstack([np.ones((Y.shape[0], 1)), -c, -(Yp[:, :, None] * c[:, None, :]).reshape(Y.shape[0], -1)])
        return np.linalg.norm(z @ self.resid_factor[:, idx].T, axis=1)

    def save(self, prefix: str | Path) -> None:
        prefix = Path(prefix)
        np.savez(prefix.with_suffix(".npz"), Q=self.Q, params=self.params, bbar_n=self.bbar_n, bj_n=self.bj_n,
                 f_n=self.f_n, resid_factor=self.resid_factor)
        meta = {"alpha": self.alpha, "R": self.R, "n": self.n, "surrogate_max": self.surrogate_max,
                "truth_solves": self.truth_solves, "covering": self.covering,
                "stop_threshold": self.stop_threshold}
        prefix.with_suffix(".json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, prefix: str | Path) -> "ReducedBasis":
        prefix = Path(prefix)
        meta = json.loads(prefix.with_suffix(".json").read_text())
        with np.load(prefix.with_suffix(".npz")) as data:
            arrays = {k: data[k] for k in data.files}
        return cls(alpha=meta["alpha"], R=meta["R"], surrogate_max=meta["surrogate_max"],
                   truth_solves=meta["truth_solves"], covering=meta["covering"],
                   stop_threshold=meta["stop_threshold"], **arrays)


def _assemble_rb(stiff: StiffnessSet, Q: np.ndarray, params: np.ndarray, alpha: float, R: float) -> ReducedBasis:
    n, J = Q.shape[1], stiff.n_terms
    BQ = stiff.bbar.matvec(Q)
    BjQ = [b.matvec(Q) for b in stiff.bjs]
    residual_parts = np.hstack([stiff.F[:, None], BQ] + BjQ)
    # |r|_{V*} = |U^{-T} r| with L = U^T U
    chol = stiff._lap_chol
    lower = np.zeros_like(chol)
    lower[0], lower[1, :-1] = chol[1], chol[0][1:]
    coords = solve_banded((1, 0), lower, residual_parts)
    factor = qr(coords, mode="r")[0]
    bj_n = np.stack([Q.T @ b for b in BjQ]) if J else np.zeros((0, n, n))
    return ReducedBasis(Q, params, Q.T @ BQ, bj_n, Q.T @ stiff.F, factor, alpha, R)


def rb_offline(
    stiff: StiffnessSet,
    train: np.ndarray,
    eps: float,
    n_max: int | None = None,
    train_spec: str | None = None,
    check_covering: bool = True,
) -> ReducedBasis:
    """Surrogate-driven greedy over a training set.

    The first snapshot is the first training point (the surrogate is constant
    on the empty basis); afterwards the training point with the largest
    surrogate is added until that maximum is <= eps/(3 beta). Each selected
    snapshot costs one truth solve.
    """
    if eps <= 0:
        raise MalformedInputError("eps must be positive")
    train = np.atleast_2d(np.asarray(train, dtype=float))
    if train.shape[1] != stiff.n_terms:
        raise MalformedInputError(f"training points need {stiff.n_terms} coordinates")
    alpha, R = stiff.r, stiff.continuity
    beta = R / alpha
    threshold = eps / (3 * beta)
    cover = covering_radius(train, train_spec)
    if check_covering:
        # |u(y) - u(y')|_V <= |F|_* / alpha^2 * sum_j |y_j - y'_j| b_j
        lip = stiff.load_dual_norm / alpha ** 2 * float(np.sum(stiff.family.norms))
        if lip * cover > eps / 3:
            raise ConfigurationError(
                f"training set too coarse: covering radius {cover:.3g} allows errors {lip * cover:.3g} > eps/3")
    n_max = min(stiff.n_dofs, len(train)) if n_max is None else min(n_max, stiff.n_dofs, len(train))
    start = stiff.truth_solves
    Q = np.zeros((stiff.n_dofs, 0))
    params: list[np.ndarray] = []
    pick = 0
    maxima: list[float] = []
    L = stiff.laplacian
    while True:
        u = stiff.solve(train[pick])
        w = u - Q @ (Q.T @ L.matvec(u))
        w = w - Q @ (Q.T @ L.matvec(w))
        nrm = float(stiff.v_norm(w))
        if nrm <= 1e-14 * max(float(stiff.v_norm(u)), 1e-300):
            break
        Q = np.hstack([Q, (w / nrm)[:, None]])
        params.append(train[pick])
        rb = _assemble_rb(stiff, Q, np.array(params), alpha, R)
        est = rb.surrogate(train)
        top = float(est.max())
        maxima.append(top)
        if top <= threshold or Q.shape[1] >= n_max:
            break
        pick = int(np.nonzero(est >= top * (1 - 1e-12))[0][0])
    rb = _assemble_rb(stiff, Q, np.array(params), alpha, R)
    rb.surrogate_max = maxima
    rb.truth_solves = stiff.truth_solves - start
    rb.covering = cover
    rb.stop_threshold = threshold
    return rb


def rb_online(basis: ReducedBasis, y, lift: bool = True):
    """Galerkin coefficients in the orthonormal basis and, optionally, the lifted field."""
    y = np.asarray(y, dtype=float)
    if np.any(np.abs(y) > 1 + 1e-12):
        raise MalformedInputError("parameters must lie in [-1, 1]")
    c = basis.coefficients(y[None, :])[0]
    if not np.all(np.isfinite(c)):
        raise NumericalError("reduced solution is not finite")
    return (c, basis.Q @ c) if lift else (c, None)
