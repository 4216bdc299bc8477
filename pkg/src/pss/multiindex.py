"""Multi-indices, downward closed index sets and a priori set construction.

A multi-index is a finitely supported sequence of non-negative integers.
Positions are 1-based; positions carrying a zero exponent are not stored.
"""

from __future__ import annotations

import heapq
import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .errors import InvalidCapError, MalformedInputError, NumericalError, SurrogateViolationError

__all__ = [
    "MultiIndex",
    "IndexSet",
    "SurrogateWeights",
    "is_downward_closed",
    "neighbors",
    "anchored_neighbors",
    "margin",
    "build_apriori_set",
    "simplex_set",
    "simplex_cardinality_bound",
    "box_set",
    "total_degree_set",
    "monotone_majorant",
    "monotone_majorant_order",
    "random_downward_closed",
    "legendre_radius_factor",
    "product_basis",
]


class MultiIndex:
    """Immutable sparse multi-index.

    Parameters
    ----------
    entries : mapping or iterable of (position, exponent) pairs, optional
        Positions must be integers >= 1 and exponents integers >= 0.
        Zero exponents are dropped.
    """

    __slots__ = ("_items", "_hash")

    def __init__(self, entries: Mapping[int, int] | Iterable[tuple[int, int]] | None = None):
        pairs: dict[int, int] = {}
        if entries is not None:
            source = entries.items() if isinstance(entries, Mapping) else entries
            for pos, exp in source:
                pos_i, exp_i = int(pos), int(exp)
                if pos_i != pos or exp_i != exp:
                    raise MalformedInputError(f"non-integer entry ({pos}, {exp})")
                if pos_i < 1:
                    raise MalformedInputError(f"positions are 1-based, got {pos_i}")
                if exp_i < 0:
                    raise MalformedInputError(f"negative exponent at position {pos_i}")
                if pos_i in pairs:
                    raise MalformedInputError(f"position {pos_i} given twice")
                if exp_i > 0:
                    pairs[pos_i] = exp_i
        self._items = tuple(sorted(pairs.items()))
        self._hash = hash(self._items)

    @classmethod
    def zero(cls) -> "MultiIndex":
        return _ZERO

    @classmethod
    def unit(cls, position: int, exponent: int = 1) -> "MultiIndex":
        return cls({position: exponent})

    @classmethod
    def from_dense(cls, exponents: Sequence[int]) -> "MultiIndex":
        return cls((j + 1, e) for j, e in enumerate(exponents) if e)

    @classmethod
    def from_json(cls, pairs: Sequence[Sequence[int]]) -> "MultiIndex":
        return cls((p, e) for p, e in pairs)

    @property
    def items(self) -> tuple[tuple[int, int], ...]:
        return self._items

    @property
    def support(self) -> tuple[int, ...]:
        return tuple(p for p, _ in self._items)

    @property
    def order(self) -> int:
        """Sum of the exponents, written |nu|."""
        return sum(e for _, e in self._items)

    @property
    def n_active(self) -> int:
        return len(self._items)

    @property
    def max_position(self) -> int:
        """Largest active position, 0 for the null index."""
        return self._items[-1][0] if self._items else 0

    def is_zero(self) -> bool:
        return not self._items

    def __getitem__(self, position: int) -> int:
        for p, e in self._items:
            if p == position:
                return e
            if p > position:
                break
        return 0

    def plus(self, position: int, amount: int = 1) -> "MultiIndex":
        d = dict(self._items)
        d[position] = d.get(position, 0) + amount
        return MultiIndex(d)

    def minus(self, position: int) -> "MultiIndex":
        d = dict(self._items)
        if d.get(position, 0) == 0:
            raise MalformedInputError(f"position {position} is not active")
        d[position] -= 1
        return MultiIndex(d)

    def predecessors(self) -> list["MultiIndex"]:
        """The indices nu - e_j for every active position j."""
        return [self.minus(p) for p in self.support]

    def dense(self, length: int | None = None) -> tuple[int, ...]:
        n = self.max_position if length is None else length
        if n < self.max_position:
            raise MalformedInputError(f"dense length {n} below max position {self.max_position}")
        out = [0] * n
        for p, e in self._items:
            out[p - 1] = e
        return tuple(out)

    def is_below(self, other: "MultiIndex") -> bool:
        """Componentwise comparison self <= other."""
        return all(other[p] >= e for p, e in self._items)

    @property
    def sort_key(self) -> tuple:
        """Key of the tie-breaking total order: |nu|, max position, dense prefix."""
        return (self.order, self.max_position, self.dense())

    def __lt__(self, other: "MultiIndex") -> bool:
        return self.sort_key < other.sort_key

    def __eq__(self, other: object) -> bool:
        return isinstance(other, MultiIndex) and self._items == other._items

    def __hash__(self) -> int:
        return self._hash

    def to_json(self) -> list[list[int]]:
        return [[p, e] for p, e in self._items]

    def __repr__(self) -> str:
        if not self._items:
            return "MultiIndex()"
        return "MultiIndex({" + ", ".join(f"{p}: {e}" for p, e in self._items) + "})"

    def __str__(self) -> str:
        if not self._items:
            return "0"
        return "+".join((f"{e}e{p}" if e > 1 else f"e{p}") for p, e in self._items)


_ZERO = MultiIndex()


class IndexSet:
    """Ordered, downward closed collection of multi-indices.

    Insertion order is kept, and every insertion is validated so that each
    prefix of the order is itself downward closed.

    Parameters
    ----------
    members : iterable of MultiIndex
        Inserted one after the other.
    anchored : bool
        If true, insertions must also keep the set anchored: e_j in the set
        requires e_l in the set for every l <= j.
    """

    def __init__(self, members: Iterable[MultiIndex] = (), anchored: bool = False):
        self._members: list[MultiIndex] = []
        self._position: dict[MultiIndex, int] = {}
        self._max_dim = 0
        self.anchored = anchored
        self.info: dict = {}
        for nu in members:
            self.add(nu)

    def add(self, nu: MultiIndex) -> None:
        if not isinstance(nu, MultiIndex):
            raise MalformedInputError(f"expected MultiIndex, got {type(nu).__name__}")
        if nu in self._position:
            raise MalformedInputError(f"duplicate index {nu}")
        for p in nu.support:
            if nu.minus(p) not in self._position:
                raise MalformedInputError(f"inserting {nu} before {nu.minus(p)} breaks downward closedness")
        if self.anchored and nu.n_active == 1 and nu.order == 1 and nu.max_position > 1:
            if MultiIndex.unit(nu.max_position - 1) not in self._position:
                raise MalformedInputError(f"inserting {nu} breaks anchoring")
        self._position[nu] = len(self._members)
        self._members.append(nu)
        self._max_dim = max(self._max_dim, nu.max_position)

    def extend(self, members: Iterable[MultiIndex]) -> None:
        for nu in members:
            self.add(nu)

    @property
    def max_active_dim(self) -> int:
        """j(Lambda): the largest active position over all members."""
        return self._max_dim

    @property
    def members(self) -> list[MultiIndex]:
        return list(self._members)

    def position(self, nu: MultiIndex) -> int:
        return self._position[nu]

    def prefix(self, n: int) -> "IndexSet":
        return IndexSet(self._members[:n], anchored=self.anchored)

    def copy(self) -> "IndexSet":
        out = IndexSet(anchored=self.anchored)
        out._members = list(self._members)
        out._position = dict(self._position)
        out._max_dim = self._max_dim
        out.info = dict(self.info)
        return out

    def is_anchored_set(self) -> bool:
        units = [nu.max_position for nu in self._members if nu.n_active == 1 and nu.order == 1]
        return all(MultiIndex.unit(l) in self._position for j in units for l in range(1, j))

    def __contains__(self, nu: object) -> bool:
        return nu in self._position

    def __len__(self) -> int:
        return len(self._members)

    def __iter__(self):
        return iter(self._members)

    def __getitem__(self, i: int) -> MultiIndex:
        return self._members[i]

    def to_json(self) -> list[list[list[int]]]:
        return [nu.to_json() for nu in self._members]

    @classmethod
    def from_json(cls, data: Sequence, anchored: bool = False) -> "IndexSet":
        return cls((MultiIndex.from_json(pairs) for pairs in data), anchored=anchored)

    def __repr__(self) -> str:
        return f"IndexSet({[str(nu) for nu in self._members]})"


def is_downward_closed(collection: Iterable[MultiIndex]) -> bool:
    """True iff nu - e_j belongs to the collection for every member nu and j in supp(nu)."""
    items = list(collection)
    pool = set(items)
    if len(pool) != len(items):
        raise MalformedInputError("collection contains duplicate multi-indices")
    return all(nu.minus(p) in pool for nu in items for p in nu.support)


def _check_cap(lam: IndexSet, d_max: int) -> None:
    if d_max < lam.max_active_dim:
        raise InvalidCapError(f"cap {d_max} is below the active dimension {lam.max_active_dim}")


def _successor_candidates(lam: IndexSet, d_max: int) -> set[MultiIndex]:
    if len(lam) == 0:
        return {_ZERO}
    out = set()
    for nu in lam:
        for j in range(1, d_max + 1):
            cand = nu.plus(j)
            if cand not in lam:
                out.add(cand)
    return out


def neighbors(lam: IndexSet, d_max: int) -> list[MultiIndex]:
    """Indices outside the set whose predecessors all lie in it (positions <= d_max)."""
    _check_cap(lam, d_max)
    cands = _successor_candidates(lam, d_max)
    return sorted(nu for nu in cands if all(nu.minus(p) in lam for p in nu.support))


def anchored_neighbors(lam: IndexSet) -> list[MultiIndex]:
    """Neighbors whose active positions do not exceed j(Lambda) + 1."""
    return neighbors(lam, lam.max_active_dim + 1)


def margin(lam: IndexSet, d_max: int) -> list[MultiIndex]:
    """Indices outside the set with at least one predecessor inside (positions <= d_max)."""
    _check_cap(lam, d_max)
    return sorted(_successor_candidates(lam, d_max))


def legendre_radius_factor(rho: float) -> float:
    """The factor pi*rho / (2*(rho - 1)) attached to a polyellipse of parameter rho > 1."""
    if rho <= 1.0:
        raise MalformedInputError(f"radius must exceed 1, got {rho}")
    return math.pi * rho / (2.0 * (rho - 1.0))


@dataclass(frozen=True)
class SurrogateWeights:
    """Product-form surrogate s_nu for coefficient sizes.

    kinds
        ``product-of-radii``: prod_j (1 + nu_j)^b rho_j^(-nu_j)
        ``legendre-product``: prod_{j in supp} theta(rho_j) (1 + 2 nu_j)^(1 + b) rho_j^(-nu_j)
        ``simplex``: 2^(-sum_j lambda_j nu_j)

    Positions beyond the given parameters evaluate to 0 (no such dimension).
    """

    kind: str
    params: tuple[float, ...]
    b: float = 0.0
    _kinds: tuple = field(default=("product-of-radii", "legendre-product", "simplex"), repr=False, compare=False)

    def __post_init__(self):
        if self.kind not in self._kinds:
            raise MalformedInputError(f"unknown surrogate kind {self.kind!r}")
        object.__setattr__(self, "params", tuple(float(p) for p in self.params))
        if any(p <= 0 for p in self.params):
            raise MalformedInputError("surrogate parameters must be positive")
        if self.b < 0:
            raise MalformedInputError("algebraic exponent b must be non-negative")
        if self.kind == "legendre-product" and any(p <= 1 for p in self.params):
            raise MalformedInputError("legendre-product radii must exceed 1")

    def __call__(self, nu: MultiIndex) -> float:
        if nu.max_position > len(self.params):
            return 0.0
        value = 1.0
        for p, e in nu.items:
            par = self.params[p - 1]
            if self.kind == "product-of-radii":
                value *= (1.0 + e) ** self.b * par ** (-e)
            elif self.kind == "legendre-product":
                value *= legendre_radius_factor(par) * (1.0 + 2 * e) ** (1.0 + self.b) * par ** (-e)
            else:
                value *= 2.0 ** (-par * e)
        return value


_TIE_RTOL = 1e-12


def build_apriori_set(
    surrogate: Callable[[MultiIndex], float],
    n: int,
    max_dim: int | None = None,
) -> IndexSet:
    """Greedy anchored construction of the set of the n largest surrogate values.

    Starting from {0}, each step inserts the anchored neighbor with the
    largest surrogate value; near ties (relative 1e-12) go to the smaller
    index in the total order. Each candidate is evaluated once; the count is
    stored in ``info["surrogate_evaluations"]`` and checked against n^2/2 + n.

    Raises
    ------
    SurrogateViolationError
        If a candidate exceeds the value of one of its predecessors, or a
        unit index exceeds the value of the previous unit index.
    """
    if n < 1:
        raise MalformedInputError("n must be at least 1")
    lam = IndexSet([_ZERO], anchored=True)
    values: dict[MultiIndex, float] = {_ZERO: float(surrogate(_ZERO))}
    evaluations = 1
    heap: list[tuple[float, tuple, MultiIndex]] = []

    def consider(nu: MultiIndex) -> None:
        nonlocal evaluations
        if nu in values or nu in lam:
            return
        if max_dim is not None and nu.max_position > max_dim:
            return
        if any(nu.minus(p) not in lam for p in nu.support):
            return
        if nu.max_position > lam.max_active_dim + 1:
            return
        v = float(surrogate(nu))
        evaluations += 1
        if not np.isfinite(v) or v < 0:
            raise SurrogateViolationError(f"surrogate value {v} at {nu} is not a finite non-negative number")
        for p in nu.support:
            pv = values[nu.minus(p)]
            if v > pv * (1 + _TIE_RTOL):
                raise SurrogateViolationError(f"s({nu})={v} exceeds s({nu.minus(p)})={pv}")
        if nu.n_active == 1 and nu.order == 1 and nu.max_position > 1:
            prev = values[MultiIndex.unit(nu.max_position - 1)]
            if v > prev * (1 + _TIE_RTOL):
                raise SurrogateViolationError(f"surrogate is not anchored at {nu}")
        values[nu] = v
        heapq.heappush(heap, (-v, nu.sort_key, nu))

    def expand(nu: MultiIndex) -> None:
        jmax = lam.max_active_dim
        for j in range(1, jmax + 2):
            consider(nu.plus(j))
        consider(MultiIndex.unit(jmax + 1))

    if n > 1:
        expand(_ZERO)
    while len(lam) < n and heap:
        best_neg, _, best = heapq.heappop(heap)
        tied = []
        while heap and -heap[0][0] >= -best_neg * (1 - _TIE_RTOL):
            tied.append(heapq.heappop(heap))
        if tied:
            pool = [(best_neg, best.sort_key, best)] + tied
            pool.sort(key=lambda item: item[1])
            best = pool[0][2]
            for item in pool[1:]:
                heapq.heappush(heap, item)
        lam.add(best)
        if len(lam) < n:
            expand(best)
    if evaluations > n * n / 2 + n:
        raise NumericalError(f"{evaluations} surrogate evaluations exceed the n^2/2 + n budget")
    lam.info["surrogate_evaluations"] = evaluations
    lam.info["surrogate_values"] = [values[nu] for nu in lam]
    return lam


def simplex_set(weights: Sequence[float], k: float) -> IndexSet:
    """All nu on the given dimensions with sum_j weights_j nu_j <= k, in total order."""
    lam = [float(w) for w in weights]
    if any(w <= 0 for w in lam):
        raise MalformedInputError("simplex weights must be positive")
    tol = 1e-12 * max(1.0, abs(k))
    found: list[tuple[int, ...]] = []

    def rec(prefix: tuple[int, ...], budget: float) -> None:
        j = len(prefix)
        if j == len(lam):
            found.append(prefix)
            return
        e = 0
        while e * lam[j] <= budget + tol:
            rec(prefix + (e,), budget - e * lam[j])
            e += 1

    if k >= -tol:
        rec((), float(k))
    return IndexSet(sorted(MultiIndex.from_dense(v) for v in found))


def simplex_cardinality_bound(weights: Sequence[float], k: float) -> float:
    """Upper bound prod_j (k + sum(weights)) / weights_j divided by d!."""
    lam = [float(w) for w in weights]
    total = k + sum(lam)
    return math.prod(total / w for w in lam) / math.factorial(len(lam))


def box_set(d_max: int, deg_max: int) -> IndexSet:
    """The full box {nu : positions <= d_max, nu_j <= deg_max} in total order."""
    dense = itertools.product(range(deg_max + 1), repeat=d_max)
    return IndexSet(sorted(MultiIndex.from_dense(v) for v in dense))


def total_degree_set(dims: int, degree: int) -> IndexSet:
    """{nu : positions <= dims, |nu| <= degree} in total order."""
    return simplex_set([1.0] * dims, degree)


def monotone_majorant(values: Mapping[MultiIndex, float], d_max: int, deg_max: int) -> dict[MultiIndex, float]:
    """Smallest monotone non-increasing sequence dominating |values| on the box.

    Entries of the box that are missing from ``values`` count as zero.
    """
    shape = (deg_max + 1,) * d_max
    arr = np.zeros(shape)
    for nu, v in values.items():
        if nu.max_position > d_max or any(e > deg_max for _, e in nu.items):
            raise MalformedInputError(f"{nu} lies outside the declared box")
        arr[nu.dense(d_max)] = abs(v)
    for axis in range(d_max):
        arr = np.flip(np.maximum.accumulate(np.flip(arr, axis=axis), axis=axis), axis=axis)
    return {MultiIndex.from_dense(idx): float(arr[idx]) for idx in np.ndindex(*shape)}


def monotone_majorant_order(values: Mapping[MultiIndex, float], d_max: int, deg_max: int) -> list[MultiIndex]:
    """Box indices sorted by decreasing majorant; ties go to the smaller index.

    Every prefix of the returned order is downward closed.
    """
    hat = monotone_majorant(values, d_max, deg_max)
    return sorted(hat, key=lambda nu: (-hat[nu], nu.sort_key))


def random_downward_closed(
    rng: np.random.Generator,
    size: int,
    dims: int,
    max_degree: int | None = None,
) -> IndexSet:
    """Random downward closed set grown by uniform picks among neighbors."""
    lam = IndexSet([_ZERO])
    while len(lam) < size:
        cands = neighbors(lam, dims)
        if max_degree is not None:
            cands = [nu for nu in cands if all(e <= max_degree for _, e in nu.items)]
        if not cands:
            break
        lam.add(cands[int(rng.integers(len(cands)))])
    return lam


def product_basis(lam: Sequence[MultiIndex], table: np.ndarray) -> np.ndarray:
    """Values of prod_j phi_{nu_j}(y_j) for every nu, one multiply per index.

    ``table[j - 1, k]`` holds phi_k(y_j) over the samples (shape (dims, K+1, m)).
    The order of ``lam`` must list nu with its largest position removed before
    nu itself, which holds for any order whose prefixes are downward closed.
    """
    members = list(lam)
    m = table.shape[2]
    out = np.empty((len(members), m))
    row: dict[MultiIndex, int] = {}
    for i, nu in enumerate(members):
        if nu.is_zero():
            out[i] = 1.0
        else:
            p, e = nu.items[-1]
            base = MultiIndex(nu.items[:-1])
            if base not in row:
                raise MalformedInputError(f"{base} must precede {nu}")
            if p > table.shape[0] or e >= table.shape[1]:
                raise MalformedInputError(f"{nu} exceeds the univariate table")
            out[i] = out[row[base]] * table[p - 1, e]
        row[nu] = i
    return out
