import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pss.errors import InvalidCapError, MalformedInputError, SurrogateViolationError
from pss.multiindex import (IndexSet, MultiIndex, SurrogateWeights, anchored_neighbors, box_set, build_apriori_set,
                            is_downward_closed, margin, monotone_majorant, monotone_majorant_order, neighbors,
                            product_basis, random_downward_closed, simplex_cardinality_bound, simplex_set,
                            total_degree_set)

Z = MultiIndex.zero()


def e(p, k=1):
    return MultiIndex.unit(p, k)


def D(*dense):
    return MultiIndex.from_dense(dense)


dense_vectors = st.lists(st.integers(0, 4), min_size=0, max_size=5)


class TestMultiIndex:
    def test_sparse_storage_drops_zeros(self):
        nu = D(0, 2, 0, 1)
        assert nu.items == ((2, 2), (4, 1))
        assert nu.order == 3 and nu.n_active == 2 and nu.max_position == 4
        assert nu[1] == 0 and nu[2] == 2

    def test_rejects_bad_entries(self):
        with pytest.raises(MalformedInputError):
            MultiIndex({0: 1})
        with pytest.raises(MalformedInputError):
            MultiIndex({1: -1})

    def test_total_order(self):
        # |nu| first, then max position, then the dense prefix
        ordered = [Z, e(1), e(2), e(1, 2), e(2, 2), D(1, 1), e(3, 2)]
        assert sorted(reversed(ordered)) == ordered

    def test_json_roundtrip_and_str(self):
        nu = D(2, 0, 1)
        assert nu.to_json() == [[1, 2], [3, 1]]
        assert MultiIndex.from_json(nu.to_json()) == nu
        assert str(nu) == "2e1+e3"
        assert str(Z) == "0"

    def test_minus_requires_support(self):
        with pytest.raises(MalformedInputError):
            e(1).minus(2)

    @given(dense_vectors, dense_vectors)
    def test_order_is_total_and_consistent(self, a, b):
        x, y = D(*a), D(*b)
        assert (x < y) + (y < x) + (x == y) == 1
        if x.is_below(y) and x != y:
            assert x < y

    @given(dense_vectors)
    def test_predecessors_are_below(self, a):
        nu = D(*a)
        for mu in nu.predecessors():
            assert mu.is_below(nu) and mu.order == nu.order - 1


class TestIndexSet:
    def test_examples(self):
        assert is_downward_closed([])
        assert is_downward_closed([Z, e(1), e(1, 2), e(2)])
        assert not is_downward_closed([e(1)])

    def test_duplicates_rejected(self):
        with pytest.raises(MalformedInputError):
            is_downward_closed([Z, Z])
        lam = IndexSet([Z])
        with pytest.raises(MalformedInputError):
            lam.add(Z)

    def test_insertion_must_keep_downward_closed(self):
        lam = IndexSet([Z])
        with pytest.raises(MalformedInputError):
            lam.add(e(1, 2))

    def test_anchored_flag(self):
        lam = IndexSet([Z, e(1)], anchored=True)
        with pytest.raises(MalformedInputError):
            lam.add(e(3))
        lam.add(e(2))
        assert lam.is_anchored_set()

    def test_json_roundtrip(self):
        lam = IndexSet([Z, e(1), e(2), D(1, 1)])
        assert lam.to_json() == [[], [[1, 1]], [[2, 1]], [[1, 1], [2, 1]]]
        assert list(IndexSet.from_json(lam.to_json())) == list(lam)

    def test_neighbors_examples(self):
        assert neighbors(IndexSet([Z]), 3) == [e(1), e(2), e(3)]
        assert set(neighbors(IndexSet([Z, e(1)]), 2)) == {e(1, 2), e(2)}
        assert set(neighbors(IndexSet([Z, e(1), e(2)]), 2)) == {e(1, 2), e(2, 2), D(1, 1)}

    def test_neighbors_cap(self):
        with pytest.raises(InvalidCapError):
            neighbors(IndexSet([Z, e(1), e(2)]), 1)

    def test_anchored_neighbors_examples(self):
        assert anchored_neighbors(IndexSet([Z])) == [e(1)]
        assert set(anchored_neighbors(IndexSet([Z, e(1)]))) == {e(1, 2), e(2)}
        assert set(anchored_neighbors(IndexSet([Z, e(1), e(1, 2)]))) == {e(1, 3), e(2)}

    def test_margin_examples(self):
        assert set(margin(IndexSet([Z]), 2)) == {e(1), e(2)}
        assert set(margin(IndexSet([Z, e(1)]), 2)) == {e(1, 2), e(2), D(1, 1)}

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 10_000), st.integers(1, 20), st.integers(1, 4))
    def test_frontier_inclusions(self, seed, size, dims):
        lam = random_downward_closed(np.random.default_rng(seed), size, dims)
        assert is_downward_closed(lam)
        cap = lam.max_active_dim + 1
        an, ne, ma = set(anchored_neighbors(lam)), set(neighbors(lam, cap)), set(margin(lam, cap))
        assert an <= ne <= ma
        assert not (ma & set(lam))
        for k in range(len(lam) + 1):
            assert is_downward_closed(lam.prefix(k))

    def test_margin_brute_force(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            lam = random_downward_closed(rng, 12, 3)
            members = set(lam)
            cands = {D(*v) for v in itertools.product(range(8), repeat=3)} - members
            brute = {nu for nu in cands if any(nu.minus(p) in members for p in nu.support)}
            assert set(margin(lam, 3)) == brute


class TestApriori:
    def test_radii_example(self):
        lam = build_apriori_set(SurrogateWeights("product-of-radii", (2, 4, 8, 16)), 4)
        assert set(lam) == {Z, e(1), e(1, 2), e(2)}
        assert lam.info["surrogate_evaluations"] <= 4 ** 2 / 2 + 4

    def test_small_examples(self):
        assert list(build_apriori_set(SurrogateWeights("product-of-radii", (3, 5)), 1)) == [Z]
        assert set(build_apriori_set(SurrogateWeights("product-of-radii", (2, 2)), 3)) == {Z, e(1), e(2)}

    def test_non_monotone_rejected(self):
        def bad(nu):
            return 2.0 ** nu.order

        with pytest.raises(SurrogateViolationError):
            build_apriori_set(bad, 3)

    @settings(max_examples=30, deadline=None)
    @given(st.lists(st.floats(1.2, 6.0), min_size=1, max_size=4), st.integers(1, 40),
           st.floats(0.01, 100.0))
    def test_n_largest_and_scale_invariant(self, radii, n, scale):
        radii = tuple(sorted(radii))
        s = SurrogateWeights("product-of-radii", radii)
        lam = build_apriori_set(s, n)
        assert len(lam) == n and is_downward_closed(lam) and lam.is_anchored_set()
        assert lam.info["surrogate_evaluations"] <= n * n / 2 + n
        # the values inside dominate every value outside (brute force over a box)
        inside = min(s(nu) for nu in lam)
        box = box_set(len(radii), 12)
        outside = max((s(nu) for nu in box if nu not in lam), default=0.0)
        assert outside <= inside * (1 + 1e-12)
        scaled = build_apriori_set(lambda nu: scale * s(nu), n)
        assert list(scaled) == list(lam)


class TestSimplexAndMajorant:
    def test_simplex_examples(self):
        assert set(simplex_set([1, 1], 1)) == {Z, e(1), e(2)}
        assert set(simplex_set([1, 2], 2)) == {Z, e(1), e(1, 2), e(2)}
        assert list(simplex_set([1], 3)) == [Z, e(1), e(1, 2), e(1, 3)]

    @settings(max_examples=20, deadline=None)
    @given(st.lists(st.floats(0.3, 3.0), min_size=1, max_size=4), st.floats(0.0, 6.0))
    def test_simplex_cardinality_bound(self, lam, k):
        s = simplex_set(lam, k)
        assert is_downward_closed(s)
        assert len(s) <= simplex_cardinality_bound(lam, k) * (1 + 1e-12)

    def test_total_degree_count(self):
        assert len(total_degree_set(4, 5)) == math.comb(9, 4)
        assert len(box_set(3, 2)) == 27

    def test_majorant_examples(self):
        s = SurrogateWeights("product-of-radii", (2, 3))
        vals = {nu: s(nu) for nu in box_set(2, 3)}
        hat = monotone_majorant(vals, 2, 3)
        assert all(hat[nu] == pytest.approx(vals[nu]) for nu in vals)
        spiky = {Z: 1.0, e(1): 0.1, e(1, 2): 0.5}
        assert monotone_majorant(spiky, 1, 2)[e(1)] == 0.5

    def test_majorant_brute_force(self):
        rng = np.random.default_rng(0)
        for _ in range(10):
            box = list(box_set(2, 2))
            vals = {nu: float(rng.random()) for nu in box}
            hat = monotone_majorant(vals, 2, 2)
            for nu in box:
                assert hat[nu] == max(vals[mu] for mu in box if nu.is_below(mu))
            order = monotone_majorant_order(vals, 2, 2)
            for k in range(len(order) + 1):
                assert is_downward_closed(order[:k])


def test_product_basis_matches_direct_products():
    rng = np.random.default_rng(1)
    lam = random_downward_closed(rng, 25, 3)
    table = rng.normal(size=(3, 10, 7))
    got = product_basis(lam, table)
    for i, nu in enumerate(lam):
        want = np.ones(7)
        for p, k in nu.items:
            want = want * table[p - 1, k]
        assert np.allclose(got[i], want)
