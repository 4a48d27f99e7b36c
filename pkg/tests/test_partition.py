import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from icudo.errors import DataError, FormatError, InfeasibleError
from icudo.partition import (
    DataSet,
    Partition,
    as_dataset,
    balanced_cluster_partition,
    format_dataset_csv,
    parse_dataset_csv,
    partition_dataset,
    sort_partition,
    truncate_to_multiple,
)
from icudo.sampling import Grid, debias_weights, grid_distinct_count, distinct_total

# 1-based labels of the nine points in increasing order
ORDER9 = [6, 8, 2, 4, 7, 5, 3, 9, 1]
POINTS9 = np.array([
    (1.0, 3.2), (0.9, 1.0), (0.9, 3.1), (0.8, 2.1), (0.7, 2.2),
    (0.9, 1.2), (0.9, 1.9), (0.8, 1.1), (0.9, 2.8),
])
GROUPS9 = [{6, 8, 2}, {4, 7, 5}, {3, 9, 1}]


def zero_based(groups):
    return {frozenset(i - 1 for i in g) for g in groups}


def test_truncate_examples():
    assert truncate_to_multiple(9, 3, 0).tolist() == list(range(9))
    assert truncate_to_multiple(10_000, 100, 0).size == 10_000
    keep = truncate_to_multiple(10, 3, 4)
    assert keep.size == 9 and np.unique(keep).size == 9 and keep.max() < 10
    assert np.array_equal(keep, truncate_to_multiple(10, 3, 4))
    with pytest.raises(InfeasibleError):
        truncate_to_multiple(3, 4, 0)


def test_truncation_drops_each_index_equally_often():
    dropped = np.zeros(10)
    for s in range(5000):
        keep = truncate_to_multiple(10, 3, s)
        dropped[np.setdiff1d(np.arange(10), keep)] += 1
    assert np.all(np.abs(dropped - 500) < 4 * np.sqrt(500 * 0.9))


def test_sort_partition_nine_values():
    x = np.empty(9)
    for rank, label in enumerate(ORDER9):
        x[label - 1] = rank
    p = sort_partition(x, 3)
    assert [set(int(i) + 1 for i in g) for g in p.groups] == GROUPS9


def test_sort_partition_blocks_and_ties():
    p = sort_partition(np.arange(1, 9), 4)
    assert [g.tolist() for g in p.groups] == [[0, 1], [2, 3], [4, 5], [6, 7]]
    c = sort_partition(np.full(6, 2.5), 2)
    assert c.balanced and [g.tolist() for g in c.groups] == [[0, 1, 2], [3, 4, 5]]
    with pytest.raises(InfeasibleError):
        sort_partition(np.arange(7), 2)


@given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=60), st.integers(1, 6))
def test_sort_partition_monotone_and_balanced(vals, L):
    x = np.array(vals)
    n = (x.size // L) * L
    if n == 0:
        return
    p = sort_partition(x, L, indices=np.arange(n))
    assert p.balanced and p.n_retained == n
    assert sorted(np.concatenate(p.groups).tolist()) == list(range(n))
    for a, b in zip(p.groups, p.groups[1:]):
        assert x[a].max() <= x[b].min()


@pytest.mark.parametrize("seed", [0, 1, 2, 17])
def test_cluster_nine_points(seed):
    p = balanced_cluster_partition(POINTS9, 3, seed)
    assert p.as_sets() == zero_based(GROUPS9)


def optimal_pairings(pts):
    """All min-cost balanced splits of four points into two pairs."""
    costs = {}
    for a, b in [((0, 1), (2, 3)), ((0, 2), (1, 3)), ((0, 3), (1, 2))]:
        c = sum(np.sum((pts[i] - pts[j]) ** 2) for i, j in (a, b))
        costs[frozenset([frozenset(a), frozenset(b)])] = c
    best = min(costs.values())
    return {k for k, v in costs.items() if v <= best + 1e-12}


@pytest.mark.parametrize("seed", range(6))
def test_cluster_square_corners(seed):
    sq = np.array([(0.0, 0.0), (1.0, 0.0), (0.0, 1.0), (1.0, 1.0)])
    assert balanced_cluster_partition(sq, 2, seed).as_sets() in optimal_pairings(sq)
    rect = sq * [3.0, 1.0]
    assert balanced_cluster_partition(rect, 2, seed).as_sets() == optimal_pairings(rect).pop()


@settings(max_examples=25, deadline=None)
@given(st.lists(st.integers(-1000, 1000), min_size=4, max_size=40, unique=True), st.integers(0, 1000))
def test_cluster_one_dimensional_matches_sort(vals, seed):
    x = np.array(vals, dtype=float)
    n = (x.size // 2) * 2
    idx = np.arange(n)
    a = balanced_cluster_partition(x, 2, seed, indices=idx)
    b = sort_partition(x, 2, indices=idx)
    assert a.as_sets() == b.as_sets()


def test_cluster_degenerate_data_and_determinism(rng):
    p = balanced_cluster_partition(np.zeros((12, 2)), 3, 5)
    assert p.balanced and p.n_retained == 12
    x = rng.normal(size=(60, 3))
    a = balanced_cluster_partition(x, 4, 9)
    b = balanced_cluster_partition(x, 4, 9)
    assert all(np.array_equal(g, h) for g, h in zip(a.groups, b.groups))
    assert a.balanced and a.sizes == (15,) * 4


def test_partition_dataset_truncates_each_sample(rng):
    data = DataSet.of(rng.normal(size=10), rng.normal(size=11))
    parts = partition_dataset(data, 3, 1)
    assert [p.n_retained for p in parts] == [9, 9]
    assert [p.sample_id for p in parts] == [1, 2]
    assert all(p.balanced for p in parts)
    multi = partition_dataset(DataSet.of(rng.normal(size=(20, 2))), 4, 1)
    assert multi[0].sizes == (5,) * 4
    with pytest.raises(InfeasibleError):
        partition_dataset(data, 3, 1, method="bogus")


def test_balanced_weights_close_to_one(rng):
    for n, L, d in [(60, 3, 2), (120, 4, 3), (200, 5, 2), (90, 3, 4)]:
        p = sort_partition(rng.normal(size=n), L)
        grids = np.array(list(itertools.product(range(1, L + 1), repeat=d)))
        w = debias_weights([grids], [p.sizes], L)
        assert np.max(np.abs(w - 1)) <= d * d * L / p.n_retained
        counts = [grid_distinct_count(Grid((tuple(g),), (p.sizes,))) for g in grids]
        assert sum(counts) == distinct_total([p.n_retained], [d])


def test_partition_rejects_overlap():
    with pytest.raises(DataError):
        Partition(([0, 1], [1, 2]))
    p = Partition(([0, 1], [2]))
    assert not p.balanced
    with pytest.raises(DataError):
        p.as_matrix()


# -- data sets ------------------------------------------------------------------


def test_dataset_validation():
    d = as_dataset(np.arange(5.0))
    assert (d.K, d.p, d.sizes) == (1, 1, (5,))
    assert as_dataset((np.zeros((3, 2)), np.ones((4, 2)))).sizes == (3, 4)
    with pytest.raises(DataError):
        DataSet.of(np.zeros((3, 2)), np.zeros((3, 1)))
    with pytest.raises(DataError):
        DataSet.of(np.array([1.0, np.nan]))
    with pytest.raises(DataError):
        DataSet.of(np.zeros(0))


def test_csv_round_trip(rng):
    d = DataSet.of(rng.normal(size=(4, 2)), rng.normal(size=(3, 2)))
    back = parse_dataset_csv(format_dataset_csv(d))
    assert back.sizes == (4, 3)
    assert all(np.array_equal(a, b) for a, b in zip(d.samples, back.samples))


def test_csv_without_sample_id():
    d = parse_dataset_csv("x,y\n1,2\n3,4\n\n5,6\n")
    assert (d.K, d.p, d.sizes) == (1, 2, (3,))


@pytest.mark.parametrize("text,msg", [
    ("", "line 1"),
    ("x\n", "no data"),
    ("x,y\n1,2\n3\n", "line 3"),
    ("x\n1\nfoo\n", "line 3"),
    ("sample_id,x\n0,1\n", "line 2"),
    ("sample_id,x\n1,1\n3,2\n", "missing"),
])
def test_csv_errors(text, msg):
    with pytest.raises(FormatError, match=msg):
        parse_dataset_csv(text)
