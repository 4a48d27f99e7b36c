import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from icudo import estimators
from icudo.errors import CapacityError, DataError, DomainError
from icudo.estimators import complete_u, efficiency, incomplete_u, v_statistic
from icudo.kernels import KernelSpec, get_kernel
from icudo.partition import DataSet
from icudo.sampling import DesignSample, dc_sample, icur_sample


def brute_complete(samples, k):
    """Plain loop over every per-sample combination."""
    total, count = 0.0, 0
    blocks = [itertools.combinations(range(len(x)), d) for x, d in zip(samples, k.orders)]
    for combo in itertools.product(*blocks):
        pts = [samples[s][i] for s, c in enumerate(combo) for i in c]
        total += k(*pts)
        count += 1
    return total / count


def brute_v(x, k):
    vals = [k(*(x[i] for i in t)) for t in itertools.product(range(len(x)), repeat=k.d)]
    return sum(vals) / len(vals)


def test_complete_examples():
    assert complete_u(np.array([1.0, 2.0, 3.0]), get_kernel("product2")).value == pytest.approx(11 / 3, rel=1e-15)
    pts = np.array([(0, 0), (1, 1), (2, 2)], dtype=float)
    assert complete_u(pts, get_kernel("kendall")).value == 1
    assert complete_u((np.array([0.0]), np.array([2.0])), get_kernel("rank-hinge")).value == 0


def test_v_examples():
    r = v_statistic(np.array([1.0, 2.0]), get_kernel("product2"))
    assert r.value == 9 / 4 and r.m_used == 4
    x = np.array([0.3, -1.2, 2.0])
    assert v_statistic(x, get_kernel("product1")).value == pytest.approx(complete_u(x, get_kernel("product1")).value)
    c = np.full(5, 1.7)
    assert v_statistic(c, get_kernel("sign3")).value == 0
    assert v_statistic(c, get_kernel("product3")).value == pytest.approx(1.7**3)


@pytest.mark.parametrize("name,shape", [
    ("sign3", [(9, 1)]),
    ("product3", [(8, 1)]),
    ("kendall", [(11, 2)]),
    ("monotone", [(10, 2)]),
    ("rank-hinge", [(5, 1), (6, 1)]),
    ("rank-logistic", [(4, 1), (3, 1)]),
    ("twosample-sim", [(6, 1), (5, 1)]),
])
def test_complete_matches_brute_force(name, shape, rng):
    k = get_kernel(name)
    samples = [rng.normal(size=s) for s in shape]
    got = complete_u(DataSet(tuple(samples)), k).value
    assert got == pytest.approx(brute_complete(samples, k), rel=1e-12, abs=1e-12)


def test_complete_chunking_does_not_change_value(monkeypatch, rng):
    x = rng.normal(size=(30, 1))
    k = get_kernel("product3")
    full = complete_u(x, k).value
    monkeypatch.setattr(estimators, "_CHUNK", 7)
    assert complete_u(x, k).value == pytest.approx(full, rel=1e-13)
    two = (rng.normal(size=7), rng.normal(size=8))
    k2 = get_kernel("twosample-sim")
    assert complete_u(two, k2).value == pytest.approx(brute_complete([a[:, None] for a in two], k2), rel=1e-12)


def test_v_matches_brute_force(rng):
    x = rng.normal(size=(6, 1))
    k = get_kernel("sign3")
    assert v_statistic(x, k).value == pytest.approx(brute_v(x, k), abs=1e-12)


def test_incomplete_exhaustive_and_single(rng):
    x = rng.normal(size=9)
    k = get_kernel("product3")
    s = icur_sample((9,), (3,), math.comb(9, 3), 0)
    assert incomplete_u(x, k, s).value == pytest.approx(complete_u(x, k).value, rel=1e-12)
    one = DesignSample((np.array([[2, 5, 7]]),), np.ones(1))
    assert incomplete_u(x, k, one).value == pytest.approx(x[2] * x[5] * x[7], rel=1e-15)
    two = (rng.normal(size=4), rng.normal(size=5))
    kr = get_kernel("rank-logistic")
    s2 = icur_sample((4, 5), (1, 1), 20, 1)
    assert incomplete_u(two, kr, s2).value == pytest.approx(complete_u(two, kr).value, rel=1e-12)


def test_dc_average_equals_block_average(rng):
    x = rng.normal(size=12)
    k = get_kernel("product2")
    s = dc_sample(12, 2, 4, 5)
    blocks = s.indices[0].reshape(3, -1)
    per_block = [complete_u(x[np.unique(b)], k).value for b in blocks]
    assert incomplete_u(x, k, s).value == pytest.approx(np.mean(per_block), rel=1e-12)


def test_incomplete_errors(rng):
    x = rng.normal(size=5)
    bad = DesignSample((np.array([[0, 9]]),), np.ones(1))
    with pytest.raises(DataError):
        incomplete_u(x, get_kernel("product2"), bad)
    with pytest.raises(DataError):
        incomplete_u(x, get_kernel("product3"), bad)
    with pytest.raises(DataError):
        complete_u(x[:2], get_kernel("product3"))
    with pytest.raises(DataError):
        complete_u((x, x), get_kernel("product2"))


def test_budget():
    with pytest.raises(CapacityError, match="incomplete"):
        complete_u(np.arange(100.0), get_kernel("product3"), budget=1000)
    with pytest.raises(CapacityError):
        v_statistic(np.arange(100.0), get_kernel("product3"), budget=1000)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10**6))
def test_permutation_invariance(seed):
    r = np.random.default_rng(seed)
    x = r.normal(size=10)
    perm = r.permutation(10)
    k = get_kernel("sign3")
    assert complete_u(x[perm], k).value == pytest.approx(complete_u(x, k).value, abs=1e-12)
    s = icur_sample((10,), (3,), 25, seed)
    inv = np.argsort(perm)
    moved = DesignSample((inv[s.indices[0]],), s.weights)
    assert incomplete_u(x[perm], k, moved).value == pytest.approx(incomplete_u(x, k, s).value, abs=1e-12)


@settings(max_examples=20, deadline=None)
@given(st.floats(-5, 5), st.floats(-5, 5), st.integers(0, 10**6))
def test_affine_equivariance(a, b, seed):
    base = get_kernel("product2")
    aff = KernelSpec("aff", (2,), lambda args: a * base.func(args) + b)
    x = np.random.default_rng(seed).normal(size=8)
    s = icur_sample((8,), (2,), 10, seed)
    for est in (lambda k: complete_u(x, k), lambda k: v_statistic(x, k), lambda k: incomplete_u(x, k, s)):
        assert est(aff).value == pytest.approx(a * est(base).value + b, abs=1e-10)


def test_v_bias_is_order_one_over_n():
    # n (V - U) = mean(x^2) - U has expectation sigma^2 = 1 for the product kernel
    k = get_kernel("product2")
    scaled = []
    for n in [50, 100, 200, 400]:
        r = np.random.default_rng(n)
        vals = []
        for _ in range(200):
            x = r.normal(1.0, 1.0, size=n)
            vals.append(n * (v_statistic(x, k).value - complete_u(x, k).value))
        scaled.append(np.mean(vals))
    assert all(abs(v - 1.0) < 0.25 for v in scaled)
    assert max(scaled) - min(scaled) < 0.4


def test_efficiency():
    assert efficiency(1.0, 2.0) == 0.5
    assert efficiency(0.3, 0.3) == 1
    with pytest.raises(DomainError):
        efficiency(0.0, 1.0)
    with pytest.raises(DomainError):
        efficiency(1.0, -1.0)


def test_scaled_record():
    pts = np.array([(0, 0), (3, 4), (0, 1)], dtype=float)
    k = get_kernel("cluster-cost", centroids=[[0, 0]])
    rec = complete_u(pts, k).to_record()
    assert rec["scale_factor"] == 3
    assert rec["total"] == pytest.approx(5 + 1 + math.hypot(3, 3))
    assert set(rec) >= {"scheme", "value", "m", "seed", "elapsed_ms"}
