"""Complete U, V and weighted incomplete U-statistics, plus efficiency.

Sums are formed block by block with ``np.sum`` and the block sums are
combined with ``math.fsum`` in a fixed order, so results do not depend on how
work is scheduled.
"""

from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass

import numpy as np

from .errors import CapacityError, DataError, DomainError
from .kernels import KernelSpec
from .partition import DataSet, as_dataset
from .sampling import DesignDistribution, DesignSample

DEFAULT_BUDGET = 10**9
_CHUNK = 1 << 22


@dataclass(frozen=True)
class EstimateResult:
    value: float
    m_used: int
    scheme: str
    scale_factor: float | None = None
    seed: int | None = None
    elapsed_ms: float | None = None

    def to_record(self) -> dict:
        rec = {"scheme": self.scheme, "value": self.value, "m": self.m_used, "seed": self.seed}
        rec["elapsed_ms"] = self.elapsed_ms
        if self.scale_factor is not None:
            rec["scale_factor"] = self.scale_factor
            rec["total"] = self.value * self.scale_factor
        return rec


def _scale(k: KernelSpec, data: DataSet):
    if not k.scaled_total:
        return None
    return float(math.prod(math.comb(n, d) for n, d in zip(data.sizes, k.orders)))


def _prepare(data, k: KernelSpec) -> DataSet:
    data = as_dataset(data)
    if data.K != k.K:
        raise DataError(f"kernel {k.name} takes {k.K} sample(s), data has {data.K}")
    k.check_dim(data.p)
    for n, d in zip(data.sizes, k.orders):
        if n < d:
            raise DataError(f"sample size {n} is below the kernel order {d}")
    return data


def _pair_sums(k, fixed, y, out):
    """Append block sums of ``g(fixed..., y_i, y_j)`` over ``i < j``."""
    r = y.shape[0]
    if r < 2:
        return
    rows = max(1, _CHUNK // r)
    for a in range(0, r - 1, rows):
        b = min(r - 1, a + rows)
        left = y[a:b][:, None, :]
        right = y[None, a + 1 :, :]
        vals = k.evaluate(fixed + [left, right])
        mask = np.triu(np.ones((b - a, r - a - 1), dtype=bool))
        out.append(float(np.sum(vals, where=mask)))


def _single_sums(k, fixed, y, out):
    for a in range(0, y.shape[0], _CHUNK):
        out.append(float(np.sum(k.evaluate(fixed + [y[a : a + _CHUNK]]))))


def _tail_sums(k, fixed, y, dk, out):
    """Sums over all ``dk``-combinations of ``y`` with ``fixed`` leading arguments."""
    if dk == 0:
        out.append(float(k.evaluate(fixed)))
    elif dk == 1:
        _single_sums(k, fixed, y, out)
    else:
        n = y.shape[0]
        for pre in itertools.combinations(range(n), dk - 2):
            start = pre[-1] + 1 if pre else 0
            _pair_sums(k, fixed + [y[i] for i in pre], y[start:], out)


def _batched_last(k, outer_args, y, out):
    """Outer combinations (stacked rows) against every single point of the last sample."""
    M = outer_args[0].shape[0] if outer_args else 1
    rows = max(1, _CHUNK // y.shape[0])
    for a in range(0, M, rows):
        fixed = [arr[a : a + rows][:, None, :] for arr in outer_args]
        out.append(float(np.sum(k.evaluate(fixed + [y[None, :, :]]))))


def _combos(n, d):
    return np.array(list(itertools.combinations(range(n), d)), dtype=np.int64).reshape(-1, d)


def complete_u(data, k: KernelSpec, budget: int = DEFAULT_BUDGET) -> EstimateResult:
    """Average of the kernel over every combination (one per sample block)."""
    t0 = time.perf_counter()
    data = _prepare(data, k)
    counts = [math.comb(n, d) for n, d in zip(data.sizes, k.orders)]
    total = math.prod(counts)
    if total > budget:
        raise CapacityError(
            f"complete statistic needs {total} kernel calls (budget {budget}); "
            "use an incomplete scheme"
        )
    sums: list = []
    xs = data.samples
    if k.K == 1:
        _tail_sums(k, [], xs[0], k.orders[0], sums)
    else:
        outer_counts = counts[:-1]
        if math.prod(outer_counts) > 10**7:
            raise CapacityError("too many outer combinations to materialize")
        grids = [_combos(n, d) for n, d in zip(data.sizes[:-1], k.orders[:-1])]
        # mixed-radix lexicographic order over the leading samples
        mesh = np.indices(outer_counts).reshape(len(outer_counts), -1).T
        outer_args = []
        for s, (x, g) in enumerate(zip(xs[:-1], grids)):
            sel = g[mesh[:, s]]
            outer_args.extend(x[sel[:, j]] for j in range(g.shape[1]))
        y, dK = xs[-1], k.orders[-1]
        if dK == 1:
            _batched_last(k, outer_args, y, sums)
        else:
            for i in range(mesh.shape[0]):
                _tail_sums(k, [arr[i] for arr in outer_args], y, dK, sums)
    value = math.fsum(sums) / total
    return EstimateResult(
        value, total, "complete", _scale(k, data), elapsed_ms=_ms(t0)
    )


def v_statistic(data, k: KernelSpec, budget: int = DEFAULT_BUDGET) -> EstimateResult:
    """Average over all ``n^d`` ordered tuples, repeats included (one sample only)."""
    t0 = time.perf_counter()
    data = _prepare(data, k)
    if data.K != 1:
        raise DataError("the V-statistic is implemented for one sample only")
    x = data.samples[0]
    n, d = x.shape[0], k.d
    if n**d > budget:
        raise CapacityError(f"V-statistic needs {n**d} kernel calls (budget {budget})")
    sums: list = []
    if d == 1:
        _single_sums(k, [], x, sums)
    else:
        rows = max(1, _CHUNK // n)
        for pre in itertools.product(range(n), repeat=d - 2):
            fixed = [x[i] for i in pre]
            for a in range(0, n, rows):
                vals = k.evaluate(fixed + [x[a : a + rows][:, None, :], x[None, :, :]])
                sums.append(float(np.sum(vals)))
    return EstimateResult(math.fsum(sums) / n**d, n**d, "v", _scale(k, data), elapsed_ms=_ms(t0))


def _gather(data: DataSet, indices, lo, hi):
    args = []
    for x, a in zip(data.samples, indices):
        for j in range(a.shape[1]):
            args.append(x[a[lo:hi, j]])
    return args


def incomplete_u(data, k: KernelSpec, s: DesignSample) -> EstimateResult:
    """``(1/m) * sum_i w_i g(X_{eta_i})`` over the design rows."""
    t0 = time.perf_counter()
    data = _prepare(data, k)
    if s.orders != tuple(k.orders):
        raise DataError(f"design orders {s.orders} do not match kernel orders {k.orders}")
    for kk, (x, a) in enumerate(zip(data.samples, s.indices)):
        if a.size and (a.min() < 0 or a.max() >= x.shape[0]):
            raise DataError(f"design indexes past the end of sample {kk + 1} (n={x.shape[0]})")
    rows = max(1, _CHUNK // max(1, k.d))
    parts = []
    for lo in range(0, s.m, rows):
        hi = min(s.m, lo + rows)
        vals = k.evaluate(_gather(data, s.indices, lo, hi)) * s.weights[lo:hi]
        parts.append(math.fsum(vals.tolist()))
    value = math.fsum(parts) / s.m
    return EstimateResult(
        value,
        s.m,
        s.provenance.get("scheme", "design"),
        _scale(k, data),
        seed=s.provenance.get("seed"),
        elapsed_ms=_ms(t0),
    )


def design_expectation(data, k: KernelSpec, dist: DesignDistribution) -> float:
    """Exact expectation of ``w * g`` under an enumerated one-row design law."""
    data = _prepare(data, k)
    vals = k.evaluate(_gather(data, dist.indices, 0, dist.size))
    return math.fsum((dist.probs * dist.weights * vals).tolist())


def efficiency(mse_ref: float, mse_est: float) -> float:
    """``MSE(reference) / MSE(estimator)``, reported uncapped."""
    if not (mse_ref > 0 and mse_est > 0):
        raise DomainError(f"efficiency needs positive MSEs, got {mse_ref} and {mse_est}")
    return mse_ref / mse_est


def _ms(t0):
    return round((time.perf_counter() - t0) * 1e3, 3)

