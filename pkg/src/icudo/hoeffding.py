"""Variance components of U-statistics, MSE formulas and the (L, t) tuner.

Components are indexed by size vectors ``(j_1, ..., j_K)`` with
``0 <= j_k <= d_k``, not all zero. For one sample this is simply
``delta2[(j,)] = delta_j^2``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .designs import feasible_design
from .errors import DataError, DomainError, InfeasibleError
from .kernels import KernelSpec
from .partition import as_dataset
from .rng import generator

TAG_BOOT = 0x424F4F54
TAG_GAMMA = 0x47414D4D
_BOOT_CHUNK = 1 << 21


def _size_vectors(orders):
    for j in itertools.product(*(range(d + 1) for d in orders)):
        if any(j):
            yield j


@dataclass(frozen=True)
class HoeffdingComponents:
    """``delta^2`` values keyed by size vector; missing keys are zero."""

    orders: tuple
    delta2: dict = field(default_factory=dict)

    def __post_init__(self):
        orders = tuple(int(d) for d in self.orders)
        clean = {}
        for key, v in self.delta2.items():
            key = tuple(int(j) for j in (key if isinstance(key, tuple) else (key,)))
            if len(key) != len(orders) or not any(key):
                raise DataError(f"bad component index {key} for orders {orders}")
            if any(not 0 <= j <= d for j, d in zip(key, orders)):
                raise DataError(f"component index {key} outside orders {orders}")
            if v < 0:
                raise DataError(f"component {key} is negative ({v})")
            clean[key] = v
        object.__setattr__(self, "orders", orders)
        object.__setattr__(self, "delta2", clean)

    @classmethod
    def one_sample(cls, deltas) -> "HoeffdingComponents":
        """From ``(delta_1^2, ..., delta_d^2)``."""
        deltas = list(deltas)
        return cls((len(deltas),), {(j + 1,): v for j, v in enumerate(deltas)})

    @classmethod
    def from_sigma(cls, sigmas) -> "HoeffdingComponents":
        """One-sample inverse of :meth:`sigma`: ``delta_j^2 = sum (-1)^(j-i) C(j,i) sigma_i^2``."""
        s = list(sigmas)
        deltas = [
            sum((-1) ** (j - i) * math.comb(j, i) * s[i - 1] for i in range(1, j + 1))
            for j in range(1, len(s) + 1)
        ]
        # cancellation can leave tiny negatives where the exact value is 0
        tol = 1e-12 * max([abs(v) for v in s] + [0.0]) * 2 ** len(s)
        deltas = [0.0 if -tol <= v < 0 else v for v in deltas]
        return cls.one_sample(deltas)

    @property
    def d(self) -> int:
        return sum(self.orders)

    def get(self, key) -> float:
        key = key if isinstance(key, tuple) else (key,)
        return self.delta2.get(tuple(key), 0)

    @property
    def delta(self) -> list:
        """One-sample vector ``(delta_1^2, ..., delta_d^2)``."""
        if len(self.orders) != 1:
            raise NotImplementedError("delta vector is defined for one sample")
        return [self.get((j,)) for j in range(1, self.orders[0] + 1)]

    def sigma2(self, key) -> float:
        """``sigma_u^2 = sum_{v <= u} prod_k C(j_k, v_k) delta_v^2``."""
        key = key if isinstance(key, tuple) else (key,)
        total = 0
        for v in itertools.product(*(range(j + 1) for j in key)):
            if any(v):
                total += math.prod(math.comb(j, i) for j, i in zip(key, v)) * self.get(v)
        return total

    @property
    def sigma(self) -> list:
        """One-sample vector ``(sigma_1^2, ..., sigma_d^2)``."""
        if len(self.orders) != 1:
            raise NotImplementedError("sigma vector is defined for one sample")
        return [self.sigma2((j,)) for j in range(1, self.orders[0] + 1)]

    def degeneracy_order(self) -> int:
        """Largest ``q`` with every component of total size ``<= q`` equal to zero."""
        for q in range(1, self.d + 1):
            if any(self.get(j) > 0 for j in _size_vectors(self.orders) if sum(j) == q):
                return q - 1
        return self.d

    def to_json(self) -> dict:
        return {
            "orders": list(self.orders),
            "delta2": {",".join(map(str, k)): float(v) for k, v in sorted(self.delta2.items())},
        }


def _sizes(n_sizes, orders):
    n = (n_sizes,) if np.isscalar(n_sizes) else tuple(n_sizes)
    if len(n) != len(orders):
        raise DomainError(f"{len(n)} sample sizes for {len(orders)} samples")
    for nk, dk in zip(n, orders):
        if nk < dk:
            raise DomainError(f"sample size {nk} is below the order {dk}")
    return n


def mse_complete(n_sizes, orders, comp: HoeffdingComponents) -> float:
    """``sum_j prod_k C(d_k, j_k)^2 / C(n_k, j_k) * delta_j^2``."""
    orders = tuple(orders)
    n = _sizes(n_sizes, orders)
    total = 0.0
    for key, v in comp.delta2.items():
        coef = math.prod(math.comb(d, j) ** 2 / math.comb(nk, j) for nk, d, j in zip(n, orders, key))
        total += coef * v
    return total


def mse_complete_sen(n_sizes, orders, comp: HoeffdingComponents) -> float:
    """The same MSE in ``sigma`` form: ``prod C(n_k,d_k)^-1 sum prod C(d_k,j_k) C(n_k-d_k,d_k-j_k) sigma_j^2``."""
    orders = tuple(orders)
    n = _sizes(n_sizes, orders)
    total = 0.0
    for key in _size_vectors(orders):
        coef = math.prod(
            math.comb(d, j) * math.comb(nk - d, d - j) for nk, d, j in zip(n, orders, key)
        )
        total += coef * comp.sigma2(key)
    return total / math.prod(math.comb(nk, d) for nk, d in zip(n, orders))


def r_of_t(t: int, orders, comp: HoeffdingComponents) -> float:
    """``R(t) = sum_{|j| > t} prod_k C(d_k, j_k) delta_j^2``."""
    orders = tuple(orders)
    return sum(
        math.prod(math.comb(d, j) for d, j in zip(orders, key)) * v
        for key, v in comp.delta2.items()
        if sum(key) > t
    )


def mse_icur_approx(n_sizes, orders, m: int, comp: HoeffdingComponents) -> float:
    """Complete-statistic MSE plus ``R(0)/m`` (the ``O(1/(n m))`` term is dropped)."""
    if m < 1:
        raise DomainError("m must be positive")
    return mse_complete(n_sizes, orders, comp) + r_of_t(0, orders, comp) / m


# -- bootstrap estimation of the components -----------------------------------


def _subsample_u(k: KernelSpec, samples, idx_per_sample, sizes):
    """Complete U on each bootstrap resample; ``idx`` arrays have shape ``(B, n'_k)``."""
    combos = []
    for n, d in zip(sizes, k.orders):
        combos.append(np.array(list(itertools.combinations(range(n), d)), dtype=np.int64))
    mesh = np.indices([c.shape[0] for c in combos]).reshape(len(combos), -1).T
    args = []
    for s, (x, idx, c) in enumerate(zip(samples, idx_per_sample, combos)):
        sel = c[mesh[:, s]]
        for j in range(sel.shape[1]):
            args.append(x[idx[:, : sizes[s]][:, sel[:, j]]])
    return k.evaluate(args).mean(axis=1)


def default_subsizes(orders) -> list:
    """``{d+1, ..., 2d}`` for one sample; a ``(d_k+1)``-point grid per sample otherwise."""
    orders = tuple(orders)
    if len(orders) == 1:
        d = orders[0]
        return [(n,) for n in range(d + 1, 2 * d + 1)]
    return list(itertools.product(*(range(d + 1, 2 * d + 2) for d in orders)))


def bootstrap_delta(
    data, k: KernelSpec, subsizes=None, boots: int = 2000, rng_seed: int = 0
) -> HoeffdingComponents:
    """Estimate the components from bootstrap variances of small complete U-statistics.

    For each subsample size vector ``n'`` the variance of the complete
    statistic over ``boots`` resamples (drawn with replacement) gives one
    equation ``Var = sum_j prod_k C(d_k,j_k)^2 / C(n'_k,j_k) delta_j^2``. The
    system is solved by least squares and negative solutions are set to 0.
    Resamples are nested: size ``n'`` uses the first ``n'`` draws.
    """
    data = as_dataset(data)
    k.check_dim(data.p)
    orders = tuple(k.orders)
    if data.K != len(orders):
        raise DataError(f"kernel {k.name} takes {len(orders)} sample(s), data has {data.K}")
    if boots < 100:
        raise DomainError("boots must be at least 100")
    subs = default_subsizes(orders) if subsizes is None else [
        (s,) if np.isscalar(s) else tuple(s) for s in subsizes
    ]
    if len(set(subs)) != len(subs):
        raise DomainError("subsample sizes must be distinct")
    for s in subs:
        if len(s) != len(orders) or any(nk <= d for nk, d in zip(s, orders)):
            raise DomainError(f"each subsample size must exceed the order; got {s}")
    keys = list(_size_vectors(orders))
    if len(subs) < len(keys):
        raise DomainError(f"need at least {len(keys)} subsample sizes, got {len(subs)}")
    rng = generator(rng_seed, TAG_BOOT)
    top = [max(s[i] for s in subs) for i in range(len(orders))]
    draws = [rng.integers(0, x.shape[0], size=(boots, nmax)) for x, nmax in zip(data.samples, top)]
    A = np.empty((len(subs), len(keys)))
    v = np.empty(len(subs))
    chunk = max(1, _BOOT_CHUNK // max(math.prod(math.comb(n, d) for n, d in zip(s, orders)) for s in subs))
    for r, s in enumerate(subs):
        u = np.concatenate([
            _subsample_u(k, data.samples, [dr[a : a + chunk] for dr in draws], s)
            for a in range(0, boots, chunk)
        ])
        v[r] = np.var(u, ddof=1)
        for c, key in enumerate(keys):
            A[r, c] = math.prod(math.comb(d, j) ** 2 / math.comb(n, j) for n, d, j in zip(s, orders, key))
    if np.linalg.matrix_rank(A) < len(keys):
        raise DomainError("subsample sizes give a singular system")
    sol = np.linalg.lstsq(A, v, rcond=None)[0]
    return HoeffdingComponents(orders, {key: max(0.0, float(x)) for key, x in zip(keys, sol)})


# -- gamma^2 ------------------------------------------------------------------


def _quantile_fn(col):
    srt = np.sort(col)
    grid = (np.arange(srt.size) + 0.5) / srt.size

    def q(z):
        return np.interp(z, grid, srt)

    return q


def estimate_gamma_sq(
    data,
    k: KernelSpec,
    probes: int = 100_000,
    step: float = 1e-3,
    rng_seed: int = 0,
    scale: str = "quantile",
) -> float:
    """Mean squared central difference of the kernel in its first argument.

    On the ``quantile`` scale the first argument is moved by ``+-step`` in
    rank units through each coordinate's empirical quantile function and the
    squared partials are summed over coordinates; on the ``raw`` scale it is
    moved by ``+-step`` in data units. The other arguments are random data
    points. For several samples the first slot of each block is used and the
    results are averaged with weights ``d_k / d``.
    """
    data = as_dataset(data)
    k.check_dim(data.p)
    if scale not in ("quantile", "raw"):
        raise DomainError(f"unknown scale {scale!r}")
    if not 0 < step < 0.5:
        raise DomainError("step must lie in (0, 0.5)")
    rng = generator(rng_seed, TAG_GAMMA)
    slots = k.slices()
    total = 0.0
    skipped = 0
    for kb, sl in enumerate(slots):
        args = []
        for kk, s in enumerate(slots):
            x = data.samples[kk]
            for _ in range(s.start, s.stop):
                args.append(x[rng.integers(0, x.shape[0], size=probes)])
        first = sl.start
        x = data.samples[kb]
        acc = np.zeros(probes)
        keep = np.ones(probes, dtype=bool)
        if scale == "quantile":
            n = x.shape[0]
            ranks = np.argsort(np.argsort(x, axis=0, kind="stable"), axis=0, kind="stable")
            pick = rng.integers(0, n, size=probes)
            z = (ranks[pick] + rng.random((probes, data.p))) / n
            keep &= np.all((z >= step) & (z <= 1 - step), axis=1)
            base = np.column_stack([_quantile_fn(x[:, j])(z[:, j]) for j in range(data.p)])
        for j in range(data.p):
            if scale == "quantile":
                q = _quantile_fn(x[:, j])
                hi, lo = base.copy(), base.copy()
                hi[:, j], lo[:, j] = q(z[:, j] + step), q(z[:, j] - step)
            else:
                hi, lo = args[first].copy(), args[first].copy()
                hi[:, j] += step
                lo[:, j] -= step
            a_hi, a_lo = list(args), list(args)
            a_hi[first], a_lo[first] = hi, lo
            with np.errstate(invalid="ignore", over="ignore"):
                diff = (k.evaluate(a_hi) - k.evaluate(a_lo)) / (2 * step)
            acc += np.square(diff)
        bad = keep & ~np.isfinite(acc)
        skipped += int(bad.sum())
        good = keep & np.isfinite(acc)
        if bad.sum() > 0.1 * keep.sum():
            raise DataError(f"kernel is non-finite at {int(bad.sum())} of {int(keep.sum())} probes")
        if not good.any():
            raise DataError("no usable probes")
        total += (sl.stop - sl.start) * float(np.mean(acc[good]))
    return total / k.d


# -- design choice ------------------------------------------------------------


@dataclass(frozen=True)
class DesignChoice:
    L: int
    t: int
    m: int
    phi: float
    table: tuple = ()

    def to_json(self) -> dict:
        return {
            "L": self.L,
            "t": self.t,
            "m": self.m,
            "phi": self.phi,
            "candidates": [dict(c) for c in self.table],
        }


def phi_value(R: float, gamma_sq: float, d: int, m: int, L: int) -> float:
    """``R(t)/m + d * gamma^2 / (12 m L^2)``."""
    return R / m + d * gamma_sq / (12.0 * m * L * L)


def choose_design(m_target: int, orders, comp: HoeffdingComponents, gamma_sq: float) -> DesignChoice:
    """Minimize ``phi(L, t)`` over ``t in {2..d}`` (``t = 1`` when ``d = 1``); ties favour larger ``t``."""
    orders = tuple(orders) if not np.isscalar(orders) else (int(orders),)
    d = sum(orders)
    ts = [1] if d == 1 else list(range(2, d + 1))
    rows = []
    reasons = []
    for t in ts:
        try:
            oa = feasible_design(m_target, d, t)
        except InfeasibleError as e:
            reasons.append(f"t={t}: {e}")
            continue
        phi = phi_value(r_of_t(t, orders, comp), gamma_sq, d, oa.m, oa.L)
        rows.append({"t": t, "L": oa.L, "m": oa.m, "R": r_of_t(t, orders, comp), "phi": phi})
    if not rows:
        raise InfeasibleError("no feasible (L, t) for m_target=%d: %s" % (m_target, "; ".join(reasons)))
    best = rows[0]
    for r in rows[1:]:
        if r["phi"] <= best["phi"] * (1 + 1e-12):
            best = r
    return DesignChoice(best["L"], best["t"], best["m"], best["phi"], tuple(rows))
