"""Index-tuple designs: simple random, divide-and-conquer, ICUDO and debiased ICUDO.

Indices are 0-based positions into each sample's rows. A design stores one
``(m, d_k)`` index array per sample plus a weight per row.
"""

from __future__ import annotations

import csv
import io
import itertools
import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .designs import OrthogonalArray, permute_levels, verify_coincidence_free
from .errors import CapacityError, FormatError, InfeasibleError
from .partition import Partition
from .rng import counter_uniform, generator, stream_key, uniform_index

ENUMERATION_CAP = 10**6
_INT64_MAX = 2**63 - 1

TAG_ICUR = 0x49435552
TAG_DC = 0x44430000
TAG_DRAW = 0x44524157


class CoincidenceWarning(UserWarning):
    """The OA has repeated rows in some ``(t+1)``-column projection."""


@dataclass(frozen=True, eq=False)
class DesignSample:
    """Selected index tuples (one ``(m, d_k)`` array per sample) and their weights."""

    indices: tuple
    weights: np.ndarray
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        idx = tuple(np.asarray(a, dtype=np.int64) for a in self.indices)
        w = np.asarray(self.weights, dtype=np.float64)
        if not idx or any(a.ndim != 2 for a in idx):
            raise FormatError("indices must be a non-empty list of (m, d_k) arrays")
        m = idx[0].shape[0]
        if any(a.shape[0] != m for a in idx) or w.shape != (m,):
            raise FormatError("every sample block and the weights need the same row count")
        if m == 0:
            raise FormatError("a design needs at least one row")
        if np.any(~(w > 0)):
            raise FormatError("weights must be strictly positive")
        for a in idx:
            a.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "weights", w)

    @property
    def m(self) -> int:
        return self.weights.shape[0]

    @property
    def orders(self) -> tuple:
        return tuple(a.shape[1] for a in self.indices)

    def tuples(self):
        """Row ``i`` as a tuple of per-sample index tuples."""
        for i in range(self.m):
            yield tuple(tuple(int(v) for v in a[i]) for a in self.indices)

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("# " + json.dumps(self.provenance, sort_keys=True) + "\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["row", "sample_k", "slot_j", "index", "weight"])
        for i in range(self.m):
            wt = repr(float(self.weights[i]))
            for k, a in enumerate(self.indices, start=1):
                for j in range(a.shape[1]):
                    w.writerow([i, k, j + 1, int(a[i, j]), wt])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "DesignSample":
        lines = text.splitlines()
        prov = {}
        if lines and lines[0].startswith("#"):
            try:
                prov = json.loads(lines[0][1:])
            except json.JSONDecodeError:
                raise FormatError("line 1: provenance comment is not valid JSON") from None
            start = 1
        else:
            start = 0
        reader = csv.reader(lines[start:])
        header = next(reader, None)
        if header != ["row", "sample_k", "slot_j", "index", "weight"]:
            raise FormatError(f"line {start + 1}: unexpected header {header}")
        cells: dict = {}
        weights: dict = {}
        for lineno, rec in enumerate(reader, start=start + 2):
            try:
                i, k, j, v = (int(x) for x in rec[:4])
                wt = float(rec[4])
            except (ValueError, IndexError):
                raise FormatError(f"line {lineno}: malformed record") from None
            cells[(i, k, j)] = v
            weights[i] = wt
        if not weights:
            raise FormatError("design file has no rows")
        m = max(weights) + 1
        K = max(k for _, k, _ in cells)
        orders = [max(j for _, kk, j in cells if kk == k) for k in range(1, K + 1)]
        try:
            idx = [
                np.array([[cells[(i, k, j)] for j in range(1, dk + 1)] for i in range(m)])
                for k, dk in enumerate(orders, start=1)
            ]
            w = np.array([weights[i] for i in range(m)])
        except KeyError as e:
            raise FormatError(f"design file is missing cell {e.args[0]}") from None
        return cls(tuple(idx), w, prov)

    def write(self, path) -> None:
        Path(path).write_text(self.to_csv())


# -- combination ranking ------------------------------------------------------


def _comb_tables(n: int, d: int):
    """``tab[i][c] = C(c, i)`` for ``c < n`` as int64 arrays (colex ranking)."""
    c = np.arange(n, dtype=object)
    return [np.array([math.comb(int(v), i) for v in c], dtype=np.int64) for i in range(d + 1)]


def unrank_combinations(ranks, n: int, d: int) -> np.ndarray:
    """Decode colex ranks in ``[0, C(n, d))`` into sorted index tuples."""
    r = np.array(ranks, dtype=np.int64, copy=True)
    out = np.empty((r.size, d), dtype=np.int64)
    tab = _comb_tables(n, d)
    for i in range(d, 0, -1):
        c = np.searchsorted(tab[i], r, side="right") - 1
        out[:, i - 1] = c
        r -= tab[i][c]
    return out


def icur_sample(n_sizes, orders, m: int, rng_seed: int) -> DesignSample:
    """``m`` distinct combinations drawn uniformly without replacement."""
    n_sizes, orders = tuple(n_sizes), tuple(orders)
    counts = [math.comb(n, d) for n, d in zip(n_sizes, orders)]
    total = math.prod(counts)
    if m < 1 or m > total:
        raise InfeasibleError(f"m={m} must lie in 1..{total} (number of combinations)")
    if total > _INT64_MAX:
        raise CapacityError(f"{total} combinations exceed the 64-bit rank space")
    rng = generator(rng_seed, TAG_ICUR)
    ranks = rng.choice(total, size=m, replace=False)
    idx = []
    rem = np.asarray(ranks, dtype=np.int64)
    for k in range(len(counts) - 1, -1, -1):
        rem, rk = np.divmod(rem, counts[k])
        idx.append(unrank_combinations(rk, n_sizes[k], orders[k]))
    prov = {"scheme": "icur", "seed": int(rng_seed), "m": int(m)}
    return DesignSample(tuple(idx[::-1]), np.ones(m), prov)


def dc_realized_m(n: int, d: int, b: int) -> int:
    return (n // b) * math.comb(b, d)


def dc_sample(n: int, d: int, b: int, rng_seed: int) -> DesignSample:
    """All within-block combinations of a random split into ``n // b`` blocks of size ``b``."""
    if b < d:
        raise InfeasibleError(f"block size b={b} is below the kernel order d={d}")
    if b > n:
        raise InfeasibleError(f"block size b={b} exceeds n={n}")
    blocks = n // b
    perm = generator(rng_seed, TAG_DC).permutation(n)[: blocks * b].reshape(blocks, b)
    combos = np.array(list(itertools.combinations(range(b), d)), dtype=np.int64)
    tuples = perm[:, combos].reshape(-1, d)
    prov = {"scheme": "dc", "seed": int(rng_seed), "b": int(b), "m": int(tuples.shape[0])}
    return DesignSample((tuples,), np.ones(tuples.shape[0]), prov)


def dc_block_for_m(n: int, d: int, m_target: int) -> int:
    """Block size whose realized ``m`` is nearest ``m_target`` (ties to the smaller ``m``).

    Requests with ``m_target <= n`` are rejected: the block averages only
    reach that regime with blocks barely larger than ``d``.
    """
    if m_target <= n:
        raise InfeasibleError(f"divide-and-conquer is not available for m={m_target} <= n={n}")
    best = None
    for b in range(d, n + 1):
        mb = dc_realized_m(n, d, b)
        key = (abs(mb - m_target), mb)
        if best is None or key < best[0]:
            best = (key, b)
        if mb > 4 * m_target and b > d + 1:
            break
    return best[1]


# -- grids and weights --------------------------------------------------------


@dataclass(frozen=True)
class Grid:
    """Group labels ``a`` (1-based, one tuple per sample) and each sample's group sizes."""

    labels: tuple
    sizes: tuple


def grid_distinct_count(g: Grid) -> int:
    """Number of tuples in the grid with distinct indices inside every sample."""
    total = 1
    for labs, sizes in zip(g.labels, g.sizes):
        for lab, c in sorted((l, list(labs).count(l)) for l in set(labs)):
            s = sizes[lab - 1]
            if c > s:
                return 0
            total *= math.perm(s, c)
    return total


def distinct_total(n_retained, orders) -> int:
    """``|S0*|``: the number of ordered tuples without repeats inside any sample."""
    return math.prod(math.perm(n, d) for n, d in zip(n_retained, orders))


def _earlier_same(a: np.ndarray) -> np.ndarray:
    """``e[i, j]`` counts slots ``j' < j`` in row ``i`` carrying the same label."""
    e = np.zeros_like(a)
    for j in range(1, a.shape[1]):
        e[:, j] = np.sum(a[:, :j] == a[:, j : j + 1], axis=1)
    return e


def debias_weights(labels_by_sample, sizes_by_sample, L: int) -> np.ndarray:
    """``omega = L^d |G_a cap S0*| / |S0*|`` for each row, as a product of per-slot ratios."""
    m = labels_by_sample[0].shape[0]
    w = np.ones(m)
    for a, sizes in zip(labels_by_sample, sizes_by_sample):
        sizes = np.asarray(sizes, dtype=np.float64)
        n_k = sizes.sum()
        e = _earlier_same(a)
        for j in range(a.shape[1]):
            w *= L * np.maximum(sizes[a[:, j] - 1] - e[:, j], 0.0) / (n_k - j)
    return w


# -- ICUDO ------------------------------------------------------------------


def _check_inputs(oa: OrthogonalArray, partitions, orders):
    partitions = list(partitions)
    if orders is None:
        if len(partitions) != 1:
            raise InfeasibleError("orders are required for multi-sample designs")
        orders = (oa.d,)
    orders = tuple(int(v) for v in orders)
    if len(orders) != len(partitions):
        raise InfeasibleError(f"{len(partitions)} partitions for {len(orders)} samples")
    if sum(orders) != oa.d:
        raise InfeasibleError(f"OA has {oa.d} columns but the kernel order is {sum(orders)}")
    for p in partitions:
        if p.L != oa.L:
            raise InfeasibleError(f"partition of sample {p.sample_id} has {p.L} groups, OA has L={oa.L}")
    return partitions, orders


def _warn_coincidence(oa: OrthogonalArray):
    if oa.coincidence_free or oa.d <= oa.t:
        return
    if not verify_coincidence_free(oa):
        warnings.warn(f"{oa!r} has a coincidence defect", CoincidenceWarning, stacklevel=3)


def _flat_groups(p: Partition):
    flat = np.concatenate(p.groups)
    sizes = np.array(p.sizes, dtype=np.int64)
    starts = np.concatenate(([0], np.cumsum(sizes)[:-1]))
    return flat, sizes, starts


def _draw_plain(a, u, flat, sizes, starts):
    g = a - 1
    return flat[starts[g] + uniform_index(u, sizes[g])]


def _draw_distinct(a, u, flat, sizes, starts, first_row=0):
    """Uniform draws without repeats among slots that share a group label."""
    m, dk = a.shape
    g = a - 1
    e = _earlier_same(a)
    avail = sizes[g] - e
    if np.any(avail <= 0):
        i = int(np.argmax(np.any(avail <= 0, axis=1)))
        raise InfeasibleError(
            f"grid {tuple(int(v) for v in a[i])} (row {first_row + i}) has no tuple with "
            "distinct indices; groups are smaller than the label multiplicity"
        )
    off = np.empty((m, dk), dtype=np.int64)
    for j in range(dk):
        v = uniform_index(u[:, j], avail[:, j])
        if j:
            prev = np.where(a[:, :j] == a[:, j : j + 1], off[:, :j], np.iinfo(np.int64).max)
            prev.sort(axis=1)
            for c in prev.T:
                v += v >= c
        off[:, j] = v
    return flat[starts[g] + off]


def icudo_sample(
    oa: OrthogonalArray,
    partitions,
    rng_seed: int,
    orders=None,
    permute: bool = True,
    debiased: bool = False,
) -> DesignSample:
    """One tuple per OA row, drawn from the grid that row selects.

    With ``permute`` the OA first receives random level permutations. With
    ``debiased`` the draw avoids repeated indices inside each sample and each
    row carries the weight ``omega``; otherwise weights are 1.
    """
    partitions, orders = _check_inputs(oa, partitions, orders)
    _warn_coincidence(oa)
    a_full = permute_levels(oa, rng_seed).entries if permute else oa.entries
    u_full = counter_uniform(stream_key(rng_seed, TAG_DRAW), np.arange(oa.m), oa.d)
    idx, labels, sizes_list = [], [], []
    col = 0
    for p, dk in zip(partitions, orders):
        a = a_full[:, col : col + dk]
        u = u_full[:, col : col + dk]
        flat, sizes, starts = _flat_groups(p)
        if debiased:
            idx.append(_draw_distinct(a, u, flat, sizes, starts))
        else:
            idx.append(_draw_plain(a, u, flat, sizes, starts))
        labels.append(a)
        sizes_list.append(sizes)
        col += dk
    if debiased:
        w = debias_weights(labels, sizes_list, oa.L)
    else:
        w = np.ones(oa.m)
    prov = {
        "scheme": "icudo-debiased" if debiased else "icudo",
        "seed": int(rng_seed),
        "oa": repr(oa),
        "L": int(oa.L),
        "t": int(oa.t),
        "m": int(oa.m),
    }
    return DesignSample(tuple(idx), w, prov)


def icudo_debiased_sample(oa, partitions, rng_seed, orders=None, permute=True) -> DesignSample:
    return icudo_sample(oa, partitions, rng_seed, orders=orders, permute=permute, debiased=True)


# -- exact enumeration --------------------------------------------------------


@dataclass(frozen=True, eq=False)
class DesignDistribution:
    """Exact law of a single design row: atoms with probabilities and weights."""

    probs: np.ndarray
    indices: tuple
    weights: np.ndarray

    @property
    def size(self) -> int:
        return self.probs.shape[0]


def enumerate_design_distribution(
    oa_base: OrthogonalArray, partitions, debiased: bool, orders=None, row: int = 0
) -> DesignDistribution:
    """Every outcome of one row under uniform level permutations and within-grid draws."""
    partitions, orders = _check_inputs(oa_base, partitions, orders)
    L, d = oa_base.L, oa_base.d
    n_perm = math.factorial(L) ** d
    grid_max = math.prod(max(p.sizes) ** dk for p, dk in zip(partitions, orders))
    if n_perm * grid_max > ENUMERATION_CAP:
        raise CapacityError(
            f"(L!)^d * grid size = {n_perm * grid_max} atoms exceeds the cap {ENUMERATION_CAP}"
        )
    base = oa_base.entries[row] - 1
    groups = [[np.asarray(g) for g in p.groups] for p in partitions]
    sizes = [p.sizes for p in partitions]
    n_ret = [p.n_retained for p in partitions]
    total = distinct_total(n_ret, orders)
    probs, idx_rows, weights = [], [], []
    # each column's label is an independent uniform relabeling of the base entry
    for perms in itertools.product(itertools.permutations(range(L)), repeat=d):
        a = [perms[j][base[j]] + 1 for j in range(d)]
        per_sample, col = [], 0
        for k, dk in enumerate(orders):
            labs = a[col : col + dk]
            choices = itertools.product(*(groups[k][l - 1] for l in labs))
            if debiased:
                choices = [c for c in choices if len(set(c)) == dk]
            per_sample.append(list(choices))
            col += dk
        atoms = list(itertools.product(*per_sample))
        if not atoms:
            raise InfeasibleError(f"grid {tuple(a)} has no admissible tuple")
        labs_split, col = [], 0
        for dk in orders:
            labs_split.append(tuple(a[col : col + dk]))
            col += dk
        if debiased:
            w = L**d * grid_distinct_count(Grid(tuple(labs_split), tuple(sizes))) / total
        else:
            w = 1.0
        for atom in atoms:
            probs.append(1.0 / (n_perm * len(atoms)))
            idx_rows.append(atom)
            weights.append(w)
    idx = tuple(
        np.array([atom[k] for atom in idx_rows], dtype=np.int64).reshape(len(idx_rows), dk)
        for k, dk in enumerate(orders)
    )
    return DesignDistribution(np.array(probs), idx, np.array(weights))
