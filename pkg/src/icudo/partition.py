"""Data containers and the grouping step: sorted blocks or balanced clusters."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from .errors import DataError, FormatError, InfeasibleError
from .rng import generator, stream_key

LLOYD_MAX_ITER = 100
LLOYD_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class DataSet:
    """``K`` samples, each an ``(n_k, p)`` float array sharing dimension ``p``."""

    samples: tuple

    def __post_init__(self):
        arrs = []
        for k, s in enumerate(self.samples):
            a = np.array(s, dtype=np.float64, copy=True)
            if a.ndim == 1:
                a = a[:, None]
            if a.ndim != 2 or a.shape[0] == 0:
                raise DataError(f"sample {k + 1}: expected a non-empty (n, p) array")
            if not np.all(np.isfinite(a)):
                raise DataError(f"sample {k + 1}: non-finite values")
            a.setflags(write=False)
            arrs.append(a)
        if not arrs:
            raise DataError("a data set needs at least one sample")
        if len({a.shape[1] for a in arrs}) != 1:
            raise DataError("all samples must share the same point dimension")
        object.__setattr__(self, "samples", tuple(arrs))

    @classmethod
    def of(cls, *samples) -> "DataSet":
        return cls(tuple(samples))

    @property
    def K(self) -> int:
        return len(self.samples)

    @property
    def p(self) -> int:
        return self.samples[0].shape[1]

    @property
    def sizes(self) -> tuple:
        return tuple(s.shape[0] for s in self.samples)

    def __getitem__(self, k):
        return self.samples[k]


def as_dataset(data) -> DataSet:
    """Coerce ``data``: a tuple is read as several samples, anything else as one."""
    if isinstance(data, DataSet):
        return data
    if isinstance(data, tuple):
        return DataSet(data)
    return DataSet((data,))


def read_dataset_csv(path) -> DataSet:
    """Parse a CSV with a header, optional ``sample_id`` column and coordinates."""
    return parse_dataset_csv(Path(path).read_text())


def parse_dataset_csv(text: str) -> DataSet:
    reader = csv.reader(io.StringIO(text))
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise FormatError("line 1: empty CSV") from None
    sid_col = header.index("sample_id") if "sample_id" in header else None
    coord_cols = [j for j in range(len(header)) if j != sid_col]
    if not coord_cols:
        raise FormatError("line 1: no coordinate columns")
    groups: dict[int, list] = {}
    for lineno, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise FormatError(f"line {lineno}: expected {len(header)} fields, found {len(row)}")
        try:
            sid = int(row[sid_col]) if sid_col is not None else 1
            point = [float(row[j]) for j in coord_cols]
        except ValueError:
            raise FormatError(f"line {lineno}: non-numeric field") from None
        if sid < 1:
            raise FormatError(f"line {lineno}: sample_id must be >= 1")
        groups.setdefault(sid, []).append(point)
    if not groups:
        raise FormatError("CSV has a header but no data rows")
    K = max(groups)
    missing = [k for k in range(1, K + 1) if k not in groups]
    if missing:
        raise FormatError(f"sample ids must run 1..K; missing {missing}")
    return DataSet(tuple(np.array(groups[k]) for k in range(1, K + 1)))


def format_dataset_csv(data: DataSet) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["sample_id"] + [f"x{j + 1}" for j in range(data.p)])
    for k, s in enumerate(data.samples, start=1):
        for row in s:
            w.writerow([k] + [repr(float(v)) for v in row])
    return buf.getvalue()


@dataclass(frozen=True, eq=False)
class Partition:
    """``L`` disjoint groups of observation indices from one sample."""

    groups: tuple
    sample_id: int = 1

    def __post_init__(self):
        gs = tuple(np.asarray(g, dtype=np.int64) for g in self.groups)
        allidx = np.concatenate(gs) if gs else np.empty(0, dtype=np.int64)
        if np.unique(allidx).size != allidx.size:
            raise DataError("partition groups overlap")
        for g in gs:
            g.setflags(write=False)
        object.__setattr__(self, "groups", gs)

    @property
    def L(self) -> int:
        return len(self.groups)

    @property
    def sizes(self) -> tuple:
        return tuple(int(g.size) for g in self.groups)

    @property
    def n_retained(self) -> int:
        return sum(self.sizes)

    @property
    def balanced(self) -> bool:
        return len(set(self.sizes)) == 1

    def as_matrix(self) -> np.ndarray:
        """Groups stacked as an ``(L, n'/L)`` array (balanced partitions only)."""
        if not self.balanced:
            raise DataError("partition is not balanced")
        return np.stack(self.groups)

    def as_sets(self) -> set:
        return {frozenset(int(i) for i in g) for g in self.groups}


def truncate_to_multiple(n: int, L: int, rng_seed: int) -> np.ndarray:
    """Sorted random subset of ``range(n)`` of size ``(n // L) * L``."""
    if L < 1 or L > n:
        raise InfeasibleError(f"cannot split n={n} observations into L={L} groups")
    keep = (n // L) * L
    if keep == n:
        return np.arange(n)
    rng = generator(rng_seed, 0x54524E43)
    return np.sort(rng.choice(n, size=keep, replace=False))


def sort_partition(values, L: int, indices=None, sample_id: int = 1) -> Partition:
    """Consecutive blocks of the order statistics; ties keep index order."""
    values = np.asarray(values, dtype=np.float64)
    if values.ndim == 2:
        if values.shape[1] != 1:
            raise DataError("sort_partition needs univariate data")
        values = values[:, 0]
    idx = np.arange(values.size) if indices is None else np.asarray(indices, dtype=np.int64)
    if idx.size % L:
        raise InfeasibleError(
            f"{idx.size} retained points are not divisible by L={L}; truncate first"
        )
    order = idx[np.argsort(values[idx], kind="stable")]
    return Partition(tuple(np.split(order, L)), sample_id=sample_id)


def _kmeans_pp(x: np.ndarray, L: int, rng: np.random.Generator) -> np.ndarray:
    n = x.shape[0]
    centers = [x[rng.integers(n)]]
    d2 = np.sum((x - centers[0]) ** 2, axis=1)
    for _ in range(1, L):
        total = d2.sum()
        if total <= 0:
            nxt = x[rng.integers(n)]
        else:
            nxt = x[rng.choice(n, p=d2 / total)]
        centers.append(nxt)
        d2 = np.minimum(d2, np.sum((x - nxt) ** 2, axis=1))
    return np.array(centers)


def _sq_dists(x, centers):
    out = np.square(x[:, :1] - centers[None, :, 0])
    for j in range(1, x.shape[1]):
        out += np.square(x[:, j : j + 1] - centers[None, :, j])
    return out


def _centroids(x, labels, centers):
    L, p = centers.shape
    counts = np.bincount(labels, minlength=L)
    new = centers.copy()
    filled = counts > 0
    for j in range(p):
        sums = np.bincount(labels, weights=x[:, j], minlength=L)
        new[filled, j] = sums[filled] / counts[filled]
    return new


def _lloyd(x, centers):
    labels = None
    for _ in range(LLOYD_MAX_ITER):
        prev, labels = labels, cKDTree(centers).query(x)[1]
        if prev is not None and np.array_equal(prev, labels):
            break
        new = _centroids(x, labels, centers)
        shift = np.max(np.abs(new - centers))
        centers = new
        if shift < LLOYD_TOL:
            break
    return centers


def _balanced_assign(x, centers, cap):
    """Greedy capacity-constrained assignment, most decided points first."""
    dist = _sq_dists(x, centers)
    L = centers.shape[0]
    if L > 1:
        two = np.partition(dist, 1, axis=1)[:, :2]
        margin = two[:, 1] - two[:, 0]
    else:
        margin = np.zeros(x.shape[0])
    order = np.lexsort((np.arange(x.shape[0]), -margin))
    pref = np.argsort(dist, axis=1, kind="stable")
    room = np.full(L, cap)
    labels = np.empty(x.shape[0], dtype=np.int64)
    for i in order:
        for l in pref[i]:
            if room[l]:
                labels[i] = l
                room[l] -= 1
                break
    return labels


def balanced_cluster_partition(
    points, L: int, rng_seed: int, indices=None, sample_id: int = 1, n_init: int = 4
) -> Partition:
    """Equal-size groups from k-means++ / Lloyd followed by a capacity pass.

    The best of ``n_init`` seeded restarts (by within-group squared distance
    after balancing) is kept. Groups are ordered lexicographically by their
    centroid so that one-dimensional data gives the sorted block split.
    """
    x_all = np.asarray(points, dtype=np.float64)
    if x_all.ndim == 1:
        x_all = x_all[:, None]
    idx = np.arange(x_all.shape[0]) if indices is None else np.asarray(indices, dtype=np.int64)
    if idx.size % L:
        raise InfeasibleError(
            f"{idx.size} retained points are not divisible by L={L}; truncate first"
        )
    x = x_all[idx]
    cap = idx.size // L
    best = None
    for rep in range(n_init):
        rng = generator(rng_seed, 0x434C5553, rep)
        centers = _lloyd(x, _kmeans_pp(x, L, rng))
        labels = _balanced_assign(x, centers, cap)
        cents = _centroids(x, labels, centers)
        cost = float(np.sum((x - cents[labels]) ** 2))
        if best is None or cost < best[0] - 1e-12:
            best = (cost, labels, cents)
    _, labels, cents = best
    rank = np.lexsort(cents.T[::-1])
    groups = tuple(np.sort(idx[labels == l]) for l in rank)
    return Partition(groups, sample_id=sample_id)


def partition_dataset(
    data: DataSet, L: int, rng_seed: int, method: str = "auto", n_init: int = 4
) -> list:
    """Truncate each sample to a multiple of ``L`` and split it into ``L`` groups.

    ``method`` is ``"sort"``, ``"cluster"`` or ``"auto"`` (sort for
    univariate data, balanced clustering otherwise).
    """
    if method == "auto":
        method = "sort" if data.p == 1 else "cluster"
    if method not in ("sort", "cluster"):
        raise InfeasibleError(f"unknown partition method {method!r}")
    parts = []
    for k, x in enumerate(data.samples):
        keep = truncate_to_multiple(x.shape[0], L, stream_key(rng_seed, 0x50415254, k))
        if method == "sort":
            parts.append(sort_partition(x, L, indices=keep, sample_id=k + 1))
        else:
            seed_k = stream_key(rng_seed, 0x434C5553, k)
            parts.append(
                balanced_cluster_partition(x, L, seed_k, indices=keep, sample_id=k + 1, n_init=n_init)
            )
    return parts
