"""Orthogonal arrays: construction, verification, randomization and text I/O.

Levels are stored 1-based (``1..L``) to match the usual printed form of an
OA; internally the constructions work over ``0..L-1`` and shift at the end.
"""

from __future__ import annotations

import io
import itertools
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import CapacityError, FormatError, InfeasibleError, NotApplicableError
from .rng import generator

_MAX_RUNS = 2**31 - 1


def is_prime(p: int) -> bool:
    if p < 2:
        return False
    if p < 4:
        return True
    if p % 2 == 0:
        return False
    r = math.isqrt(p)
    return all(p % k for k in range(3, r + 1, 2))


@dataclass(frozen=True)
class PrimeField:
    """Arithmetic modulo a prime ``p``."""

    p: int

    def __post_init__(self):
        if not is_prime(self.p):
            raise InfeasibleError(f"{self.p} is not prime; only prime fields are supported")

    def add(self, a, b):
        return (a + b) % self.p

    def neg(self, a):
        return (-a) % self.p

    def mul(self, a, b):
        return (a * b) % self.p

    def inv(self, a):
        a %= self.p
        if a == 0:
            raise ZeroDivisionError("0 has no inverse")
        return pow(int(a), -1, self.p)

    def poly_eval(self, coeffs: np.ndarray, x: int) -> np.ndarray:
        """Evaluate polynomials (rows of ``coeffs``, lowest degree first) at ``x``."""
        acc = np.zeros(coeffs.shape[0], dtype=np.int64)
        for j in range(coeffs.shape[1] - 1, -1, -1):
            acc = (acc * x + coeffs[:, j]) % self.p
        return acc


@dataclass(frozen=True, eq=False)
class OrthogonalArray:
    """An ``m x d`` array over levels ``1..L`` claimed to have strength ``t``.

    The constructor checks shape, level range and ``m = lam * L**t``; whether
    the strength claim actually holds is left to :func:`verify_strength`.
    """

    entries: np.ndarray
    L: int
    t: int
    lam: int = 1
    coincidence_free: bool = field(default=False, compare=False)

    def __post_init__(self):
        a = np.array(self.entries, dtype=np.int64, copy=True)
        if a.ndim != 2 or a.shape[0] == 0 or a.shape[1] == 0:
            raise FormatError(f"OA entries must be a non-empty 2-D array, got shape {a.shape}")
        if self.L < 2:
            raise InfeasibleError(f"need at least 2 levels, got L={self.L}")
        if not 1 <= self.t <= a.shape[1]:
            raise InfeasibleError(f"strength t={self.t} outside 1..d={a.shape[1]}")
        if a.min() < 1 or a.max() > self.L:
            raise FormatError(f"OA levels must lie in 1..{self.L}")
        if a.shape[0] != self.lam * self.L**self.t:
            raise FormatError(
                f"run count {a.shape[0]} != lambda*L^t = {self.lam}*{self.L}^{self.t}"
            )
        a.setflags(write=False)
        object.__setattr__(self, "entries", a)

    @property
    def m(self) -> int:
        return self.entries.shape[0]

    @property
    def d(self) -> int:
        return self.entries.shape[1]

    def __eq__(self, other):
        if not isinstance(other, OrthogonalArray):
            return NotImplemented
        return (
            (self.L, self.t, self.lam) == (other.L, other.t, other.lam)
            and np.array_equal(self.entries, other.entries)
        )

    def __repr__(self):
        return f"OA({self.m},{self.d},{self.L},{self.t}; lambda={self.lam})"


def full_factorial_oa(L: int, d: int) -> OrthogonalArray:
    """All ``L**d`` level combinations in lexicographic order (strength ``d``)."""
    if L < 2 or d < 1:
        raise InfeasibleError(f"full factorial needs L >= 2 and d >= 1, got L={L}, d={d}")
    if L**d > _MAX_RUNS:
        raise CapacityError(f"L^d = {L}^{d} runs exceeds the supported maximum {_MAX_RUNS}")
    grids = np.indices((L,) * d).reshape(d, -1).T + 1
    return OrthogonalArray(grids, L=L, t=d, lam=1, coincidence_free=True)


def bush_oa(q: int, d: int, t: int) -> OrthogonalArray:
    """Bush construction OA(q^t, d, q, t) for prime ``q``.

    Each run is a polynomial of degree < t over GF(q); column ``j < q`` holds its
    value at ``j`` and the optional column ``q`` holds the leading coefficient.
    """
    if not is_prime(q):
        raise InfeasibleError(
            f"level count q={q} is not prime; prime-power fields are not supported"
        )
    if t < 1 or d < 1:
        raise InfeasibleError(f"need t >= 1 and d >= 1, got t={t}, d={d}")
    if t > q:
        raise InfeasibleError(f"Bush construction needs t <= q, got t={t} > q={q}")
    if d > q + 1:
        raise InfeasibleError(f"Bush construction needs d <= q+1, got d={d} > q+1={q + 1}")
    if q**t > _MAX_RUNS:
        raise CapacityError(f"q^t = {q}^{t} runs exceeds the supported maximum")
    gf = PrimeField(q)
    # rows enumerate coefficient vectors (c_0..c_{t-1}) lexicographically
    coeffs = np.indices((q,) * t).reshape(t, -1).T[:, ::-1]
    cols = [gf.poly_eval(coeffs, x) for x in range(min(d, q))]
    if d == q + 1:
        cols.append(coeffs[:, t - 1])
    return OrthogonalArray(np.stack(cols, axis=1) + 1, L=q, t=t, lam=1, coincidence_free=True)


def verify_strength(a: OrthogonalArray, t: int | None = None) -> bool:
    """Brute-force check that every ``t``-column projection is balanced."""
    t = a.t if t is None else t
    if not 1 <= t <= a.d:
        raise NotApplicableError(f"strength t={t} outside 1..d={a.d}")
    lam, rem = divmod(a.m, a.L**t)
    if rem or lam == 0:
        return False
    x = a.entries - 1
    radix = a.L ** np.arange(t, dtype=np.int64)
    for cols in itertools.combinations(range(a.d), t):
        codes = x[:, cols] @ radix
        counts = np.bincount(codes, minlength=a.L**t)
        if counts.size != a.L**t or np.any(counts != lam):
            return False
    return True


def verify_coincidence_free(a: OrthogonalArray, t: int | None = None) -> bool:
    """True iff every ``(t+1)``-column subarray has pairwise distinct rows."""
    t = a.t if t is None else t
    if a.d <= t:
        raise NotApplicableError(f"coincidence check needs d >= t+1, got d={a.d}, t={t}")
    x = a.entries - 1
    radix = a.L ** np.arange(t + 1, dtype=np.int64)
    for cols in itertools.combinations(range(a.d), t + 1):
        codes = x[:, cols] @ radix
        if np.unique(codes).size != a.m:
            return False
    return True


def permute_levels(a: OrthogonalArray, rng_seed: int, perms=None) -> OrthogonalArray:
    """Relabel levels column by column with independent uniform permutations.

    ``perms`` (a ``d x L`` array of 0-based permutations) overrides the random
    draw; it exists so callers can pin the permutation explicitly.
    """
    if perms is None:
        rng = generator(rng_seed, 0x5045524D)
        perms = np.stack([rng.permutation(a.L) for _ in range(a.d)])
    perms = np.asarray(perms, dtype=np.int64)
    if perms.shape != (a.d, a.L):
        raise InfeasibleError(f"expected permutations of shape {(a.d, a.L)}, got {perms.shape}")
    cols = np.arange(a.d)[None, :]
    out = perms[cols, a.entries - 1] + 1
    return OrthogonalArray(out, L=a.L, t=a.t, lam=a.lam, coincidence_free=a.coincidence_free)


def _prime_candidates(lo: int, hi: int, d: int, t: int):
    return [L for L in range(lo, hi + 1) if is_prime(L) and d <= L + 1 and t <= L]


def feasible_design(m_target: int, d: int, t: int) -> OrthogonalArray:
    """Constructible lambda=1 OA with strength ``t`` whose run count is nearest ``m_target``.

    For ``t == d`` any level count works (full factorial); otherwise only
    primes with ``d <= L+1`` (Bush). Levels are searched within +-50% of
    ``round(m_target ** (1/t))``; ties go to the smaller run count.
    """
    if not 1 <= t <= d:
        raise InfeasibleError(f"strength t={t} must satisfy 1 <= t <= d={d}")
    if m_target < max(d, 2**t):
        raise InfeasibleError(
            f"m_target={m_target} below max(d, 2^t) = {max(d, 2**t)} for d={d}, t={t}"
        )
    ideal = max(2, round(m_target ** (1.0 / t)))
    lo, hi = max(2, math.floor(0.5 * ideal)), max(2, math.ceil(1.5 * ideal))
    if t == d:
        cands = list(range(lo, hi + 1))
    else:
        cands = _prime_candidates(lo, hi, d, t)
    if not cands:
        nearby = _prime_candidates(2, max(hi * 2, d + 2), d, t)[:5]
        raise InfeasibleError(
            f"no constructible OA(m,{d},L,{t}) with L in [{lo},{hi}] for m_target={m_target}; "
            f"nearest feasible level counts: {nearby}"
        )
    L = min(cands, key=lambda L: (abs(L**t - m_target), L**t))
    if t == d:
        return full_factorial_oa(L, d)
    return bush_oa(L, d, t)


# -- text format -------------------------------------------------------------


def format_oa(a: OrthogonalArray) -> str:
    buf = io.StringIO()
    buf.write(f"{a.m} {a.d} {a.L} {a.t} {a.lam}\n")
    for row in a.entries:
        buf.write(" ".join(str(int(v)) for v in row))
        buf.write("\n")
    return buf.getvalue()


def parse_oa(text: str) -> OrthogonalArray:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise FormatError("empty OA file")
    try:
        m, d, L, t, lam = (int(v) for v in lines[0].split())
    except ValueError:
        raise FormatError("line 1: header must be 'm d L t lambda'") from None
    if len(lines) - 1 != m:
        raise FormatError(f"header declares m={m} rows, found {len(lines) - 1}")
    rows = []
    for lineno, ln in enumerate(lines[1:], start=2):
        try:
            row = [int(v) for v in ln.split()]
        except ValueError:
            raise FormatError(f"line {lineno}: non-integer entry") from None
        if len(row) != d:
            raise FormatError(f"line {lineno}: expected {d} entries, found {len(row)}")
        if min(row) < 1 or max(row) > L:
            raise FormatError(f"line {lineno}: level outside 1..{L}")
        rows.append(row)
    return OrthogonalArray(np.array(rows), L=L, t=t, lam=lam)


def write_oa(a: OrthogonalArray, path) -> None:
    Path(path).write_text(format_oa(a))


def read_oa(path) -> OrthogonalArray:
    return parse_oa(Path(path).read_text())
