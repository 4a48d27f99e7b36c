"""Symmetric kernels and the registry used by the CLI and benchmark configs.

A kernel receives a list of ``d`` arrays, one per argument slot, grouped by
sample (the ``d_1`` slots of sample 1 first, then sample 2, ...). Each array
has shape ``(..., p)`` and the arrays broadcast against each other; the kernel
returns the broadcast shape without the trailing point axis. This lets the
estimators feed whole blocks of tuples at once.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import DataError
from .rng import generator

KERNEL_NAMES = (
    "sign3",
    "product2",
    "product3",
    "rank-hinge",
    "rank-logistic",
    "twosample-sim",
    "kendall",
    "monotone",
    "cluster-cost",
)


@dataclass(frozen=True, eq=False)
class KernelSpec:
    """A kernel symmetric within each sample block.

    ``orders`` holds ``(d_1, ..., d_K)``; ``dim`` is the required point
    dimension (``None`` accepts any). ``scaled_total`` marks statistics
    conventionally reported as a sum over pairs rather than an average.
    """

    name: str
    orders: tuple
    func: Callable
    params: dict = field(default_factory=dict)
    dim: int | None = 1
    scaled_total: bool = False

    @property
    def K(self) -> int:
        return len(self.orders)

    @property
    def d(self) -> int:
        return sum(self.orders)

    def evaluate(self, args) -> np.ndarray:
        if len(args) != self.d:
            raise DataError(f"kernel {self.name} takes {self.d} arguments, got {len(args)}")
        return np.asarray(self.func(list(args)), dtype=np.float64)

    def __call__(self, *points) -> float:
        """Evaluate at single points, e.g. ``k(1.0, 2.0, 3.0)`` or ``k((0, 0), (1, 1))``."""
        args = [np.atleast_1d(np.asarray(pt, dtype=np.float64)) for pt in points]
        return float(self.evaluate(args))

    def check_dim(self, p: int) -> None:
        if self.dim is not None and p != self.dim:
            raise DataError(f"kernel {self.name} needs {self.dim}-dimensional points, data has p={p}")

    def slices(self):
        """Per-sample ``slice`` objects into the flat argument list."""
        out, start = [], 0
        for dk in self.orders:
            out.append(slice(start, start + dk))
            start += dk
        return out


def _first(args):
    return [a[..., 0] for a in args]


def kernel_sign_symmetry() -> KernelSpec:
    def g(args):
        x1, x2, x3 = _first(args)
        return (
            np.sign(2 * x1 - x2 - x3) + np.sign(2 * x2 - x1 - x3) + np.sign(2 * x3 - x1 - x2)
        )

    return KernelSpec("sign3", (3,), g)


def kernel_product(d: int) -> KernelSpec:
    if d < 1:
        raise ValueError("product kernel needs d >= 1")

    def g(args):
        xs = _first(args)
        out = xs[0]
        for x in xs[1:]:
            out = out * x
        return out

    return KernelSpec(f"product{d}", (d,), g, params={"d": d})


def _identity_score(x):
    return x[..., 0]


def kernel_ranking(psi: str = "hinge", score: Callable | None = None, theta=None) -> KernelSpec:
    """Pairwise ranking loss ``psi(f(y) - f(x))`` for x from sample 1, y from sample 2.

    ``score`` maps ``(..., p)`` points to scores; ``theta`` gives the linear
    score ``x @ theta`` instead. The default score is the first coordinate.
    """
    if psi not in ("hinge", "logistic"):
        raise ValueError(f"unknown loss {psi!r}; expected 'hinge' or 'logistic'")
    if score is not None and theta is not None:
        raise ValueError("pass either score or theta, not both")
    dim = 1
    if theta is not None:
        th = np.asarray(theta, dtype=np.float64)
        dim = th.size

        def score(x, th=th):
            return x @ th

    elif score is None:
        score = _identity_score
    else:
        dim = None

    def g(args):
        z = score(args[1]) - score(args[0])
        if psi == "hinge":
            return np.maximum(1.0 - z, 0.0)
        return np.logaddexp(0.0, -z)

    params = {"psi": psi}
    if theta is not None:
        params["theta"] = [float(v) for v in np.ravel(theta)]
    return KernelSpec(f"rank-{psi}", (1, 1), g, params=params, dim=dim)


def kernel_two_sample_similarity(symmetrize: bool = True) -> KernelSpec:
    """``I(a1 < b1, a2 < b1) + I(b1 < a1, b2 < a1)`` for ``a`` from sample 1, ``b`` from sample 2.

    As written the expression is not symmetric in ``(b1, b2)`` or
    ``(a1, a2)``; by default it is averaged over the within-block orderings,
    which leaves its mean unchanged.
    """

    def raw(a1, a2, b1, b2):
        return ((a1 < b1) & (a2 < b1)).astype(np.float64) + ((b1 < a1) & (b2 < a1))

    def g(args):
        a1, a2, b1, b2 = _first(args)
        if not symmetrize:
            return raw(a1, a2, b1, b2)
        amax, bmax = np.maximum(a1, a2), np.maximum(b1, b2)
        low = 0.5 * ((amax < b1).astype(np.float64) + (amax < b2))
        high = 0.5 * ((bmax < a1).astype(np.float64) + (bmax < a2))
        return low + high

    return KernelSpec("twosample-sim", (2, 2), g, params={"symmetrize": symmetrize})


def kernel_kendall() -> KernelSpec:
    def g(args):
        p, q = args
        conc = (p[..., 0] < q[..., 0]) & (p[..., 1] < q[..., 1])
        conc2 = (q[..., 0] < p[..., 0]) & (q[..., 1] < p[..., 1])
        return 2.0 * conc + 2.0 * conc2 - 1.0

    return KernelSpec("kendall", (2,), g, dim=2)


def epanechnikov(u, compact: bool = False):
    """``0.75 (1 - u^2)``, optionally set to zero outside ``[-1, 1]``."""
    k = 0.75 * (1.0 - np.square(u))
    if compact:
        k = np.where(np.abs(u) <= 1.0, k, 0.0)
    return k


def kernel_monotonicity(x: float = 0.0, x_prime: float = 0.0, compact: bool = False) -> KernelSpec:
    """Stochastic monotonicity summand on points ``(X, Y)``.

    The weight function is used exactly as ``0.75 (1 - u^2)`` on the whole
    line unless ``compact`` is set.
    """

    def g(args):
        p, q = args
        ind = (p[..., 1] <= x_prime).astype(np.float64) - (q[..., 1] <= x_prime)
        return (
            ind
            * np.sign(p[..., 0] - q[..., 0])
            * epanechnikov(x - p[..., 0], compact)
            * epanechnikov(x - q[..., 0], compact)
        )

    params = {"x": float(x), "x_prime": float(x_prime), "compact": bool(compact)}
    return KernelSpec("monotone", (2,), g, params=params, dim=2)


def nearest_centroid_labeler(centroids) -> Callable:
    c = np.asarray(centroids, dtype=np.float64)
    if c.ndim != 2:
        raise ValueError("centroids must be a (C, p) array")

    def label(x):
        diff = x[..., None, :] - c
        return np.argmin(np.einsum("...cj,...cj->...c", diff, diff), axis=-1)

    label.centroids = c
    return label


def euclidean(p, q):
    diff = p - q
    return np.sqrt(np.einsum("...j,...j->...", diff, diff))


def kernel_cluster_cost(labeler: Callable, metric: Callable = euclidean) -> KernelSpec:
    """``D(p, q)`` when both points carry the same label, else 0.

    ``labeler`` maps ``(..., p)`` points to integer labels. The statistic of
    interest is the sum over pairs, hence ``scaled_total``.
    """

    def g(args):
        p, q = args
        same = labeler(p) == labeler(q)
        return np.where(same, metric(p, q), 0.0)

    params = {}
    cents = getattr(labeler, "centroids", None)
    if cents is not None:
        params["centroids"] = cents.tolist()
    return KernelSpec("cluster-cost", (2,), g, params=params, dim=None, scaled_total=True)


def fit_centroids(points, C: int = 2, rng_seed: int = 0, iters: int = 100) -> np.ndarray:
    """Plain seeded k-means (k-means++ start) used to define cluster labels."""
    from .partition import _kmeans_pp, _lloyd

    x = np.asarray(points, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    return _lloyd(x, _kmeans_pp(x, C, generator(rng_seed, 0x4B4D4541)))


def get_kernel(name: str, **params) -> KernelSpec:
    """Build a registered kernel from its CLI name and keyword parameters."""
    if name == "sign3":
        return kernel_sign_symmetry()
    if name.startswith("product"):
        d = params.get("d") or int(name[len("product"):] or 0)
        return kernel_product(int(d))
    if name in ("rank-hinge", "rank-logistic"):
        return kernel_ranking(name.split("-", 1)[1], theta=params.get("theta"))
    if name == "twosample-sim":
        return kernel_two_sample_similarity(params.get("symmetrize", True))
    if name == "kendall":
        return kernel_kendall()
    if name == "monotone":
        return kernel_monotonicity(
            params.get("x", 0.0), params.get("x_prime", 0.0), params.get("compact", False)
        )
    if name == "cluster-cost":
        cents = params.get("centroids")
        if cents is None:
            raise DataError("cluster-cost needs centroids (fit them with fit_centroids)")
        return kernel_cluster_cost(nearest_centroid_labeler(cents))
    raise DataError(f"unknown kernel {name!r}; choose from {', '.join(KERNEL_NAMES)}")


def check_symmetry(k: KernelSpec, trials: int = 1000, rng_seed: int = 0, rtol: float = 1e-12) -> bool:
    """Compare ``k`` on random inputs against every within-block argument reordering."""
    rng = generator(rng_seed, 0x53594D4D)
    p = k.dim or 2
    args = [rng.standard_normal((trials, p)) for _ in range(k.d)]
    base = k.evaluate(args)
    for sl in k.slices():
        slots = list(range(sl.start, sl.stop))
        for perm in itertools.permutations(slots):
            if list(perm) == slots:
                continue
            shuffled = list(args)
            for src, dst in zip(slots, perm):
                shuffled[dst] = args[src]
            other = k.evaluate(shuffled)
            tol = rtol * np.maximum(1.0, np.maximum(np.abs(base), np.abs(other)))
            if np.any(np.abs(base - other) > tol):
                return False
    return True
