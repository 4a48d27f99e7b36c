"""Seeded Monte Carlo comparison of estimators.

Each replicate is a pure function of ``(config, seed, replicate index)``:
fresh data, every estimator at every grid point, and (optionally) the
complete statistic. Replicates may run in worker processes; results are
folded in replicate order, so output does not depend on the worker count.
"""

from __future__ import annotations

import copy
import csv
import io
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .designs import feasible_design
from .errors import DataError, IcudoError, InfeasibleError
from .estimators import complete_u, efficiency, incomplete_u
from .hoeffding import HoeffdingComponents, bootstrap_delta, choose_design, estimate_gamma_sq, mse_complete
from .kernels import fit_centroids, get_kernel
from .partition import DataSet, partition_dataset
from .rng import generator, stream_key
from .sampling import dc_block_for_m, dc_sample, icudo_sample, icur_sample

TAG_DATA = 0x44415441
TAG_EST = 0x45535449
TAG_PART = 0x50415254
TAG_TUNE = 0x54554E45

SCHEMES = ("icur", "dc", "icudo")
REFERENCE_MODES = ("analytic", "complete-mc", "fixed")


# -- configuration ------------------------------------------------------------


@dataclass
class BenchConfig:
    """A benchmark description; see :meth:`from_dict` for the JSON layout."""

    kernel: dict
    samples: list
    estimators: list
    m_grid: dict
    replicates: int
    seed: int = 0
    reference: dict = field(default_factory=lambda: {"mode": "complete-mc"})
    theta: object = None
    name: str = "bench"
    note: str = ""

    @classmethod
    def from_dict(cls, raw: dict) -> "BenchConfig":
        if not isinstance(raw, dict) or not raw:
            raise DataError("empty benchmark config")
        missing = [k for k in ("kernel", "samples", "estimators", "m_grid", "replicates") if k not in raw]
        if missing:
            raise DataError(f"config is missing {', '.join(missing)}")
        unknown = set(raw) - {f for f in cls.__dataclass_fields__}
        if unknown:
            raise DataError(f"unknown config keys: {', '.join(sorted(unknown))}")
        cfg = cls(**copy.deepcopy(raw))
        cfg.validate()
        return cfg

    def to_dict(self) -> dict:
        return {f: copy.deepcopy(getattr(self, f)) for f in self.__dataclass_fields__}

    def validate(self):
        if isinstance(self.kernel, str):
            self.kernel = {"name": self.kernel}
        if self.replicates < 2:
            raise DataError("replicates must be at least 2")
        if not self.samples:
            raise DataError("at least one data sample is required")
        for s in self.samples:
            if s.get("dist") not in ("normal", "uniform", "pareto"):
                raise DataError(f"unknown distribution {s.get('dist')!r}")
            if int(s.get("n", 0)) < 1:
                raise DataError("each sample needs n >= 1")
        if len(self.m_grid) != 1:
            raise DataError("m_grid needs exactly one of m, m_over_n, m_over_comb")
        kind = next(iter(self.m_grid))
        if kind not in ("m", "m_over_n", "m_over_comb"):
            raise DataError(f"unknown m_grid kind {kind!r}")
        labels = set()
        for e in self.estimators:
            if e.get("scheme") not in SCHEMES:
                raise DataError(f"unknown scheme {e.get('scheme')!r}")
            lab = e.get("label", e["scheme"])
            if lab in labels:
                raise DataError(f"duplicate estimator label {lab!r}")
            labels.add(lab)
        mode = self.reference.get("mode")
        if mode not in REFERENCE_MODES:
            raise DataError(f"unknown reference mode {mode!r}")
        if mode == "fixed" and not self.reference.get("note"):
            raise DataError("a fixed reference value needs a provenance note")
        if mode == "analytic" and "delta2" not in self.reference:
            raise DataError("analytic reference needs delta2")
        if self.theta == "complete-mean" and mode != "complete-mc":
            raise DataError("theta 'complete-mean' needs the complete-mc reference")
        if self.theta is None and mode != "complete-mc":
            raise DataError("theta is required unless the reference is complete-mc")
        kern = self.build_kernel(None)
        if len(self.samples) != kern.K:
            raise DataError(f"kernel {kern.name} needs {kern.K} sample(s), config has {len(self.samples)}")

    def build_kernel(self, data):
        params = dict(self.kernel.get("params", {}))
        name = self.kernel["name"]
        if name == "cluster-cost" and "centroids" not in params:
            if data is None:
                params["centroids"] = [[0.0] * self.dim, [1.0] * self.dim]
            else:
                params["centroids"] = fit_centroids(
                    data.samples[0], params.get("clusters", 2), stream_key(self.seed, 0x43454E54)
                ).tolist()
        params.pop("clusters", None)
        return get_kernel(name, **params)

    @property
    def sizes(self) -> tuple:
        return tuple(int(s["n"]) for s in self.samples)

    @property
    def dim(self) -> int:
        s = self.samples[0]
        if s["dist"] == "normal":
            return int(np.size(s.get("mean", 0.0)))
        return int(s.get("p", 1))

    def m_targets(self) -> list:
        kind, vals = next(iter(self.m_grid.items()))
        if kind == "m":
            return [int(v) for v in vals]
        if kind == "m_over_n":
            return [max(1, round(v * self.sizes[0])) for v in vals]
        k = self.build_kernel(None)
        total = math.prod(math.comb(n, d) for n, d in zip(self.sizes, k.orders))
        return [max(1, round(v * total)) for v in vals]

    def grid_values(self) -> list:
        return list(next(iter(self.m_grid.values())))


def load_config(path) -> BenchConfig:
    try:
        raw = json.loads(Path(path).read_text())
    except json.JSONDecodeError as e:
        raise DataError(f"{path}: invalid JSON ({e.msg} at line {e.lineno})") from None
    return BenchConfig.from_dict(raw)


# -- data -------------------------------------------------------------------


def simulate_sample(spec: dict, rng: np.random.Generator) -> np.ndarray:
    """Draw one sample: ``normal`` (mean, cov), ``uniform`` (low, high, p) or ``pareto`` (a, b)."""
    n = int(spec["n"])
    dist = spec["dist"]
    if dist == "normal":
        mean = np.atleast_1d(np.asarray(spec.get("mean", 0.0), dtype=np.float64))
        p = mean.size
        cov = np.asarray(spec.get("cov", 1.0), dtype=np.float64)
        if cov.ndim == 0:
            cov = np.eye(p) * cov
        elif cov.ndim == 1:
            cov = np.diag(cov)
        chol = np.linalg.cholesky(cov)
        z = rng.standard_normal((n, p))
        return mean + z @ chol.T
    if dist == "uniform":
        p = int(spec.get("p", 1))
        lo, hi = float(spec.get("low", 0.0)), float(spec.get("high", 1.0))
        return lo + (hi - lo) * rng.random((n, p))
    # inverse of the uniformizing map 1 - (b/x)^a
    a, b = float(spec["a"]), float(spec["b"])
    u = rng.random((n, int(spec.get("p", 1))))
    return b * (1.0 - u) ** (-1.0 / a)


def simulate_data(cfg: BenchConfig, r: int) -> DataSet:
    rng = generator(cfg.seed, TAG_DATA, r)
    return DataSet(tuple(simulate_sample(s, rng) for s in cfg.samples))


# -- one replicate ------------------------------------------------------------


def estimator_label(e: dict) -> str:
    return e.get("label", e["scheme"])


def _plan(cfg: BenchConfig, e: dict, m_target: int, kern):
    """Resolve an estimator at one grid point; raises ``IcudoError`` when unavailable."""
    scheme = e["scheme"]
    d = kern.d
    if scheme == "icur":
        total = math.prod(math.comb(n, dk) for n, dk in zip(cfg.sizes, kern.orders))
        if m_target > total:
            raise InfeasibleError("m exceeds the number of combinations")
        return {"m": m_target}
    if scheme == "dc":
        if kern.K != 1:
            raise InfeasibleError("divide-and-conquer is one-sample only")
        return {"b": dc_block_for_m(cfg.sizes[0], d, m_target)}
    t = int(e.get("t", d))
    oa = feasible_design(m_target, d, t)
    for n, dk in zip(cfg.sizes, kern.orders):
        if oa.L > n:
            raise InfeasibleError(f"L={oa.L} exceeds n={n}")
        if e.get("debiased") and (n // oa.L) < dk:
            raise InfeasibleError(f"groups of size {n // oa.L} cannot hold {dk} distinct indices")
    return {"oa": oa}


def run_replicate(cfg_dict: dict, r: int) -> dict:
    """Values of every estimator at every grid point for replicate ``r``."""
    cfg = BenchConfig.from_dict(cfg_dict)
    data = simulate_data(cfg, r)
    kern = cfg.build_kernel(data)
    out = {"u0": None, "values": [], "m": []}
    if cfg.reference["mode"] == "complete-mc":
        out["u0"] = complete_u(data, kern).value
    parts_cache: dict = {}
    for i, e in enumerate(cfg.estimators):
        vals, ms = [], []
        for j, m_target in enumerate(cfg.m_targets()):
            seed = stream_key(cfg.seed, TAG_EST, r, i, j)
            try:
                est = dict(e)
                if e.get("auto_tune"):
                    comp = bootstrap_delta(data, kern, boots=int(e.get("boots", 20000)),
                                           rng_seed=stream_key(seed, TAG_TUNE))
                    g2 = estimate_gamma_sq(data, kern, probes=int(e.get("probes", 20000)),
                                           rng_seed=stream_key(seed, TAG_TUNE, 1))
                    est["t"] = choose_design(m_target, kern.orders, comp, g2).t
                plan = _plan(cfg, est, m_target, kern)
            except IcudoError:
                vals.append(None)
                ms.append(None)
                continue
            if e["scheme"] == "icur":
                s = icur_sample(data.sizes, kern.orders, plan["m"], seed)
            elif e["scheme"] == "dc":
                s = dc_sample(data.sizes[0], kern.d, plan["b"], seed)
            else:
                oa = plan["oa"]
                method = e.get("partition", "auto")
                n_init = int(e.get("n_init", 4))
                key = (oa.L, method, n_init)
                if key not in parts_cache:
                    pseed = stream_key(cfg.seed, TAG_PART, r, oa.L)
                    parts_cache[key] = _partitions(data, oa.L, pseed, method, n_init)
                s = icudo_sample(oa, parts_cache[key], seed, orders=kern.orders,
                                 permute=bool(e.get("permute", True)),
                                 debiased=bool(e.get("debiased", False)))
            vals.append(incomplete_u(data, kern, s).value)
            ms.append(s.m)
        out["values"].append(vals)
        out["m"].append(ms)
    return out


def _partitions(data, L, seed, method, n_init):
    return partition_dataset(data, L, seed, method, n_init=n_init)


# -- results ------------------------------------------------------------------


@dataclass
class EstimatorStats:
    label: str
    m: list
    mean: list
    bias: list
    variance: list
    mse: list
    mse_se: list
    eff: list
    eff_se: list


@dataclass
class BenchResult:
    name: str
    grid_kind: str
    grid: list
    m_targets: list
    n: int
    theta: float
    ref_mse: float
    ref_source: str
    stats: list
    values: dict
    u0: np.ndarray | None
    wall_ms: float = 0.0

    def by_label(self, label: str) -> EstimatorStats:
        for s in self.stats:
            if s.label == label:
                return s
        raise KeyError(label)


def _ratio_se(a, b):
    """Delta-method standard error of ``mean(a) / mean(b)`` for paired samples."""
    R = a.size
    A, B = a.mean(), b.mean()
    va, vb = a.var(ddof=1), b.var(ddof=1)
    cab = np.cov(a, b, ddof=1)[0, 1]
    var = (va / B**2 - 2 * A * cab / B**3 + A**2 * vb / B**4) / R
    return math.sqrt(max(var, 0.0))


def run_bench(cfg: BenchConfig, workers: int = 1) -> BenchResult:
    t0 = time.perf_counter()
    raw = cfg.to_dict()
    R = cfg.replicates
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            reps = list(ex.map(run_replicate, [raw] * R, range(R), chunksize=max(1, R // (4 * workers))))
    else:
        reps = [run_replicate(raw, r) for r in range(R)]
    u0 = np.array([rp["u0"] for rp in reps]) if cfg.reference["mode"] == "complete-mc" else None
    if cfg.theta == "complete-mean":
        theta = float(u0.mean())
    elif cfg.theta is None:
        theta = None
    else:
        theta = float(cfg.theta)
    mode = cfg.reference["mode"]
    kern = cfg.build_kernel(None)
    if mode == "complete-mc":
        if theta is None:
            raise DataError("theta is required to score the complete statistic")
        ref_err2 = (u0 - theta) ** 2
        ref_mse = float(ref_err2.mean())
        ref_source = "complete-mc"
    elif mode == "analytic":
        d2 = cfg.reference["delta2"]
        if isinstance(d2, dict):
            comp = HoeffdingComponents(kern.orders, {tuple(int(v) for v in k.split(",")): x for k, x in d2.items()})
        else:
            comp = HoeffdingComponents.one_sample(d2)
        ref_mse = mse_complete(cfg.sizes, kern.orders, comp)
        ref_source = "analytic"
        ref_err2 = None
    else:
        ref_mse = float(cfg.reference["mse"])
        ref_source = "fixed: " + cfg.reference["note"]
        ref_err2 = None
    stats, values = [], {}
    rows = len(cfg.m_targets())
    for i, e in enumerate(cfg.estimators):
        lab = estimator_label(e)
        cols = {k: [] for k in ("m", "mean", "bias", "variance", "mse", "mse_se", "eff", "eff_se")}
        arr = np.full((R, rows), np.nan)
        for j in range(rows):
            vals = [rp["values"][i][j] for rp in reps]
            if any(v is None for v in vals):
                for k in cols:
                    cols[k].append(None)
                continue
            v = np.array(vals)
            arr[:, j] = v
            err2 = (v - theta) ** 2
            mse = float(err2.mean())
            ms = [rp["m"][i][j] for rp in reps]
            cols["m"].append(int(round(np.mean(ms))))
            cols["mean"].append(float(v.mean()))
            cols["bias"].append(float(v.mean() - theta))
            cols["variance"].append(float(v.var()))
            cols["mse"].append(mse)
            cols["mse_se"].append(float(err2.std(ddof=1) / math.sqrt(R)))
            if mse > 0:
                eff = efficiency(ref_mse, mse)
                if ref_err2 is not None:
                    eff_se = _ratio_se(ref_err2, err2)
                else:
                    eff_se = eff * cols["mse_se"][-1] / mse
            else:
                eff, eff_se = None, None
            cols["eff"].append(eff)
            cols["eff_se"].append(eff_se)
        stats.append(EstimatorStats(lab, **cols))
        values[lab] = arr
    kind = next(iter(cfg.m_grid))
    return BenchResult(
        cfg.name, kind, cfg.grid_values(), cfg.m_targets(), cfg.sizes[0], theta,
        ref_mse, ref_source, stats, values, u0, round((time.perf_counter() - t0) * 1e3, 1),
    )


def paired_eff_diff(res: BenchResult, a: str, b: str, j: int):
    """``Eff(a) - Eff(b)`` at grid row ``j`` and its paired delta-method standard error."""
    va, vb = res.values[a][:, j], res.values[b][:, j]
    ea, eb = (va - res.theta) ** 2, (vb - res.theta) ** 2
    Ma, Mb = ea.mean(), eb.mean()
    diff = res.ref_mse / Ma - res.ref_mse / Mb
    R = ea.size
    if res.u0 is not None and res.ref_source == "complete-mc":
        e0 = (res.u0 - res.theta) ** 2
        M0 = e0.mean()
        grads = np.array([1 / Ma - 1 / Mb, -M0 / Ma**2, M0 / Mb**2])
        cov = np.cov(np.vstack([e0, ea, eb]), ddof=1)
    else:
        grads = np.array([-res.ref_mse / Ma**2, res.ref_mse / Mb**2])
        cov = np.cov(np.vstack([ea, eb]), ddof=1)
    se = math.sqrt(max(float(grads @ cov @ grads) / R, 0.0))
    return diff, se


# -- tables -------------------------------------------------------------------


@dataclass
class Table:
    header: list
    rows: list
    caption: str = ""


def _fmt(v, pct=False, cap=False):
    if v is None:
        return "-"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if pct and cap:
        v = min(v, 1.0)
    return format(float(v), ".6g")


def result_table(res: BenchResult, paper_style: bool = False, timing: bool = False) -> Table:
    header = ["m_target", "m/n", "ref_mse"]
    for s in res.stats:
        header += [f"{s.label}:m", f"{s.label}:mse", f"{s.label}:mse_se", f"{s.label}:eff", f"{s.label}:eff_se"]
    rows = []
    for j, mt in enumerate(res.m_targets if res.stats else []):
        row = [str(mt), _fmt(mt / res.n), _fmt(res.ref_mse)]
        for s in res.stats:
            row += [
                _fmt(s.m[j]),
                _fmt(s.mse[j]),
                _fmt(s.mse_se[j]),
                _fmt(s.eff[j], pct=True, cap=paper_style),
                _fmt(s.eff_se[j]),
            ]
        rows.append(row)
    caption = f"{res.name}: reference MSE {_fmt(res.ref_mse)} ({res.ref_source}); theta {_fmt(res.theta)}"
    if timing:
        caption += f"; wall {res.wall_ms} ms"
    return Table(header, rows, caption)


def emit_table(table, fmt: str = "csv") -> str:
    """Serialize a :class:`Table` (or a :class:`BenchResult`) as csv, markdown or json."""
    if isinstance(table, BenchResult):
        table = result_table(table)
    if fmt == "csv":
        buf = io.StringIO()
        if table.caption:
            buf.write("# " + table.caption + "\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(table.header)
        w.writerows(table.rows)
        return buf.getvalue()
    if fmt == "markdown":
        lines = []
        if table.caption:
            lines += [table.caption, ""]
        lines.append("| " + " | ".join(table.header) + " |")
        lines.append("|" + "|".join("---" for _ in table.header) + "|")
        lines += ["| " + " | ".join(r) + " |" for r in table.rows]
        return "\n".join(lines) + "\n"
    if fmt == "json":
        doc = {
            "caption": table.caption,
            "rows": [dict(zip(table.header, r)) for r in table.rows],
            "columns": table.header,
        }
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"
    raise DataError(f"unknown table format {fmt!r}")


def parse_table_csv(text: str) -> Table:
    """Inverse of the csv form of :func:`emit_table`; a leading ``# `` line is the caption."""
    caption = ""
    if text.startswith("# "):
        first, _, text = text.partition("\n")
        caption = first[2:]
    rows = list(csv.reader(io.StringIO(text)))
    if not rows:
        raise DataError("empty table")
    return Table(rows[0], rows[1:], caption)
