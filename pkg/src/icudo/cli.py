"""Command-line entry point: ``icudo {oa, estimate, tune, bench}``.

Exit codes: 0 success, 2 usage error, 3 infeasible request, 4 data error.
Every run echoes its resolved configuration to stderr as one JSON line.
"""

from __future__ import annotations

import argparse
import json
import sys
from importlib import resources
from pathlib import Path

from . import __version__
from .bench import BenchConfig, emit_table, result_table, run_bench
from .designs import (
    bush_oa,
    feasible_design,
    format_oa,
    full_factorial_oa,
    read_oa,
    verify_coincidence_free,
    verify_strength,
)
from .errors import DataError, IcudoError, InfeasibleError
from .estimators import complete_u, incomplete_u, v_statistic
from .hoeffding import bootstrap_delta, choose_design, estimate_gamma_sq
from .kernels import KERNEL_NAMES, get_kernel
from .partition import partition_dataset, read_dataset_csv
from .rng import resolve_seed, stream_key
from .sampling import dc_sample, icudo_sample, icur_sample

TAG_PART = 0x50415254
FORMATS = ("json", "table", "csv", "markdown")


class UsageError(Exception):
    pass


# -- parser -------------------------------------------------------------------


def _globals(p: argparse.ArgumentParser, suppress: bool):
    default = argparse.SUPPRESS if suppress else None
    g = p.add_argument_group("global options")
    g.add_argument("--seed", type=int, default=default,
                   help="master seed (falls back to $ICUDO_SEED, then 0)")
    g.add_argument("--threads", type=int, default=argparse.SUPPRESS if suppress else 1,
                   help="worker processes for bench replicates (output does not depend on it)")
    g.add_argument("--out", default=default, metavar="PATH", help="write the result here instead of stdout")
    g.add_argument("--format", choices=FORMATS, default=default,
                   help="output format (default: json; csv for bench)")


def _kernel_flags(p: argparse.ArgumentParser):
    k = p.add_argument_group("kernel")
    k.add_argument("--kernel", required=True, choices=KERNEL_NAMES, help="kernel name")
    k.add_argument("--x", type=float, default=0.0, help="monotone: evaluation point x")
    k.add_argument("--xprime", type=float, default=0.0, help="monotone: threshold x'")
    k.add_argument("--compact", action="store_true", help="monotone: zero the weight outside [-1, 1]")
    k.add_argument("--centroids", metavar="JSON_OR_PATH",
                   help="cluster-cost: centroid list as JSON or a file holding it")
    k.add_argument("--score", metavar="JSON", help="rank-*: linear score coefficients as a JSON list")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="icudo",
        description="Incomplete U-statistics from orthogonal-array designs.",
    )
    parser.add_argument("--version", action="version", version=f"icudo {__version__}")
    _globals(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", required=True)

    p = sub.add_parser("oa", help="generate or verify an orthogonal array",
                       description="Generate an OA(m, d, L, t) or verify an OA file.")
    p.add_argument("--L", type=int, help="number of levels")
    p.add_argument("--d", type=int, help="number of columns")
    p.add_argument("--t", type=int, help="strength (default: d)")
    p.add_argument("--m-target", type=int, help="pick L so that L^t is nearest this run count")
    p.add_argument("--verify", metavar="PATH", help="verify an OA text file instead of generating")
    _globals(p, suppress=True)

    p = sub.add_parser("estimate", help="estimate a U-statistic from a CSV file",
                       description="Compute one estimate and print it as JSON.")
    p.add_argument("--data", required=True, metavar="PATH",
                   help="CSV with a header, optional sample_id column and coordinate columns")
    _kernel_flags(p)
    p.add_argument("--scheme", required=True, choices=("complete", "v", "icur", "dc", "icudo"),
                   help="estimator")
    p.add_argument("--m", type=int, help="icur: number of tuples; icudo: target run count")
    p.add_argument("--L", type=int, help="icudo: number of levels (overrides --m)")
    p.add_argument("--t", type=int, help="icudo: OA strength (default: d)")
    p.add_argument("--b", type=int, help="dc: block size")
    p.add_argument("--debiased", action="store_true", help="icudo: distinct indices and unbiasing weights")
    p.add_argument("--partition", choices=("auto", "sort", "cluster"), default="auto",
                   help="icudo: grouping method (auto: sort if univariate, else cluster)")
    p.add_argument("--no-permute", action="store_true", help="icudo: skip the random level permutation")
    p.add_argument("--budget", type=int, default=10**9, help="complete/v: maximum kernel evaluations")
    p.add_argument("--save-design", metavar="PATH", help="write the sampled tuples and weights as CSV")
    p.add_argument("--timing", action="store_true", help="include elapsed_ms (makes output run-dependent)")
    _globals(p, suppress=True)

    p = sub.add_parser("tune", help="choose (L, t) from estimated variance components",
                       description="Estimate the components and gamma^2, then print the phi table and choice.")
    p.add_argument("--data", required=True, metavar="PATH", help="CSV data file")
    _kernel_flags(p)
    p.add_argument("--m-target", type=int, required=True, help="target number of tuples")
    p.add_argument("--boots", type=int, default=1_000_000, help="bootstrap resamples per subsample size")
    p.add_argument("--subsizes", metavar="LIST",
                   help="subsample sizes, e.g. '4,5,6' (one sample) or '3:3,4:4,3:4' (several)")
    p.add_argument("--probes", type=int, default=100_000, help="probe points for gamma^2")
    p.add_argument("--step", type=float, default=1e-3, help="finite-difference step for gamma^2")
    p.add_argument("--gamma-scale", choices=("quantile", "raw"), default="quantile",
                   help="scale on which gamma^2 is measured")
    _globals(p, suppress=True)

    p = sub.add_parser("bench", help="run a Monte Carlo benchmark",
                       description="Run a benchmark config (a preset name or a JSON path).")
    p.add_argument("--config", metavar="NAME_OR_PATH", help="preset name (see --list-presets) or JSON file")
    p.add_argument("--list-presets", action="store_true", help="print the shipped preset names and exit")
    p.add_argument("--replicates", type=int, help="override the replicate count")
    p.add_argument("--paper-style", action="store_true", help="cap displayed efficiencies at 1")
    p.add_argument("--timing", action="store_true", help="include wall time in the caption")
    _globals(p, suppress=True)
    return parser


# -- helpers ------------------------------------------------------------------


def _kernel_from_args(args):
    params = {}
    if args.kernel == "monotone":
        params = {"x": args.x, "x_prime": args.xprime, "compact": args.compact}
    elif args.kernel == "cluster-cost":
        if not args.centroids:
            raise UsageError("--centroids is required for cluster-cost")
        text = args.centroids
        if Path(text).is_file():
            text = Path(text).read_text()
        try:
            params["centroids"] = json.loads(text)
        except json.JSONDecodeError:
            raise DataError("--centroids is neither JSON nor a readable file") from None
    elif args.kernel.startswith("rank-") and args.score:
        params["theta"] = json.loads(args.score)
    return get_kernel(args.kernel, **params)


def _echo(command, cfg):
    sys.stderr.write(json.dumps({"command": command, **cfg}, sort_keys=True, default=str) + "\n")


def _write(args, text: str):
    if getattr(args, "out", None):
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)


def _aligned(rows, header):
    cols = [header] + [[str(c) for c in r] for r in rows]
    widths = [max(len(r[i]) for r in cols) for i in range(len(header))]
    return "".join("  ".join(c.rjust(w) for c, w in zip(r, widths)).rstrip() + "\n" for r in cols)


def _record_out(args, rec: dict):
    fmt = args.format or "json"
    if fmt == "json":
        return json.dumps(rec, indent=2, sort_keys=True) + "\n"
    keys = sorted(rec)
    if fmt == "csv":
        return ",".join(keys) + "\n" + ",".join(str(rec[k]) for k in keys) + "\n"
    if fmt == "markdown":
        return "| key | value |\n|---|---|\n" + "".join(f"| {k} | {rec[k]} |\n" for k in keys)
    return _aligned([[k, rec[k]] for k in keys], ["key", "value"])


def _parse_subsizes(text, K):
    if text is None:
        return None
    out = []
    for item in text.split(","):
        parts = tuple(int(v) for v in item.split(":"))
        if len(parts) != K:
            raise UsageError(f"subsample size {item!r} needs {K} component(s)")
        out.append(parts)
    return out


# -- commands -----------------------------------------------------------------


def cmd_oa(args) -> int:
    if args.verify:
        _echo("oa", {"verify": args.verify})
        oa = read_oa(args.verify)
        strength = verify_strength(oa)
        cf = verify_coincidence_free(oa)
        rec = {"path": args.verify, "m": oa.m, "d": oa.d, "L": oa.L, "t": oa.t, "lambda": oa.lam,
               "strength_ok": strength, "coincidence_free": cf}
        _write(args, _record_out(args, rec))
        return 0 if strength else 1
    if args.d is None:
        raise UsageError("oa needs --d (or --verify)")
    t = args.d if args.t is None else args.t
    if (args.L is None) == (args.m_target is None):
        raise UsageError("give exactly one of --L and --m-target")
    _echo("oa", {"L": args.L, "d": args.d, "t": t, "m_target": args.m_target})
    if args.m_target is not None:
        oa = feasible_design(args.m_target, args.d, t)
    elif t == args.d:
        oa = full_factorial_oa(args.L, args.d)
    else:
        oa = bush_oa(args.L, args.d, t)
    _write(args, format_oa(oa))
    return 0


def cmd_estimate(args) -> int:
    seed = resolve_seed(args.seed)
    data = read_dataset_csv(args.data)
    k = _kernel_from_args(args)
    cfg = {"data": args.data, "kernel": k.name, "params": k.params, "scheme": args.scheme, "seed": seed,
           "sizes": list(data.sizes)}
    s = None
    if args.scheme == "complete":
        _echo("estimate", cfg)
        res = complete_u(data, k, budget=args.budget)
    elif args.scheme == "v":
        _echo("estimate", cfg)
        res = v_statistic(data, k, budget=args.budget)
    elif args.scheme == "icur":
        if args.m is None:
            raise UsageError("--scheme icur needs --m")
        cfg["m"] = args.m
        _echo("estimate", cfg)
        s = icur_sample(data.sizes, k.orders, args.m, seed)
    elif args.scheme == "dc":
        if args.b is None:
            raise UsageError("--scheme dc needs --b")
        if data.K != 1:
            raise InfeasibleError("divide-and-conquer is one-sample only")
        cfg["b"] = args.b
        _echo("estimate", cfg)
        s = dc_sample(data.sizes[0], k.d, args.b, seed)
    else:
        t = k.d if args.t is None else args.t
        if args.L is not None:
            oa = full_factorial_oa(args.L, k.d) if t == k.d else bush_oa(args.L, k.d, t)
        elif args.m is not None:
            oa = feasible_design(args.m, k.d, t)
        else:
            raise UsageError("--scheme icudo needs --L or --m")
        cfg.update({"L": oa.L, "t": t, "m": oa.m, "debiased": args.debiased, "partition": args.partition,
                    "permute": not args.no_permute})
        _echo("estimate", cfg)
        parts = partition_dataset(data, oa.L, stream_key(seed, TAG_PART), args.partition)
        s = icudo_sample(oa, parts, seed, orders=k.orders, permute=not args.no_permute,
                         debiased=args.debiased)
    if s is not None:
        res = incomplete_u(data, k, s)
        if args.save_design:
            s.write(args.save_design)
    rec = res.to_record()
    rec["seed"] = seed
    if not args.timing:
        rec.pop("elapsed_ms", None)
    _write(args, _record_out(args, rec))
    return 0


def cmd_tune(args) -> int:
    seed = resolve_seed(args.seed)
    data = read_dataset_csv(args.data)
    k = _kernel_from_args(args)
    subs = _parse_subsizes(args.subsizes, k.K)
    _echo("tune", {"data": args.data, "kernel": k.name, "params": k.params, "m_target": args.m_target,
                   "boots": args.boots, "subsizes": subs, "probes": args.probes, "step": args.step,
                   "gamma_scale": args.gamma_scale, "seed": seed})
    if k.d > 1 and args.m_target < 4:
        raise InfeasibleError(f"m_target={args.m_target} is below 2^t for every t >= 2")
    comp = bootstrap_delta(data, k, subsizes=subs, boots=args.boots, rng_seed=seed)
    g2 = estimate_gamma_sq(data, k, probes=args.probes, step=args.step, rng_seed=seed,
                           scale=args.gamma_scale)
    choice = choose_design(args.m_target, k.orders, comp, g2)
    if (args.format or "json") == "json":
        rec = {"components": comp.to_json(), "gamma_sq": g2, "choice": choice.to_json(), "seed": seed}
        text = json.dumps(rec, indent=2, sort_keys=True) + "\n"
    else:
        rows = [[c["t"], c["L"], c["m"], format(c["R"], ".6g"), format(c["phi"], ".6g")] for c in choice.table]
        text = _aligned(rows, ["t", "L", "m", "R", "phi"])
        text += f"chosen: t={choice.t} L={choice.L} m={choice.m}\n"
    _write(args, text)
    return 0


def preset_names() -> list:
    root = resources.files("icudo") / "presets"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


def load_preset_or_path(name_or_path: str) -> dict:
    path = Path(name_or_path)
    if path.is_file():
        text = path.read_text()
    else:
        name = name_or_path[:-5] if name_or_path.endswith(".json") else name_or_path
        res = resources.files("icudo") / "presets" / f"{name}.json"
        if not res.is_file():
            raise UsageError(f"no config file or preset named {name_or_path!r}; presets: {', '.join(preset_names())}")
        text = res.read_text()
    if not text.strip():
        raise UsageError("config is empty")
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as e:
        raise DataError(f"{name_or_path}: invalid JSON at line {e.lineno}: {e.msg}") from None
    if not raw:
        raise UsageError("config is empty")
    return raw


def cmd_bench(args) -> int:
    if args.list_presets:
        _write(args, "".join(n + "\n" for n in preset_names()))
        return 0
    if not args.config:
        raise UsageError("bench needs --config")
    raw = load_preset_or_path(args.config)
    if args.replicates is not None:
        raw["replicates"] = args.replicates
    if args.seed is not None:
        raw["seed"] = args.seed
    elif "seed" not in raw:
        raw["seed"] = resolve_seed(None)
    cfg = BenchConfig.from_dict(raw)
    threads = max(1, int(getattr(args, "threads", 1) or 1))
    _echo("bench", {"config": cfg.to_dict(), "threads": threads})
    res = run_bench(cfg, workers=threads)
    fmt = args.format or "csv"
    table = result_table(res, paper_style=args.paper_style, timing=args.timing)
    if fmt == "table":
        text = table.caption + "\n" + _aligned(table.rows, table.header)
    else:
        text = emit_table(table, fmt)
    _write(args, text)
    return 0


COMMANDS = {"oa": cmd_oa, "estimate": cmd_estimate, "tune": cmd_tune, "bench": cmd_bench}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    for name in ("seed", "out", "format"):
        if not hasattr(args, name):
            setattr(args, name, None)
    if not hasattr(args, "threads"):
        args.threads = 1
    if args.threads < 1:
        parser.error("--threads must be at least 1")
    try:
        return COMMANDS[args.command](args)
    except UsageError as e:
        parser.error(str(e))
    except IcudoError as e:
        sys.stderr.write(f"icudo: error: {e}\n")
        return e.exit_code
    except (OSError, ValueError) as e:
        sys.stderr.write(f"icudo: error: {e}\n")
        return 4
    return 0


if __name__ == "__main__":
    sys.exit(main())
