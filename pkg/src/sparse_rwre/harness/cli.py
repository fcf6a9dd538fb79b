"""Command-line entry point (``sparse-rwre``).

Exit codes: 0 pass, 1 statistical failure, 2 configuration error, 3 runtime error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys

from .. import analytics, branching, walk
from ..env import alpha_root, build_env_spec, classify_regime, sample_env
from ..errors import (
    ConfigError,
    InvalidParam,
    MissingEstimate,
    Misconfigured,
    SparseRWREError,
    UnsupportedCase,
)
from ..rng import seed_sequence
from . import report as rpt
from .experiments import ExperimentConfig, load_config, replica_map, run_experiment

EXIT_PASS, EXIT_FAIL, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2, 3
CONFIG_ERRORS = (ConfigError, InvalidParam, Misconfigured, UnsupportedCase, MissingEstimate)


def _load_spec(path):
    if path is None:
        raise ConfigError("--spec is required for this command")
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read spec {path}: {exc}") from None
    return build_env_spec(raw)


def _emit(text, out):
    if out:
        with open(out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _rows_to_csv(header, rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([format(v, ".17g") if isinstance(v, float) else v for v in row])
    return buf.getvalue()


def _emit_table(args, header, rows, doc=None):
    if args.format == "csv":
        _emit(_rows_to_csv(header, rows), args.out)
    else:
        _emit(rpt.dumps(doc if doc is not None else [dict(zip(header, r)) for r in rows]), args.out)


# ---------------------------------------------------------------- commands


def cmd_simulate_walk(args):
    spec = _load_spec(args.spec)
    first_passage = args.mode == "first_passage"

    def one(i):
        env_seed, rng = walk.replica_streams(seed_sequence(args.seed, "simulate-walk", i))
        env = sample_env(spec, env_seed)
        if first_passage:
            rec = walk.simulate_first_passage(env, args.n, rng, args.budget)
            return (i, rec.T_n, int(rec.truncated), rec.min_site_visited)
        s = walk.simulate_position(env, args.n, rng)
        return (i, s.X_k, 0, s.min_site)

    rows = replica_map(one, args.replicas, args.workers)
    header = ["replica", "T_n" if first_passage else "X_k", "truncated", "min_site"]
    args.format = args.format or "csv"
    _emit_table(args, header, rows)
    return EXIT_PASS


def cmd_simulate_bpi(args):
    spec = _load_spec(args.spec)
    batch = branching.simulate_regenerations(spec, args.cycles, seed_sequence(args.seed, "simulate-bpi"),
                                             workers=args.workers)
    if args.out:
        batch.write_jsonl(args.out)
    else:
        for sample in batch:
            sys.stdout.write(json.dumps(sample.__dict__, sort_keys=True) + "\n")
    return EXIT_PASS


def cmd_critgw(args):
    sizes = {"samples": args.samples}
    if args.n:
        if args.check == "moments":
            sizes["ns"] = args.n
        else:
            sizes["n"] = args.n[-1]
    tolerances = {"alpha": args.alpha} if args.alpha is not None else {}
    cfg = ExperimentConfig("CRITGW", args.seed, experiment_id="critgw", sizes=sizes, check=args.check,
                           tolerances=tolerances)
    rep = run_experiment(cfg, args.workers)
    header = ["quantity", "exact", "estimate", "se", "pass"]
    rows = [(f"{r['quantity']}" + ("" if r["n"] is None else f"[n={r['n']}]"), r["exact"], r["estimate"], r["se"],
             r["pass"]) for r in rep["details"]["table"]]
    args.format = args.format or "csv"
    _emit_table(args, header, rows, rpt.without_timing(rep))
    return EXIT_PASS if rep["passed"] else EXIT_FAIL


def cmd_speed(args):
    spec = _load_spec(args.spec)
    _emit(rpt.dumps(analytics.speed(spec).to_dict()), args.out)
    return EXIT_PASS


def cmd_alpha_root(args):
    spec = _load_spec(args.spec)
    doc = {"alpha": alpha_root(spec), "regime": classify_regime(spec).to_dict()}
    _emit(rpt.dumps(doc), args.out)
    return EXIT_PASS


def cmd_tails(args):
    try:
        batch = branching.RegenBatch.read_jsonl(args.input)
    except (OSError, ValueError, KeyError) as exc:
        raise ConfigError(f"cannot read {args.input}: {exc}") from None
    w = batch.bar_w.astype(float)
    doc = {"cycles": len(batch), "mean_tau1": float(batch.tau1.mean()), "mean_bar_w": float(w.mean())}
    doc["hill"] = analytics.hill_estimate(w[w > 0], rng=seed_sequence(args.seed, "tails")).to_dict()
    if args.alpha is not None:
        doc["tail_constant"] = analytics.tail_constant_estimate(w, args.alpha).to_dict()
    _emit(rpt.dumps(doc), args.out)
    return EXIT_PASS


def _run_config(cfg, args):
    if args.out:
        cfg.outputs.setdefault("report", args.out)
    rep = run_experiment(cfg, args.workers)
    if not args.out:
        sys.stdout.write(rpt.dumps(rep))
    return EXIT_PASS if rep["passed"] else EXIT_FAIL


def cmd_limit_check(args):
    if args.config:
        cfg = load_config(args.config)
    else:
        sizes = {"n": args.n, "replicas": args.replicas or 2000, "cycles": args.cycles}
        if args.k is not None:
            sizes["k"] = args.k
        if args.ladder:
            sizes["ladder"] = args.ladder
        cfg = ExperimentConfig(args.kind, args.seed, _load_spec(args.spec), experiment_id=args.kind, sizes=sizes)
    return _run_config(cfg, args)


def cmd_identity_check(args):
    if args.config:
        cfg = load_config(args.config)
    else:
        sizes = {"n_blocks": args.n_blocks, "replicas": args.replicas or 10_000}
        cfg = ExperimentConfig("IDENTITY_31", args.seed, _load_spec(args.spec), sizes=sizes)
    return _run_config(cfg, args)


def cmd_report(args):
    if args.validate:
        try:
            with open(args.validate, encoding="utf-8") as fh:
                doc = rpt.loads(fh.read())
        except (OSError, ValueError) as exc:
            raise ConfigError(f"cannot read report {args.validate}: {exc}") from None
        rpt.validate(doc, "report.schema.json")
        sys.stdout.write(f"{args.validate}: valid\n")
        return EXIT_PASS if doc.get("passed") else EXIT_FAIL
    if not args.config:
        raise ConfigError("report needs --config FILE or --validate REPORT")
    return _run_config(load_config(args.config), args)


# ---------------------------------------------------------------- parser


def _int_list(text):
    try:
        return [int(v) for v in text.split(",") if v]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--spec", help="environment spec (JSON)")
    common.add_argument("--seed", type=int, default=0, help="master seed (unsigned 64-bit)")
    common.add_argument("--replicas", type=int, default=None)
    common.add_argument("--workers", type=int, default=1)
    common.add_argument("--out", help="output path (stdout when omitted)")
    common.add_argument("--format", choices=("json", "csv"), default=None)

    parser = argparse.ArgumentParser(prog="sparse-rwre", description="Random walks in sparse random environments.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate-walk", parents=[common], help="first-passage times or positions")
    p.add_argument("--n", type=int, required=True, help="target site (first_passage) or step count (position)")
    p.add_argument("--mode", choices=("first_passage", "position"), default="first_passage")
    p.add_argument("--budget", type=int, default=walk.DEFAULT_BUDGET)
    p.set_defaults(func=cmd_simulate_walk)

    p = sub.add_parser("simulate-bpi", parents=[common], help="regeneration cycles as JSON lines")
    p.add_argument("--cycles", type=int, required=True)
    p.set_defaults(func=cmd_simulate_bpi)

    p = sub.add_parser("critgw", parents=[common], help="critical Galton-Watson checks")
    p.add_argument("--check", choices=("moments", "lt", "theta", "tail"), required=True)
    p.add_argument("--n", type=_int_list, default=None, help="generation(s), comma-separated")
    p.add_argument("--samples", type=int, default=10**6)
    p.add_argument("--alpha", type=float, default=None, help="tail check index")
    p.set_defaults(func=cmd_critgw)

    p = sub.add_parser("speed", parents=[common], help="closed-form speed")
    p.set_defaults(func=cmd_speed)

    p = sub.add_parser("alpha-root", parents=[common], help="root of E rho^a = 1 and regime")
    p.set_defaults(func=cmd_alpha_root)

    p = sub.add_parser("tails", parents=[common], help="tail estimates from regeneration JSON lines")
    p.add_argument("--input", required=True)
    p.add_argument("--alpha", type=float, default=None)
    p.set_defaults(func=cmd_tails)

    p = sub.add_parser("limit-check", parents=[common], help="KS check of a normalized limit law")
    p.add_argument("--config")
    p.add_argument("--kind", choices=("LIMIT_T", "LIMIT_X"), default="LIMIT_T")
    p.add_argument("--n", type=int, default=20_000)
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--cycles", type=int, default=10**6)
    p.add_argument("--ladder", type=_int_list, default=None)
    p.set_defaults(func=cmd_limit_check)

    p = sub.add_parser("identity-check", parents=[common], help="walk versus branching representation")
    p.add_argument("--config")
    p.add_argument("--n-blocks", type=int, default=5)
    p.set_defaults(func=cmd_identity_check)

    p = sub.add_parser("report", parents=[common], help="run a config file or validate a report")
    p.add_argument("--config")
    p.add_argument("--validate", metavar="REPORT")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.replicas is None:
        args.replicas = 200 if args.command == "simulate-walk" else None
    try:
        return args.func(args)
    except CONFIG_ERRORS as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SparseRWREError, OSError, ArithmeticError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as exc:  # surfaced as runtime errors rather than tracebacks
        if type(exc).__name__ == "ValidationError":
            print(f"schema validation failed: {exc}", file=sys.stderr)
            return EXIT_FAIL
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
