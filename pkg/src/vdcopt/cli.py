"""Command-line entry point.

Verbs::

    gen-tree      write a generated tree as JSON
    build-model   write the constrained model in LP-like text
    export-qubo   write the penalised QUBO in coordinate format
    solve         solve one instance and print a one-line summary
    bench         run a solver campaign and print the result table
    render        print a table from a saved record file

Options may also come from a JSON file given with ``--config``; explicit
flags override its keys. ``--show-config`` prints the effective settings and
exits. Relative output paths are resolved against ``$VDCOPT_OUT_DIR`` when it
is set.

Exit codes: 0 success, 2 usage error, 1 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import asdict, fields

from .bench import (SOLVER_SPECS, ConfigError, ExperimentConfig, load_records, parse_solver_spec,
                    render_table, run_experiment, run_one)
from .model import build_full_cqm, build_routing_cqm, export_model
from .qubo import PenaltyConfig, cqm_to_qubo, export_qubo
from .solvers import DecompParams, SaParams, SolveBudget, greedy_first_fit
from .topology import TreeParams, build_proxytree, load_tree, serialize_tree

OUT_DIR_ENV = "VDCOPT_OUT_DIR"
DEFAULT_RECORDS = "bench_records.jsonl"

# Defaults applied after the config file; argparse itself defaults to None so
# that explicitly given flags can be told apart from unset ones.
DEFAULTS = {
    "depth": None,
    "tree": None,
    "solver": "exact",
    "mode": "exhaustive",
    "seed": 0,
    "reps": 1,
    "out": None,
    "format": "markdown",
    "layout": "energy",
    "variant": "full",
    "depths": "2,3",
    "solvers": "exact,split-exact",
    "reference": None,
    "records": None,
    "sweeps": SaParams.sweeps,
    "restarts": SaParams.restarts,
    "size": DecompParams.size,
    "rounds": DecompParams.rounds,
    "report": False,
    "tree_params": {},
}

TREE_FLAGS = {
    "capacity": "server_capacity",
    "util": "vm_util",
    "data_rate": "avg_data_rate",
}


def _depth(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"depth must be an integer, got {text!r}") from None
    if value < 2:
        raise argparse.ArgumentTypeError(f"depth must be >= 2, got {value}")
    return value


def _mode(text: str) -> str:
    try:
        SolveBudget.parse(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None
    return text


def _depth_list(text: str) -> str:
    for part in text.split(","):
        if part.strip():
            _depth(part.strip())
    return text


def _solver_list(text: str) -> str:
    for part in text.split(","):
        if part.strip():
            try:
                parse_solver_spec(part)
            except ConfigError as exc:
                raise argparse.ArgumentTypeError(str(exc)) from None
    return text


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file of option defaults (flags win)")
    common.add_argument("--show-config", action="store_true",
                        help="print the effective settings as JSON and exit")
    common.add_argument("--out", help="output file (default: standard output)")

    tree_opts = argparse.ArgumentParser(add_help=False)
    src = tree_opts.add_mutually_exclusive_group()
    src.add_argument("--depth", type=_depth, help="tree depth (>= 2)")
    src.add_argument("--tree", help="tree JSON file written by gen-tree")
    tree_opts.add_argument("--capacity", type=float, help="server capacity")
    tree_opts.add_argument("--util", type=float, help="utilisation of each VM")
    tree_opts.add_argument("--data-rate", type=float, help="data rate of each flow")

    run_opts = argparse.ArgumentParser(add_help=False)
    run_opts.add_argument("--mode", type=_mode,
                          help="exhaustive | first-feasible | time:<seconds> (default exhaustive)")
    run_opts.add_argument("--seed", type=int, help="random seed (default 0)")
    run_opts.add_argument("--sweeps", type=int, help="annealing sweeps per restart")
    run_opts.add_argument("--restarts", type=int, help="annealing restarts")
    run_opts.add_argument("--size", type=int, help="decomposition subproblem size")
    run_opts.add_argument("--rounds", type=int, help="decomposition rounds")

    parser = argparse.ArgumentParser(
        prog="vdcopt", description="Energy-aware VM placement and routing on tree networks.")
    verbs = parser.add_subparsers(dest="verb", metavar="VERB")
    verbs.add_parser("gen-tree", parents=[common, tree_opts], help="generate a tree as JSON")
    p = verbs.add_parser("build-model", parents=[common, tree_opts],
                         help="write the constrained model as LP-like text")
    p.add_argument("--variant", choices=("full", "routing"),
                   help="full model or routing model for the first-fit placement")
    p = verbs.add_parser("export-qubo", parents=[common, tree_opts],
                         help="write the penalised QUBO in coordinate format")
    p.add_argument("--variant", choices=("full", "routing"))
    p = verbs.add_parser("solve", parents=[common, tree_opts, run_opts],
                         help="solve one instance")
    p.add_argument("--solver", choices=SOLVER_SPECS)
    p.add_argument("--report", action="store_true", default=None,
                   help="also print the full report as JSON")
    p = verbs.add_parser("bench", parents=[common, run_opts], help="run a solver campaign")
    p.add_argument("--depths", type=_depth_list, help="comma-separated depths (default 2,3)")
    p.add_argument("--solvers", type=_solver_list,
                   help="comma-separated solver specs (default exact,split-exact)")
    p.add_argument("--reps", type=int, help="repetitions per cell (default 1)")
    p.add_argument("--reference", choices=SOLVER_SPECS,
                   help="solver whose wall time sets the others' budget in time mode")
    p.add_argument("--format", choices=("markdown", "csv"))
    p.add_argument("--layout", choices=("energy", "time"))
    p.add_argument("--capacity", type=float)
    p.add_argument("--util", type=float)
    p.add_argument("--data-rate", type=float)
    p = verbs.add_parser("render", parents=[common], help="tabulate a saved record file")
    p.add_argument("--records", help="record file written by bench")
    p.add_argument("--format", choices=("markdown", "csv"))
    p.add_argument("--layout", choices=("energy", "time"))
    return parser


def _settings(args: argparse.Namespace, parser: argparse.ArgumentParser) -> dict:
    """Merge defaults, config file and flags, in increasing precedence."""
    merged = dict(DEFAULTS)
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                doc = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            parser.error(f"--config: {exc}")
        if not isinstance(doc, dict):
            parser.error("--config: expected a JSON object")
        unknown = set(doc) - set(DEFAULTS)
        if unknown:
            parser.error(f"--config: unknown keys {sorted(unknown)}")
        merged.update(doc)
    for key, value in vars(args).items():
        if value is not None and key not in ("config", "show_config", "verb"):
            merged[key] = value
    tree_params = dict(merged.get("tree_params") or {})
    for flag, name in TREE_FLAGS.items():
        if merged.pop(flag, None) is not None:
            tree_params[name] = getattr(args, flag)
    merged["tree_params"] = tree_params
    if merged["depth"] is not None and merged["tree"] is not None and args.verb != "bench":
        if args.depth is not None:
            merged["tree"] = None
        else:
            merged["depth"] = None
    return merged


def _tree_params(cfg: dict) -> TreeParams:
    known = {f.name for f in fields(TreeParams)}
    bad = set(cfg["tree_params"]) - known
    if bad:
        raise ConfigError(f"unknown tree parameters {sorted(bad)}")
    return TreeParams(**cfg["tree_params"])


def _tree(cfg: dict):
    if cfg["tree"] is not None:
        return load_tree(cfg["tree"])
    return build_proxytree(_tree_params(cfg), depth=cfg["depth"])


def _out_path(path: str) -> str:
    base = os.environ.get(OUT_DIR_ENV)
    if base and not os.path.isabs(path):
        os.makedirs(base, exist_ok=True)
        return os.path.join(base, path)
    return path


def _emit(text: str, cfg: dict) -> None:
    if cfg["out"] is None:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")
        return
    path = _out_path(cfg["out"])
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)
    print(f"wrote {path}", file=sys.stderr)


def _model(cfg: dict):
    tree = _tree(cfg)
    if cfg["variant"] == "routing":
        return build_routing_cqm(tree, greedy_first_fit(tree))
    return build_full_cqm(tree)


def _solve(cfg: dict) -> None:
    tree = _tree(cfg)
    variant, solver = parse_solver_spec(cfg["solver"])
    sa = SaParams(sweeps=cfg["sweeps"], restarts=cfg["restarts"])
    dec = DecompParams(size=cfg["size"], rounds=cfg["rounds"])
    report = run_one(tree, variant, solver, SolveBudget.parse(cfg["mode"]), cfg["seed"], sa, dec,
                     PenaltyConfig())
    print(report.summary())
    if cfg["report"]:
        _emit(json.dumps(report.to_dict(), indent=2, default=str), cfg)


def _bench(cfg: dict) -> None:
    depths = tuple(int(d) for d in str(cfg["depths"]).split(",") if d.strip())
    solvers = tuple(s.strip() for s in str(cfg["solvers"]).split(",") if s.strip())
    out = _out_path(cfg["out"] or DEFAULT_RECORDS)
    exp = ExperimentConfig(
        depths=depths, solvers=solvers, budget=SolveBudget.parse(cfg["mode"]), reps=cfg["reps"],
        seed_base=cfg["seed"], tree_params=_tree_params(cfg), out=out,
        reference=cfg["reference"],
        sa_params=SaParams(sweeps=cfg["sweeps"], restarts=cfg["restarts"]),
        decomp_params=DecompParams(size=cfg["size"], rounds=cfg["rounds"]))
    exp.validate()
    if os.path.exists(out):
        os.remove(out)  # a campaign starts a fresh record file

    def progress(rec):
        print(f"depth={rec.depth} {rec.spec} rep={rec.rep} energy={rec.energy:g} "
              f"feasible={rec.feasible} time={rec.wall_time:.3f}s", file=sys.stderr)

    records = run_experiment(exp, progress)
    print(f"records written to {out}", file=sys.stderr)
    sys.stdout.write(render_table(records, cfg["layout"], cfg["format"]))


def _render(cfg: dict) -> None:
    path = cfg["records"] or _out_path(DEFAULT_RECORDS)
    sys.stdout.write(render_table(load_records(path), cfg["layout"], cfg["format"]))


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = parser.parse_args(argv)
        if args.verb is None:
            parser.print_help(sys.stderr)
            print("vdcopt: error: a verb is required", file=sys.stderr)
            return 2
        cfg = _settings(args, parser)
        needs_tree = args.verb in ("gen-tree", "build-model", "export-qubo", "solve")
        if needs_tree and cfg["depth"] is None and cfg["tree"] is None:
            parser.error("one of --depth or --tree is required")
    except SystemExit as exc:
        return int(exc.code or 0)

    try:
        if args.show_config:
            shown = dict(cfg, verb=args.verb, tree_params=asdict(_tree_params(cfg)))
            shown[OUT_DIR_ENV] = os.environ.get(OUT_DIR_ENV)
            print(json.dumps(shown, indent=2, sort_keys=True))
            return 0
        elif args.verb == "gen-tree":
            _emit(serialize_tree(_tree(cfg)), cfg)
        elif args.verb == "build-model":
            _emit(export_model(_model(cfg)), cfg)
        elif args.verb == "export-qubo":
            _emit(export_qubo(cqm_to_qubo(_model(cfg))), cfg)
        elif args.verb == "solve":
            _solve(cfg)
        elif args.verb == "bench":
            _bench(cfg)
        else:
            _render(cfg)
    except (ValueError, OSError, KeyError) as exc:
        print(f"vdcopt: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
