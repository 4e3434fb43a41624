"""Command-line entry points.

Subcommands: detect-mups, plan, repair, serve, report.  Datasets are always
a schema JSON file plus a JSON-lines tuple file.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .orchestrator import RepairRun, RunConfig, attach_disparity, repair_run
from .patterns import InvertedIndex, find_mups, min_level_mups, pattern_to_string
from .schema import load_dataset
from .selection import (
    compute_gaps,
    export_plan,
    greedy_plan,
    min_gap_plan,
    random_plan,
    write_plan,
)


def _add_dataset_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--schema", required=True, help="schema JSON file")
    p.add_argument("--tuples", required=True, help="tuple JSONL file")


def _add_config_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--tau", type=int, default=None)
    p.add_argument("--alpha-quality", type=float, default=0.1)
    p.add_argument("--n-eval", type=int, default=5)
    p.add_argument("--nu", type=float, default=0.3)
    p.add_argument("--kernel", choices=["rbf", "linear"], default="rbf")
    p.add_argument("--gamma", type=float, default=None)
    p.add_argument(
        "--strategy",
        choices=["no_guide", "random_guide", "similar_tuple", "linucb"],
        default="linucb",
    )
    p.add_argument(
        "--mask-level", choices=["accurate", "moderate", "imprecise"], default=None
    )
    p.add_argument("--alpha-ucb", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-attempts", type=int, default=20)
    p.add_argument("--backend", choices=["mock", "live"], default="mock")
    p.add_argument("--evaluator", choices=["simulated", "human"], default="simulated")
    p.add_argument("--unit-cost", default="0.016")
    p.add_argument("--iterate-levels", action="store_true")
    p.add_argument("--realism-p", type=float, default=0.86)
    p.add_argument("--evaluator-realism", type=float, default=0.8)


def _config_from_args(args) -> RunConfig:
    return RunConfig(
        tau=args.tau,
        alpha_quality=args.alpha_quality,
        n_eval=args.n_eval,
        nu=args.nu,
        kernel=args.kernel,
        gamma=args.gamma,
        strategy=args.strategy,
        mask_level=args.mask_level,
        alpha_ucb=args.alpha_ucb,
        seed=args.seed,
        max_attempts_per_tuple=args.max_attempts,
        backend=args.backend,
        evaluator_mode=args.evaluator,
        unit_cost=args.unit_cost,
        iterate_levels=args.iterate_levels,
        realism_p=args.realism_p,
        evaluator_realism=args.evaluator_realism,
    )


def cmd_detect_mups(args) -> int:
    dataset = load_dataset(args.schema, args.tuples)
    index = InvertedIndex.from_dataset(dataset)
    mups = find_mups(index, dataset.schema, args.tau)
    doc = {
        "tau": args.tau,
        "tuples": len(dataset),
        "mups": [
            {
                "pattern": pattern_to_string(p, dataset.schema),
                "level": p.level,
                "count": index.count(p),
            }
            for p in mups
        ],
    }
    json.dump(doc, sys.stdout, indent=2)
    print()
    return 0


def cmd_plan(args) -> int:
    dataset = load_dataset(args.schema, args.tuples)
    index = InvertedIndex.from_dataset(dataset)
    mups = find_mups(index, dataset.schema, args.tau)
    if not len(mups):
        print(json.dumps({"tau": args.tau, "mups": 0, "sigma": {}, "total": 0}))
        return 0
    mstar = min_level_mups(mups)
    gaps = compute_gaps(mstar, index, args.tau)
    if args.solver == "greedy":
        plan = greedy_plan(mstar, gaps, dataset.schema, index)
    elif args.solver == "min_gap":
        plan = min_gap_plan(mstar, gaps, dataset.schema, index)
    else:
        plan = random_plan(mstar, gaps, dataset.schema, args.seed)
    doc = export_plan(plan, dataset.schema, solver=args.solver, eta=gaps.eta(), seed=args.seed)
    if args.out:
        write_plan(doc, args.out)
    json.dump(doc, sys.stdout, indent=2)
    print()
    return 0


def cmd_repair(args) -> int:
    run_dir = Path(args.run_dir)
    if args.resume:
        run = RepairRun.resume(run_dir)
        report = run.execute()
    else:
        dataset = load_dataset(args.schema, args.tuples)
        config = _config_from_args(args)
        report = repair_run(dataset, config, run_dir)
    json.dump(report, sys.stdout, indent=2)
    print()
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    app = create_app(args.run_dir)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def cmd_report(args) -> int:
    report_path = Path(args.run_dir) / "report.json"
    if not report_path.exists():
        print(f"no report under {args.run_dir}", file=sys.stderr)
        return 1
    report = json.loads(report_path.read_text())
    if args.overall_metric is not None:
        groups = {}
        for spec in args.group_metric or []:
            name, _, value = spec.partition("=")
            groups[name] = float(value)
        report = attach_disparity(report, args.overall_metric, groups)
    json.dump(report, sys.stdout, indent=2)
    print()
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="covrepair")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("detect-mups", help="list maximal uncovered patterns")
    _add_dataset_args(p)
    p.add_argument("--tau", type=int, required=True)
    p.set_defaults(func=cmd_detect_mups)

    p = sub.add_parser("plan", help="solve combination selection")
    _add_dataset_args(p)
    p.add_argument("--tau", type=int, required=True)
    p.add_argument("--solver", choices=["greedy", "min_gap", "random"], default="greedy")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None, help="write the plan JSON here")
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("repair", help="run the full repair loop")
    p.add_argument("--schema")
    p.add_argument("--tuples")
    _add_config_args(p)
    p.add_argument("--run-dir", required=True)
    p.add_argument("--resume", action="store_true", help="continue a suspended run")
    p.set_defaults(func=cmd_repair)

    p = sub.add_parser("serve", help="start the HTTP service")
    p.add_argument("--run-dir", required=True, help="service working directory")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8650)
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("report", help="print (and extend) a run report")
    p.add_argument("--run-dir", required=True)
    p.add_argument("--overall-metric", type=float, default=None)
    p.add_argument(
        "--group-metric",
        action="append",
        help="NAME=VALUE, repeatable; group metric for disparity",
    )
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "repair" and not args.resume:
        if not args.schema or not args.tuples or args.tau is None:
            parser.error("repair requires --schema, --tuples and --tau (or --resume)")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
