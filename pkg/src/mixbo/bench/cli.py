"""``bench`` command line: single runs, ablation grids and the JSONL protocol."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from ..driver import Optimizer, OptimizerConfig, ProtocolError, serve_protocol
from ..space import SearchSpace, ValidationError
from .harness import PRESET_GRIDS, run_ablation, run_problem, score
from .problems import builtin_problems, get_problem


def parse_seeds(text: str) -> list[int]:
    """``"0..19"`` (inclusive range), ``"3"`` or ``"1,4,7"``."""
    seeds: list[int] = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if ".." in part:
            lo, hi = part.split("..", 1)
            seeds.extend(range(int(lo), int(hi) + 1))
        else:
            seeds.append(int(part))
    if not seeds:
        raise ValidationError(f"no seeds in {text!r}")
    return seeds


def parse_problems(text: str):
    if text == "all":
        return builtin_problems()
    return [get_problem(name.strip()) for name in text.split(",") if name.strip()]


def _load_json(path: str):
    with open(path) as fh:
        return json.load(fh)


def cmd_run(args) -> int:
    doc = _load_json(args.config) if args.config else {}
    doc["seed"] = args.seed
    cfg = OptimizerConfig.from_dict(doc)
    problem = get_problem(args.problem)
    report = run_problem(problem, cfg)
    report.score = score(report, problem, cfg.total_evaluations)
    text = json.dumps(report.to_dict(), indent=2, default=float)
    if args.out:
        Path(args.out).write_text(text + "\n")
    else:
        print(text)
    return 0


def cmd_ablation(args) -> int:
    grid = PRESET_GRIDS[args.grid] if args.grid in PRESET_GRIDS else _load_json(args.grid)
    overrides = {}
    if args.total_batches is not None:
        overrides["total_batches"] = args.total_batches
    _, summary = run_ablation(grid, parse_problems(args.problems), parse_seeds(args.seeds), args.out, overrides)
    for row in summary:
        print(
            f"{row['meta_opt']:6s} {row['discretization']:8s} {row['init']:6s} "
            f"{row['init_batches']!s:>2} {row['meta_init']:13s} mean={row['mean_score']:.3f} "
            f"median={row['median_score']:.3f} n={row['runs']}"
        )
    return 0


def cmd_serve(args) -> int:
    doc = _load_json(args.config)
    if "space" not in doc:
        raise ValidationError("serve-protocol config needs a 'space' document")
    opt = Optimizer(SearchSpace.from_dict(doc["space"]), OptimizerConfig.from_dict(doc))
    serve_protocol(opt, sys.stdin, sys.stdout)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bench", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run one optimizer on one builtin problem")
    p.add_argument("--config", help="run config JSON (defaults to the chosen configuration)")
    p.add_argument("--problem", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="write the run report JSON here instead of stdout")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("ablation", help="run a config grid over problems and seeds")
    p.add_argument("--grid", required=True, help="grid JSON file, or 'discretization' / 'initialization'")
    p.add_argument("--problems", default="all")
    p.add_argument("--seeds", default="0..19")
    p.add_argument("--out", required=True, help="per-run CSV; summary goes to <stem>.summary.csv")
    p.add_argument("--total-batches", type=int, default=None, help="override the batch budget")
    p.set_defaults(func=cmd_ablation)

    p = sub.add_parser("serve-protocol", help="speak the JSONL suggest/observe protocol on stdio")
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_serve)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr)
    try:
        return args.func(args)
    except (ValidationError, ProtocolError, KeyError, OSError, json.JSONDecodeError) as exc:
        print(f"bench: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
