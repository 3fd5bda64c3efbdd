"""Run protocol, normalized scoring and ablation grids."""

from __future__ import annotations

import csv
import itertools
import logging
import math
import statistics
import time
import zlib
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

from ..driver import Optimizer, OptimizerConfig, random_init
from ..space import ValidationError
from .problems import Problem

log = logging.getLogger(__name__)

CSV_FIELDS = [
    "problem", "seed", "meta_opt", "discretization", "init", "init_batches",
    "meta_init", "best_value", "score", "wall_s", "error",
]
BASELINE_REPEATS = 51

DISCRETIZATION_GRID = {
    "base": {"init": "random", "init_batches": 2, "meta_init": "random"},
    "axes": {"meta_optimizer": ["local", "de"], "discretization": ["naive", "complex"]},
}
INITIALIZATION_GRID = {
    "base": {"meta_optimizer": "de", "discretization": "complex"},
    "axes": {
        "init": ["lh", "random"],
        "init_batches": [5, 2],
        "meta_init": ["quasi_random", "random"],
    },
}
PRESET_GRIDS = {"discretization": DISCRETIZATION_GRID, "initialization": INITIALIZATION_GRID}


@dataclass
class RunReport:
    problem: str
    seed: int
    config: dict
    trace: list[float]
    best_value: float
    best_assignment: dict
    n_evaluations: int
    wall_s: float
    hyperparameters: list[dict] = field(default_factory=list)
    score: float | None = None

    def to_dict(self) -> dict:
        return asdict(self)


def run_problem(problem: Problem, config: OptimizerConfig) -> RunReport:
    """Run one optimizer over ``problem`` under the batch protocol."""
    t0 = time.perf_counter()
    opt = Optimizer(problem.space, config)
    n = 0
    while not opt.finished:
        batch = opt.suggest()
        opt.observe([problem(a) for a in batch])
        n += len(batch)
    best_a, best_v = opt.best()
    return RunReport(
        problem=problem.name,
        seed=config.seed,
        config=config.to_dict(),
        trace=opt.incumbent_trace(),
        best_value=best_v,
        best_assignment=best_a,
        n_evaluations=n,
        wall_s=time.perf_counter() - t0,
        hyperparameters=opt.hyperparameters,
    )


def random_search_best(problem: Problem, budget: int, seed) -> float:
    batch = random_init(problem.space, 1, budget, seed)
    return min(problem(a) for a in batch)


_BASELINES: dict[tuple[str, int], float] = {}


def random_baseline(problem: Problem, budget: int = 128) -> float:
    """Median best value of pure random search with ``budget`` evaluations.

    Uses a seed stream derived only from the problem name and budget, so it
    is reproducible and independent of optimizer seeds; cached per key.
    """
    key = (problem.name, budget)
    if key not in _BASELINES:
        root = np.random.SeedSequence([zlib.crc32(problem.name.encode()), budget, 0xBA5E])
        bests = [random_search_best(problem, budget, s) for s in root.spawn(BASELINE_REPEATS)]
        _BASELINES[key] = float(np.median(bests))
    return _BASELINES[key]


def normalized_score(best_found: float, baseline: float, optimum: float) -> float:
    """100 * clip((baseline - best) / (baseline - optimum), 0, 1)."""
    if baseline == optimum:
        return 100.0 if best_found <= optimum else 0.0
    return 100.0 * min(max((baseline - best_found) / (baseline - optimum), 0.0), 1.0)


def score(run: RunReport | float, problem: Problem, budget: int = 128) -> float:
    if problem.known_optimum is None:
        raise ValidationError(f"problem {problem.name!r} has no known optimum")
    best = run.best_value if isinstance(run, RunReport) else float(run)
    return normalized_score(best, random_baseline(problem, budget), problem.known_optimum)


# -- grids --------------------------------------------------------------------


def expand_grid(grid: Mapping[str, Any] | Sequence[Mapping[str, Any]]) -> list[dict]:
    """Turn a grid document into a list of config dicts.

    Accepts a list of configs, ``{"configs": [...]}``, or
    ``{"base": {...}, "axes": {key: [values...]}}`` (cartesian product).
    """
    if isinstance(grid, Sequence) and not isinstance(grid, (str, bytes)):
        configs = [dict(c) for c in grid]
    elif "configs" in grid:
        configs = [dict(c) for c in grid["configs"]]
    else:
        base = dict(grid.get("base", {}))
        axes = grid.get("axes", {})
        keys = list(axes)
        configs = [
            {**base, **dict(zip(keys, values))}
            for values in itertools.product(*(axes[k] for k in keys))
        ]
    if not configs:
        raise ValidationError("ablation grid is empty")
    return configs


def _row(problem: str, seed: int, cfg: OptimizerConfig | None, raw: Mapping) -> dict:
    if cfg is not None:
        return {
            "problem": problem, "seed": seed, "meta_opt": cfg.meta_optimizer.value,
            "discretization": cfg.discretization.value, "init": cfg.init,
            "init_batches": cfg.init_batches, "meta_init": cfg.meta_init.value,
        }
    kernel = raw.get("kernel", {})
    return {
        "problem": problem, "seed": seed, "meta_opt": raw.get("meta_optimizer", ""),
        "discretization": kernel.get("discretization", raw.get("discretization", "")),
        "init": raw.get("init", ""), "init_batches": raw.get("init_batches", ""),
        "meta_init": raw.get("meta_init", ""),
    }


def config_key(row: Mapping) -> tuple:
    return tuple(row[k] for k in ("meta_opt", "discretization", "init", "init_batches", "meta_init"))


def run_ablation(
    grid,
    problems: Sequence[Problem],
    seeds: Sequence[int],
    out_path: str | Path | None = None,
    overrides: Mapping[str, Any] | None = None,
) -> tuple[list[dict], list[dict]]:
    """Run every (config, problem, seed) combination.

    Returns ``(rows, summary)``: one row per run in the fixed CSV schema and
    one summary row per config sorted by mean score (descending).  When
    ``out_path`` is given the rows are written there and the summary to
    ``<stem>.summary.csv`` alongside.  A failing run scores 0 and records
    its error instead of aborting the grid.
    """
    seeds = list(seeds)
    if not seeds:
        raise ValidationError("ablation needs at least one seed")
    if not problems:
        raise ValidationError("ablation needs at least one problem")
    configs = expand_grid(grid)
    rows = []
    for raw in configs:
        for problem in problems:
            for seed in seeds:
                doc = {**raw, **(overrides or {}), "seed": seed}
                cfg = None
                try:
                    cfg = OptimizerConfig.from_dict(doc)
                    report = run_problem(problem, cfg)
                    row = _row(problem.name, seed, cfg, doc)
                    row.update(
                        best_value=report.best_value,
                        score=score(report, problem, cfg.total_evaluations),
                        wall_s=round(report.wall_s, 3), error="",
                    )
                except Exception as exc:  # recorded, never aborts the grid
                    log.exception("run failed: %s seed %s", problem.name, seed)
                    row = _row(problem.name, seed, cfg, doc)
                    row.update(best_value=math.nan, score=0.0, wall_s=0.0, error=f"{type(exc).__name__}: {exc}")
                rows.append(row)
    summary = summarize(rows)
    if out_path is not None:
        write_csv(rows, out_path)
        out_path = Path(out_path)
        write_csv(summary, out_path.with_name(out_path.stem + ".summary.csv"),
                  fields=list(summary[0]))
    return rows, summary


def summarize(rows: Iterable[Mapping]) -> list[dict]:
    groups: dict[tuple, list[float]] = {}
    for r in rows:
        groups.setdefault(config_key(r), []).append(float(r["score"]))
    summary = []
    for key, scores in groups.items():
        summary.append({
            **dict(zip(("meta_opt", "discretization", "init", "init_batches", "meta_init"), key)),
            "runs": len(scores),
            "mean_score": statistics.fmean(scores),
            "median_score": statistics.median(scores),
        })
    summary.sort(key=lambda r: -r["mean_score"])
    return summary


def write_csv(rows: Sequence[Mapping], path: str | Path, fields: Sequence[str] = CSV_FIELDS) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(fields))
        w.writeheader()
        for r in rows:
            w.writerow({k: r.get(k, "") for k in fields})
