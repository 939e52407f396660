"""Command-line entry points: train-backend, plan, eval and plot."""
from __future__ import annotations

import argparse
import logging
import math
import time
from typing import List, Optional

import numpy as np
from pydantic import ValidationError

from app.core.config import get_settings
from app.core.errors import CopError
from app.services.backend_store import resolve_backend, save_backend
from app.services.experiment_service import load_experiment_config, read_results_csv, run_experiment
from app.services.maze_service import resolve_map
from app.services.oracle_backend import build_oracle
from app.services.planner_service import PlannerConfig, plan, plan_record, write_plan, write_tree
from app.services.plot_service import PLOT_KINDS, emit_plot
from app.services.scenario_service import sample_region_start_goal, sample_start_goal
from app.services.sorb_service import sorb_plan
from app.services.tabular_backend import TabularConfig, train_tabular

logger = logging.getLogger(__name__)


def _limit(text: str) -> float:
    if text.lower() in ("inf", "none"):
        return math.inf
    return float(text)


def _parse_args(argv: Optional[List[str]] = None) -> argparse.Namespace:
    parser = argparse.ArgumentParser(prog="coprl", description=__doc__)
    parser.add_argument("--log-level", default=None, help="overrides COPRL_LOG_LEVEL")
    sub = parser.add_subparsers(dest="command", required=True)

    train = sub.add_parser("train-backend", help="build a value backend snapshot")
    train.add_argument("--map", required=True, help="bundled map name or JSON path")
    train.add_argument("--backend", choices=("tabular", "oracle"), default="tabular")
    train.add_argument("--out", required=True)
    train.add_argument("--eta", type=float, default=None)
    train.add_argument("--grid-res", type=float, default=None)

    run = sub.add_parser("plan", help="plan one start/goal pair")
    run.add_argument("--map", required=True)
    run.add_argument("--backend", default="oracle", help='"oracle" or a snapshot path')
    run.add_argument("--algorithm", choices=("cop", "rrtstar_unconstrained", "sorb"), default="cop")
    run.add_argument("--k", type=_limit, default=math.inf, help="cost limit; inf for none")
    run.add_argument("--alpha", type=float, default=1.0)
    run.add_argument("--iters", type=int, default=None)
    run.add_argument("--goal-bias", type=float, default=None, help="probability of sampling the goal directly")
    run.add_argument("--seed", type=int, default=0)
    run.add_argument("--start", type=float, nargs=2, default=None, metavar=("X", "Y"))
    run.add_argument("--goal", type=float, nargs=2, default=None, metavar=("X", "Y"))
    run.add_argument("--difficulty", type=float, default=0.5, help="used when --start/--goal are omitted")
    run.add_argument("--rooms", action="store_true", help="sample start/goal from the map regions")
    run.add_argument("--out", required=True)
    run.add_argument("--tree", default=None, help="also write the tree as an edge list")
    run.add_argument("--timing", action="store_true", help="record wall_time_ms")
    run.add_argument("--debug", action="store_true", help="check tree invariants every iteration")

    ev = sub.add_parser("eval", help="run an experiment grid")
    ev.add_argument("--config", required=True)
    ev.add_argument("--out", default=None, help="overrides output_dir")
    ev.add_argument("--trace-dir", default=None, help="write per-step traces of every executed trial")

    plot = sub.add_parser("plot", help="render a figure from results.csv")
    plot.add_argument("--in", dest="input", required=True)
    plot.add_argument("--kind", choices=PLOT_KINDS, required=True)
    plot.add_argument("--out", required=True)
    return parser.parse_args(argv)


def _train(args: argparse.Namespace) -> None:
    maze = resolve_map(args.map)
    if args.backend == "oracle":
        backend = build_oracle(maze, grid_res=args.grid_res, eta=args.eta)
    else:
        overrides = {k: v for k, v in (("eta", args.eta), ("grid_res", args.grid_res)) if v is not None}
        backend = train_tabular(maze, TabularConfig(**overrides))
    save_backend(backend, args.out)


def _plan(args: argparse.Namespace) -> None:
    maze = resolve_map(args.map)
    backend = resolve_backend(args.backend, maze)
    if args.start is not None and args.goal is not None:
        start, goal = np.asarray(args.start), np.asarray(args.goal)
    elif args.rooms:
        start, goal = sample_region_start_goal(maze, args.seed)
    else:
        start, goal = sample_start_goal(maze, args.difficulty, args.seed)

    overrides = {"iterations": args.iters} if args.iters else {}
    if args.goal_bias is not None:
        overrides["goal_bias"] = args.goal_bias
    K = args.k if args.algorithm == "cop" else math.inf
    cfg = PlannerConfig(K=K, alpha=args.alpha, seed=args.seed, debug=args.debug, **overrides)
    started = time.perf_counter()
    tree = None
    if args.algorithm == "sorb":
        best = sorb_plan(backend, maze, start, goal, seed=args.seed, alpha=args.alpha)
    else:
        tree, best = plan(backend, maze, start, goal, cfg)
    elapsed = (time.perf_counter() - started) * 1000.0

    record = plan_record(best, cfg, elapsed if args.timing else None)
    record.update(start=[float(v) for v in start], goal=[float(v) for v in goal], algorithm=args.algorithm)
    write_plan(record, args.out)
    if args.tree and tree is not None:
        write_tree(tree, args.tree)
    if best is None:
        logger.warning("No solution found; wrote an empty plan to %s", args.out)
    else:
        logger.info("Plan length %.3f, CVaR %.3f; wrote %s", best.length, best.cvar_certificate, args.out)


def _eval(args: argparse.Namespace) -> None:
    cfg = load_experiment_config(args.config)
    if args.out:
        cfg = cfg.model_copy(update={"output_dir": args.out})
    if args.trace_dir:
        cfg = cfg.model_copy(update={"trace_dir": args.trace_dir})
    run_experiment(cfg)


def _plot(args: argparse.Namespace) -> None:
    emit_plot(read_results_csv(args.input), args.kind, args.out)


_COMMANDS = {"train-backend": _train, "plan": _plan, "eval": _eval, "plot": _plot}


def main(argv: Optional[List[str]] = None) -> int:
    args = _parse_args(argv)
    logging.basicConfig(
        level=(args.log_level or get_settings().log_level).upper(),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    try:
        _COMMANDS[args.command](args)
    except (CopError, OSError, ValidationError) as exc:
        logger.error("%s failed: %s", args.command, exc)
        return 2
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
