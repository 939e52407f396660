"""Experiment driver: paired trials over algorithms, cost limits, risk levels and difficulties."""
from __future__ import annotations

import json
import logging
import math
import os
from typing import Any, Dict, List, Literal, Optional, Tuple

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, field_validator

from app.core.config import DEFAULTS, get_settings, horizon_for
from app.core.dist_core import cvar_alpha, empirical_cvar
from app.core.errors import ConfigError
from app.db.database import init_db
from app.db.models import ExperimentRun, TrialResult
from app.services.backend_store import resolve_backend
from app.services.executor_service import TrajectoryRecord, execute, execute_direct, write_trace
from app.services.maze_service import MazeMap, resolve_map
from app.services.oracle_backend import build_oracle
from app.services.planner_service import PathSolution, PlannerConfig, plan
from app.services.scenario_service import ROOM_PROTOCOL_HORIZON, sample_region_start_goal, sample_start_goal
from app.services.sorb_service import sorb_plan
from app.services.tabular_backend import train_tabular
from app.services.value_backend import ValueBackend

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
Algorithm = Literal["cop", "sorb", "grl", "rrtstar_unconstrained"]
# Algorithms whose plan does not depend on (K, alpha).
UNCONSTRAINED = ("sorb", "grl", "rrtstar_unconstrained")

RESULT_COLUMNS = [
    "schema_version",
    "trial",
    "seed",
    "algorithm",
    "K",
    "alpha",
    "difficulty",
    "planned",
    "success",
    "steps",
    "negated_reward",
    "realized_cost",
    "path_length",
    "certificate_cvar",
    "violated",
    "stalled",
]
CELL_KEYS = ["algorithm", "K", "alpha", "difficulty"]
CVAR_LEVELS = [float(a) for a in DEFAULTS["report_cvar_levels"]]


class ExperimentConfig(BaseModel):
    """Evaluation grid; ``K: null`` in JSON means no cost limit."""

    model_config = ConfigDict(extra="forbid")

    map: str
    algorithms: List[Algorithm] = Field(default_factory=lambda: ["cop"], min_length=1)
    # "oracle", "tabular" (trained on the fly) or a snapshot path
    backend: str = "oracle"
    K: List[Optional[float]] = Field(default_factory=lambda: [None], min_length=1)
    alpha: List[float] = Field(default_factory=lambda: [1.0], min_length=1)
    protocol: Literal["difficulty", "rooms"] = "difficulty"
    difficulty: List[float] = Field(default_factory=lambda: [0.5])
    trials: int = Field(default=1, ge=1)
    base_seed: int = 0
    iterations: int = Field(default=DEFAULTS["planner"]["iterations"], ge=1)
    sorb_nodes: int = Field(default=DEFAULTS["sorb"]["n_nodes"], ge=2)
    goal_bias: float = Field(default=DEFAULTS["planner"]["goal_bias"], ge=0.0, lt=1.0)
    # overrides the protocol horizon when set
    horizon: Optional[int] = Field(default=None, ge=1)
    output_dir: str = "results"
    results_db_url: Optional[str] = None
    # per-step CSV traces of every executed trial land here when set
    trace_dir: Optional[str] = None

    @field_validator("K")
    @classmethod
    def _check_k(cls, values: List[Optional[float]]) -> List[Optional[float]]:
        for k in values:
            if k is not None and not k >= 0:
                raise ValueError(f"cost limits must be non-negative, got {k}")
        return values

    @field_validator("alpha")
    @classmethod
    def _check_alpha(cls, values: List[float]) -> List[float]:
        for a in values:
            if not 0.0 < a <= 1.0:
                raise ValueError(f"alpha must lie in (0, 1], got {a}")
        return values

    @field_validator("difficulty")
    @classmethod
    def _check_difficulty(cls, values: List[float]) -> List[float]:
        for v in values:
            if not 0.0 < v <= 1.0:
                raise ValueError(f"difficulty must lie in (0, 1], got {v}")
        return values

    @property
    def limits(self) -> List[float]:
        return [math.inf if k is None else float(k) for k in self.K]

    def cells(self) -> List[Optional[float]]:
        if self.protocol == "rooms":
            return [None]
        if not self.difficulty:
            raise ConfigError("the difficulty protocol needs at least one difficulty level")
        return list(self.difficulty)


def load_experiment_config(path: str) -> ExperimentConfig:
    with open(path, "r") as f:
        return ExperimentConfig.model_validate_json(f.read())


def load_experiment_backend(cfg: ExperimentConfig, maze: MazeMap) -> ValueBackend:
    if cfg.backend == "oracle":
        return build_oracle(maze)
    if cfg.backend == "tabular":
        logger.info("Training a tabular backend for %s", maze.name)
        return train_tabular(maze)
    return resolve_backend(cfg.backend, maze)


def _scenario(
    maze: MazeMap,
    cfg: ExperimentConfig,
    difficulty: Optional[float],
    seed: int,
) -> Tuple[np.ndarray, np.ndarray, int]:
    if difficulty is None:
        start, goal = sample_region_start_goal(maze, seed)
        horizon = ROOM_PROTOCOL_HORIZON
    else:
        start, goal = sample_start_goal(maze, difficulty, seed)
        horizon = horizon_for(difficulty)
    return start, goal, cfg.horizon or horizon


def _row(
    trial: int,
    seed: int,
    algorithm: str,
    K: float,
    alpha: float,
    difficulty: Optional[float],
    path: Optional[PathSolution],
    record: Optional[TrajectoryRecord],
) -> Dict[str, Any]:
    planned = algorithm == "grl" or path is not None
    executed = record is not None
    realized = record.realized_cost if executed else 0.0
    return {
        "schema_version": SCHEMA_VERSION,
        "trial": trial,
        "seed": seed,
        "algorithm": algorithm,
        "K": K,
        "alpha": alpha,
        "difficulty": np.nan if difficulty is None else difficulty,
        "planned": planned,
        "success": bool(executed and record.success),
        "steps": record.steps if executed else 0,
        "negated_reward": record.negated_reward if executed else 0.0,
        "realized_cost": realized,
        "path_length": path.length if path is not None else np.nan,
        "certificate_cvar": cvar_alpha(path.cost, alpha) if path is not None else np.nan,
        "violated": bool(executed and math.isfinite(K) and realized > K),
        "stalled": bool(executed and record.stalled),
    }


def _trace_path(
    cfg: ExperimentConfig,
    algorithm: str,
    K: float,
    alpha: float,
    difficulty: Optional[float],
    trial: int,
) -> str:
    cell = "rooms" if difficulty is None else f"d{difficulty:g}"
    name = f"{algorithm}_K{K:g}_a{alpha:g}_{cell}_t{trial}.csv"
    return os.path.join(cfg.trace_dir, name)


def run_trial(
    maze: MazeMap,
    backend: ValueBackend,
    cfg: ExperimentConfig,
    difficulty: Optional[float],
    trial: int,
) -> List[Dict[str, Any]]:
    """All rows for one trial index; every algorithm and limit shares the start/goal.

    Args:
        maze: the map the trial runs on.
        backend: value backend shared by planning and execution.
        cfg: experiment grid; ``trace_dir`` switches on per-step traces.
        difficulty: difficulty level, or None for the rooms protocol.
        trial: trial index; the seed is ``cfg.base_seed + trial``.

    Returns:
        One result row per (algorithm, K, alpha) combination.
    """
    seed = cfg.base_seed + trial
    start, goal, horizon = _scenario(maze, cfg, difficulty, seed)
    rows = []

    def keep(
        algorithm: str,
        K: float,
        alpha: float,
        path: Optional[PathSolution],
        record: Optional[TrajectoryRecord],
    ) -> None:
        rows.append(_row(trial, seed, algorithm, K, alpha, difficulty, path, record))
        if record is not None and cfg.trace_dir is not None:
            write_trace(record, _trace_path(cfg, algorithm, K, alpha, difficulty, trial))

    for algorithm in cfg.algorithms:
        if algorithm in UNCONSTRAINED:
            path, record = _run_unconstrained(maze, backend, cfg, algorithm, start, goal, horizon, seed)
            for K in cfg.limits:
                for alpha in cfg.alpha:
                    keep(algorithm, K, alpha, path, record)
            continue
        for K in cfg.limits:
            for alpha in cfg.alpha:
                planner_cfg = PlannerConfig(
                    K=K, alpha=alpha, iterations=cfg.iterations, goal_bias=cfg.goal_bias, seed=seed
                )
                _, path = plan(backend, maze, start, goal, planner_cfg)
                record = None
                if path is not None:
                    record = execute(maze, backend, path, horizon, seed, goal=goal, record_log=cfg.trace_dir is not None)
                keep(algorithm, K, alpha, path, record)
    return rows


def _run_unconstrained(
    maze: MazeMap,
    backend: ValueBackend,
    cfg: ExperimentConfig,
    algorithm: str,
    start: np.ndarray,
    goal: np.ndarray,
    horizon: int,
    seed: int,
) -> Tuple[Optional[PathSolution], Optional[TrajectoryRecord]]:
    traced = cfg.trace_dir is not None
    if algorithm == "grl":
        return None, execute_direct(maze, backend, start, goal, horizon, seed, record_log=traced)
    if algorithm == "sorb":
        path = sorb_plan(backend, maze, start, goal, n_nodes=cfg.sorb_nodes, seed=seed)
    else:
        planner_cfg = PlannerConfig(iterations=cfg.iterations, goal_bias=cfg.goal_bias, seed=seed)
        _, path = plan(backend, maze, start, goal, planner_cfg)
    if path is None:
        return None, None
    return path, execute(maze, backend, path, horizon, seed, goal=goal, record_log=traced)


def run_experiment(cfg: ExperimentConfig, backend: Optional[ValueBackend] = None) -> pd.DataFrame:
    """Run every (difficulty, trial) cell and return the trial table.

    Results and the per-cell summary are written to ``cfg.output_dir``; rows
    are also stored in the results database when a URL is configured.


    Args:
        cfg: the evaluation grid.
        backend: a prepared backend; built from ``cfg.backend`` when None.

    Returns:
        One row per (difficulty, trial, algorithm, K, alpha) with
        ``RESULT_COLUMNS`` as columns.
    """
    maze = resolve_map(cfg.map)
    backend = backend or load_experiment_backend(cfg, maze)
    rows: List[Dict[str, Any]] = []
    for difficulty in cfg.cells():
        logger.info(
            "Running %d trials on %s (difficulty %s, algorithms %s)",
            cfg.trials, maze.name, difficulty, ",".join(cfg.algorithms),
        )
        for trial in range(cfg.trials):
            rows.extend(run_trial(maze, backend, cfg, difficulty, trial))
    table = pd.DataFrame(rows, columns=RESULT_COLUMNS)
    summary = summarize(table)
    write_results(table, summary, cfg.output_dir)

    url = cfg.results_db_url or get_settings().results_db_url
    if url:
        store_results(table, cfg, maze.name, url)
    return table


# ---------------------------------------------------------------------------
# Aggregation and output
# ---------------------------------------------------------------------------

def _cell_summary(group: pd.DataFrame) -> pd.Series:
    executed = group[group["planned"]]
    successes = group[group["success"]]
    costs = executed["realized_cost"].to_numpy()
    out = {
        "trials": len(group),
        "success_rate": float(group["success"].mean()),
        "mean_negated_reward": float(successes["negated_reward"].mean()) if len(successes) else np.nan,
        "expected_cost": float(costs.mean()) if costs.size else np.nan,
    }
    for level in CVAR_LEVELS:
        out[f"cvar_{level:g}"] = empirical_cvar(costs, level) if costs.size else np.nan
    out["violation_pct"] = 100.0 * float(executed["violated"].mean()) if len(executed) else np.nan
    return pd.Series(out)


def summarize(table: pd.DataFrame) -> pd.DataFrame:
    """Per-cell aggregates; reward is averaged over successful trials only."""
    if table.empty:
        return pd.DataFrame(columns=CELL_KEYS)
    grouped = table.sort_values(["trial"], kind="stable").groupby(CELL_KEYS, dropna=False, sort=True)
    return grouped.apply(_cell_summary, include_groups=False).reset_index()


def write_results(table: pd.DataFrame, summary: pd.DataFrame, output_dir: str) -> Tuple[str, str]:
    os.makedirs(output_dir, exist_ok=True)
    results_path = os.path.join(output_dir, "results.csv")
    summary_path = os.path.join(output_dir, "summary.csv")
    table.to_csv(results_path, index=False)
    summary.to_csv(summary_path, index=False)
    logger.info("Wrote %d rows to %s", len(table), results_path)
    return results_path, summary_path


def read_results_csv(path: str) -> pd.DataFrame:
    table = pd.read_csv(path)
    missing = [c for c in RESULT_COLUMNS if c not in table.columns]
    if missing:
        raise ConfigError(f"{path} is not a results table (missing {missing})")
    versions = set(table["schema_version"].unique())
    if versions - {SCHEMA_VERSION}:
        raise ConfigError(f"{path} has unsupported schema versions {sorted(versions)}")
    return table


def store_results(table: pd.DataFrame, cfg: ExperimentConfig, map_name: str, url: str) -> int:
    """Persist a trial table; returns the run id."""
    session_factory = init_db(url)
    with session_factory() as session:
        run = ExperimentRun(
            map_name=map_name,
            backend=cfg.backend,
            base_seed=cfg.base_seed,
            trials=cfg.trials,
            config_json=json.dumps(cfg.model_dump(mode="json"), sort_keys=True),
        )
        for row in table.to_dict(orient="records"):
            run.results.append(
                TrialResult(
                    trial=int(row["trial"]),
                    seed=int(row["seed"]),
                    algorithm=row["algorithm"],
                    K=float(row["K"]) if math.isfinite(row["K"]) else None,
                    alpha=float(row["alpha"]),
                    difficulty=None if pd.isna(row["difficulty"]) else float(row["difficulty"]),
                    planned=bool(row["planned"]),
                    success=bool(row["success"]),
                    steps=int(row["steps"]),
                    negated_reward=float(row["negated_reward"]),
                    realized_cost=float(row["realized_cost"]),
                    certificate_cvar=None if pd.isna(row["certificate_cvar"]) else float(row["certificate_cvar"]),
                    violated=bool(row["violated"]),
                )
            )
        session.add(run)
        session.commit()
        logger.info("Stored %d trial rows as run %d", len(table), run.id)
        return run.id
