"""Execute a planned path in the environment with the lower-level greedy policy."""
from __future__ import annotations

import logging
import math
import os
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from app.core.config import DEFAULTS
from app.core.errors import LocalityError, UnreachableError
from app.services.maze_service import MazeMap, clip_action, reset_episode, step
from app.services.planner_service import PathSolution
from app.services.value_backend import ValueBackend

logger = logging.getLogger(__name__)

STALL_FACTOR = DEFAULTS["executor"]["stall_factor"]


@dataclass
class TrajectoryRecord:
    success: bool
    steps: int
    realized_cost: float
    seed: int
    stalled: bool = False
    waypoints_reached: int = 0
    # (position, reward, cost) per step
    log: List[Tuple[Tuple[float, float], float, float]] = field(default_factory=list)
    config: Dict[str, Any] = field(default_factory=dict)

    @property
    def negated_reward(self) -> float:
        return float(self.steps)


def _gap(a: Sequence[float], b: Sequence[float]) -> float:
    return math.hypot(a[0] - b[0], a[1] - b[1])


def _action_toward(backend: ValueBackend, maze: MazeMap, position: np.ndarray, target: np.ndarray) -> np.ndarray:
    try:
        return backend.local_policy(position, target)
    except (LocalityError, UnreachableError):
        return clip_action(maze, target - position)


def execute(
    maze: MazeMap,
    backend: ValueBackend,
    path: PathSolution,
    T: int,
    seed: int,
    goal: Optional[Sequence[float]] = None,
    record_log: bool = True,
) -> TrajectoryRecord:
    """Follow ``path`` waypoint by waypoint for at most ``T`` steps.

    The episode starts at the first waypoint and succeeds on reaching
    ``goal`` (default: the last waypoint). A waypoint counts as reached
    within the map's goal tolerance. The run aborts as a failure when the
    distance to the current waypoint has not improved for
    ``STALL_FACTOR * eta`` steps.

    Args:
        maze: map the episode runs on.
        backend: supplies the local policy between waypoints.
        path: planned waypoints; the first one is the start state.
        T: step horizon.
        seed: seeds the stochastic hazard costs.
        goal: success target, when it differs from the last waypoint.
        record_log: keep the per-step (position, reward, cost) log.

    Returns:
        TrajectoryRecord with success, step count and realized cost.
    """
    start = np.asarray(path.waypoints[0], dtype=np.float64)
    goal = np.asarray(goal if goal is not None else path.waypoints[-1], dtype=np.float64)
    targets = [np.asarray(w, dtype=np.float64) for w in path.waypoints[1:]] + [goal]
    tol = maze.goal_tolerance
    stall_limit = math.ceil(STALL_FACTOR * backend.eta)
    config = {"T": int(T), "waypoints": len(path.waypoints), "stall_limit": stall_limit}

    record = TrajectoryRecord(success=False, steps=0, realized_cost=0.0, seed=seed, config=config)
    if _gap(start, goal) <= tol:
        record.success = True
        return record

    state = reset_episode(maze, start, goal, T, seed)
    k = 0
    best_gap, since_best = math.inf, 0
    while True:
        position = np.asarray(state.position)
        while k < len(targets) - 1 and _gap(position, targets[k]) <= tol:
            k += 1
            best_gap, since_best = math.inf, 0
        action = _action_toward(backend, maze, position, targets[k])
        state, reward, cost, done = step(state, maze, action)
        record.steps += 1
        record.realized_cost += cost
        if record_log:
            record.log.append((state.position, reward, cost))
        if done:
            break
        gap = _gap(state.position, targets[k])
        if gap < best_gap - 1e-9:
            best_gap, since_best = gap, 0
        else:
            since_best += 1
        if since_best >= stall_limit:
            record.stalled = True
            logger.debug("Stalled at %s toward waypoint %d after %d steps", state.position, k, record.steps)
            break

    record.success = _gap(state.position, goal) <= tol
    record.waypoints_reached = len(targets) if record.success else k
    return record


def execute_direct(
    maze: MazeMap,
    backend: ValueBackend,
    start: Sequence[float],
    goal: Sequence[float],
    T: int,
    seed: int,
    record_log: bool = True,
) -> TrajectoryRecord:
    """Goal-conditioned policy toward the global goal with no planner.

    Beyond the locality radius the policy aims at an intermediate point
    ``eta / 2`` along the straight line to the goal; if that is not usable
    either, it moves straight toward the goal.

    Returns:
        TrajectoryRecord of the episode (no waypoints, so ``waypoints_reached`` stays 0).
    """
    start = np.asarray(start, dtype=np.float64)
    goal = np.asarray(goal, dtype=np.float64)
    record = TrajectoryRecord(success=False, steps=0, realized_cost=0.0, seed=seed, config={"T": int(T)})
    if _gap(start, goal) <= maze.goal_tolerance:
        record.success = True
        return record

    state = reset_episode(maze, start, goal, T, seed)
    done = False
    while not done:
        position = np.asarray(state.position)
        action = _direct_action(backend, maze, position, goal)
        state, reward, cost, done = step(state, maze, action)
        record.steps += 1
        record.realized_cost += cost
        if record_log:
            record.log.append((state.position, reward, cost))
    record.success = _gap(state.position, goal) <= maze.goal_tolerance
    return record


def _direct_action(backend: ValueBackend, maze: MazeMap, position: np.ndarray, goal: np.ndarray) -> np.ndarray:
    gap = _gap(position, goal)
    if gap <= backend.eta:
        try:
            return backend.local_policy(position, goal)
        except (LocalityError, UnreachableError):
            pass
    subgoal = position + (goal - position) * min(1.0, 0.5 * backend.eta / gap)
    return _action_toward(backend, maze, position, subgoal)


def write_trace(record: TrajectoryRecord, path: str) -> None:
    """Per-step trace as CSV: step, x, y, reward, cost."""
    frame = pd.DataFrame(
        [
            {"step": i + 1, "x": pos[0], "y": pos[1], "reward": reward, "cost": cost}
            for i, (pos, reward, cost) in enumerate(record.log)
        ],
        columns=["step", "x", "y", "reward", "cost"],
    )
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    frame.to_csv(path, index=False)
