"""Start/goal protocols for evaluation episodes."""
from __future__ import annotations

import logging
from functools import lru_cache
from typing import Tuple

import numpy as np

from app.core.config import DEFAULTS, get_settings, horizon_for
from app.core.errors import MapError, SamplingError
from app.services.grid_model import GridModel
from app.services.maze_service import MazeMap, sample_free

logger = logging.getLogger(__name__)

GOAL_DISTANCE_BASE = float(DEFAULTS["goal_distance_base"])
GOAL_DISTANCE_TOL = float(DEFAULTS["goal_distance_tolerance"])
START_RESAMPLE_BUDGET = int(DEFAULTS["start_resample_budget"])
ROOM_PROTOCOL_HORIZON = int(DEFAULTS["room_protocol_horizon"])

__all__ = [
    "horizon_for",
    "sample_start_goal",
    "sample_region_start_goal",
    "target_separation",
]


@lru_cache(maxsize=8)
def _grid_for(maze: MazeMap, grid_res: float) -> GridModel:
    return GridModel(maze, grid_res)


def target_separation(difficulty: float) -> float:
    return GOAL_DISTANCE_BASE * difficulty


def sample_start_goal(
    maze: MazeMap,
    difficulty: float,
    seed: int,
    grid: GridModel | None = None,
) -> Tuple[np.ndarray, np.ndarray]:
    """Start uniform in S_free; goal at shortest-path distance 69*difficulty (within 2%).

    Separation is measured on the oracle's grid metric; the goal is the
    center of a qualifying free cell.

    Raises:
        SamplingError: no start with a qualifying goal within the resample budget.
    """
    if not 0.0 < difficulty <= 1.0:
        raise ValueError(f"difficulty must lie in (0, 1], got {difficulty}")
    grid = grid or _grid_for(maze, get_settings().grid_res)
    rng = np.random.default_rng(seed)
    target = target_separation(difficulty)
    lo, hi = target * (1.0 - GOAL_DISTANCE_TOL), target * (1.0 + GOAL_DISTANCE_TOL)

    for attempt in range(START_RESAMPLE_BUDGET):
        start = sample_free(maze, rng)
        field = grid.distance_field(grid.cell_index(start))
        candidates = np.flatnonzero((field >= lo) & (field <= hi))
        if candidates.size:
            goal = grid.cell_center(int(candidates[rng.integers(candidates.size)]))
            logger.debug(
                "Start/goal for difficulty %.2f after %d resamples: separation %.2f",
                difficulty, attempt, float(field[grid.cell_index(goal)]),
            )
            return start, goal
    raise SamplingError(
        f"no goal at distance {target:.1f} found after {START_RESAMPLE_BUDGET} start draws"
    )


def sample_region_start_goal(maze: MazeMap, seed: int) -> Tuple[np.ndarray, np.ndarray]:
    """Start uniform in the map's start region, goal uniform in its goal region."""
    if maze.start_region is None or maze.goal_region is None:
        raise MapError(f"map {maze.name!r} does not define start and goal regions")
    rng = np.random.default_rng(seed)
    start = sample_free(maze, rng, region=maze.start_region)
    goal = sample_free(maze, rng, region=maze.goal_region)
    return start, goal
