"""Exact grid oracle: Dijkstra distances and hazard-count cost distributions."""
from __future__ import annotations

import logging
from typing import Optional, Sequence

import numpy as np

from app.core.config import get_settings
from app.core.dist_core import CategoricalDist
from app.core.errors import UnreachableError
from app.services.grid_model import GridModel
from app.services.maze_service import MazeMap, polyline_hazard_steps
from app.services.value_backend import ValueBackend, hazard_cost_distribution

logger = logging.getLogger(__name__)


class OracleBackend(ValueBackend):
    """-V is the 8-connected grid geodesic between the cells of the two points.

    V_c is the distribution of hazard costs collected along the drive route
    (the line of sight, or the descent chain pulled taut around walls),
    discretized into steps of the map's ``step_len``. The local policy
    follows the same route.
    """

    kind = "oracle"

    def __init__(self, maze: MazeMap, grid_res: float, eta: float, cost_max: int) -> None:
        super().__init__(maze, GridModel(maze, grid_res), eta, cost_max)
        # Dijkstra stops expanding past this radius; farther cells read as inf.
        self._limit = self.eta + self.grid_res
        self._step_dists = [h.cost.step_distribution() for h in maze.hazards]

    def _field(self, target: int) -> np.ndarray:
        return self.grid.distance_field(target, self._limit)

    def _cell_distance(self, source: int, target: int) -> float:
        return float(self._field(target)[source])

    def distances_from(self, s: Sequence[float], points: Sequence[Sequence[float]]) -> np.ndarray:
        # The grid metric is symmetric, so one field rooted at s answers every query.
        out = np.full(len(points), np.inf)
        try:
            source = self.grid.cell_index(s)
        except UnreachableError:
            return out
        field = self._field(source)
        for i, p in enumerate(points):
            try:
                cell = self.grid.cell_index(p)
            except UnreachableError:
                continue
            d = 0.0 if cell == source else float(field[cell])
            if d <= self.eta:
                out[i] = d
        return out

    def _next_hop(self, cell: int, target: int) -> int:
        return self.grid.next_hop(cell, self._field(target))

    def _cell_cost(self, source: int, target: int, s: np.ndarray, t: np.ndarray) -> CategoricalDist:
        if not self.maze.hazards:
            return hazard_cost_distribution([], [], self.cost_atoms)
        points = self._route(source, target, s, t)
        counts = polyline_hazard_steps(self.maze, points, self.maze.step_len)
        return hazard_cost_distribution(counts, self._step_dists, self.cost_atoms)


def build_oracle(
    maze: MazeMap,
    grid_res: Optional[float] = None,
    eta: Optional[float] = None,
    cost_max: Optional[int] = None,
) -> OracleBackend:
    settings = get_settings()
    backend = OracleBackend(
        maze,
        grid_res if grid_res is not None else settings.grid_res,
        eta if eta is not None else settings.eta,
        cost_max if cost_max is not None else settings.cost_max,
    )
    logger.info("Built oracle backend for %s (res %.3g, eta %.3g)", maze.name, backend.grid_res, backend.eta)
    return backend
