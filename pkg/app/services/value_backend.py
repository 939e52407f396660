"""Goal-conditioned local value interface shared by the oracle and tabular backends.

A backend answers three questions for nearby pairs of points:

* ``value(s, t)``: expected reward of reaching ``t`` from ``s`` (always <= 0;
  its negation is a path-length estimate),
* ``cost_dist(s, t)``: distribution of the cost collected on the way,
* ``local_policy(s, g)``: the next action toward ``g``, taken along
  ``route(s, g)``, the polyline the cost distribution describes.

Queries farther apart than the locality radius ``eta`` raise
``LocalityError``; pairs in different connected components raise
``UnreachableError``.
"""
from __future__ import annotations

import logging
import math
from abc import ABC, abstractmethod
from typing import Dict, List, Sequence, Tuple

import numpy as np

from app.core.dist_core import CategoricalDist, convolve, convolve_power, point_mass
from app.core.errors import LocalityError, UnreachableError
from app.services.grid_model import GridModel
from app.services.maze_service import MazeMap, clip_action, segment_collides

logger = logging.getLogger(__name__)

# Descent chains longer than this many cells per unit of eta are treated as broken.
CHAIN_HOPS_PER_ETA = 4


def hazard_cost_distribution(
    counts: Sequence[int],
    step_dists: Sequence[CategoricalDist],
    n_atoms: int,
) -> CategoricalDist:
    """Total cost of ``counts[h]`` independent steps in each hazard ``h``."""
    result = point_mass(0.0, 1.0, n_atoms=n_atoms)
    for count, step in zip(counts, step_dists):
        if count:
            result = convolve(result, convolve_power(step, int(count), n_atoms), n_atoms)
    return result


class ValueBackend(ABC):
    """Base class; subclasses supply cell-level distance, next hop and cost."""

    kind: str = ""
    # Cut straight across the descent chain wherever the line of sight allows.
    smooth_routes: bool = True

    def __init__(self, maze: MazeMap, grid: GridModel, eta: float, cost_max: int) -> None:
        if eta <= 0:
            raise ValueError("locality radius eta must be positive")
        self.maze = maze
        self.grid = grid
        self.eta = float(eta)
        self.cost_max = int(cost_max)

    @property
    def grid_res(self) -> float:
        return self.grid.grid_res

    @property
    def cost_atoms(self) -> int:
        return self.cost_max + 1

    @property
    def reward_support(self) -> Tuple[float, float, int]:
        """(v_min, delta, n_atoms) of reward distributions over [-2*eta, 0]."""
        n_atoms = int(round(2.0 * self.eta / self.grid_res)) + 1
        return -self.grid_res * (n_atoms - 1), self.grid_res, n_atoms

    @property
    def cost_support(self) -> Tuple[float, float, int]:
        return 0.0, 1.0, self.cost_atoms

    def describe(self) -> Dict[str, object]:
        return {
            "kind": self.kind,
            "map": self.maze.name,
            "grid_res": self.grid_res,
            "eta": self.eta,
            "cost_max": self.cost_max,
        }

    # -- subclass hooks -------------------------------------------------------

    @abstractmethod
    def _cell_distance(self, source: int, target: int) -> float:
        """Path-length estimate between cells; inf when unknown within locality."""

    @abstractmethod
    def _next_hop(self, cell: int, target: int) -> int:
        """Greedy next cell toward ``target``; -1 when none."""

    @abstractmethod
    def _cell_cost(self, source: int, target: int, s: np.ndarray, t: np.ndarray) -> CategoricalDist:
        """Cost distribution of the greedy route between two distinct cells."""

    # -- queries ----------------------------------------------------------------

    def _cells(self, s: Sequence[float], t: Sequence[float]) -> Tuple[int, int]:
        return self.grid.cell_index(s), self.grid.cell_index(t)

    def _checked_distance(self, source: int, target: int) -> float:
        if source == target:
            return 0.0
        d = self._cell_distance(source, target)
        if math.isfinite(d) and d <= self.eta:
            return d
        if not self.grid.connected(source, target):
            raise UnreachableError(f"cells {source} and {target} are not connected")
        raise LocalityError(f"pair is beyond the locality radius {self.eta:g}")

    def distance(self, s: Sequence[float], t: Sequence[float]) -> float:
        """-V(s, t)."""
        source, target = self._cells(s, t)
        return self._checked_distance(source, target)

    def value(self, s: Sequence[float], t: Sequence[float]) -> float:
        return -self.distance(s, t)

    def distances_from(self, s: Sequence[float], points: Sequence[Sequence[float]]) -> np.ndarray:
        """-V(s, p) for each point; inf where the query is non-local or unreachable."""
        out = np.full(len(points), np.inf)
        for i, p in enumerate(points):
            try:
                out[i] = self.distance(s, p)
            except (LocalityError, UnreachableError):
                pass
        return out

    def cost_dist(self, s: Sequence[float], t: Sequence[float]) -> CategoricalDist:
        source, target = self._cells(s, t)
        self._checked_distance(source, target)
        if source == target:
            return point_mass(0.0, 1.0, n_atoms=self.cost_atoms)
        return self._cell_cost(source, target, np.asarray(s, float), np.asarray(t, float))

    def _descent(self, source: int, target: int) -> List[int]:
        """Greedy next-hop chain from ``source``; stops early when the chain breaks."""
        cells = [source]
        budget = CHAIN_HOPS_PER_ETA * math.ceil(self.eta / self.grid_res) + 1
        while cells[-1] != target and len(cells) <= budget:
            nxt = self._next_hop(cells[-1], target)
            if nxt < 0:
                break
            cells.append(nxt)
        return cells

    def _route(self, source: int, target: int, s: np.ndarray, t: np.ndarray) -> List[np.ndarray]:
        if source == target:
            return [s, t]
        if self.smooth_routes and not segment_collides(self.maze, s, t):
            return [s, t]
        cells = self._descent(source, target)
        if cells[-1] != target:
            logger.debug("Descent from cell %d toward %d broke after %d hops", source, target, len(cells) - 1)
            return [s, self.grid.cell_center(cells[1])] if len(cells) > 1 else [s, t]
        points = [self.grid.cell_center(c) for c in cells[1:-1]] + [t]
        if not self.smooth_routes:
            return [s] + points
        # string-pull: from each vertex jump to the farthest visible chain point
        route, i = [s], 0
        while True:
            j = len(points) - 1
            while j > i and segment_collides(self.maze, route[-1], points[j]):
                j -= 1
            route.append(points[j])
            if j == len(points) - 1:
                return route
            i = j + 1

    def route(self, s: Sequence[float], t: Sequence[float]) -> List[np.ndarray]:
        """Polyline the local policy drives from ``s`` to ``t``; ``cost_dist`` is scored on it."""
        s = np.asarray(s, dtype=np.float64)
        t = np.asarray(t, dtype=np.float64)
        source, target = self._cells(s, t)
        self._checked_distance(source, target)
        return self._route(source, target, s, t)

    def local_policy(self, s: Sequence[float], g: Sequence[float]) -> np.ndarray:
        """Greedy action toward ``g``: head for the next vertex of the drive route."""
        s = np.asarray(s, dtype=np.float64)
        g = np.asarray(g, dtype=np.float64)
        if math.hypot(*(g - s)) <= self.maze.goal_tolerance:
            return np.zeros(2)
        route = self.route(s, g)
        return clip_action(self.maze, route[1] - s)


def value(backend: ValueBackend, s: Sequence[float], t: Sequence[float]) -> float:
    return backend.value(s, t)


def distance(backend: ValueBackend, s: Sequence[float], t: Sequence[float]) -> float:
    return backend.distance(s, t)


def cost_dist(backend: ValueBackend, s: Sequence[float], t: Sequence[float]) -> CategoricalDist:
    return backend.cost_dist(s, t)


def local_policy(backend: ValueBackend, s: Sequence[float], g: Sequence[float]) -> np.ndarray:
    return backend.local_policy(s, g)
