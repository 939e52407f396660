"""Occupancy grid over a maze: 8-connected moves, Dijkstra distance fields."""
from __future__ import annotations

import logging
import math
from collections import OrderedDict
from typing import Sequence, Tuple

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components, dijkstra

from app.core.errors import UnreachableError
from app.services.maze_service import MazeMap

logger = logging.getLogger(__name__)

# Orthogonal moves first so ties resolve toward them.
MOVES = np.array(
    [(1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (1, -1), (-1, 1), (-1, -1)],
    dtype=np.int64,
)
MOVE_STEPS = np.array([1.0, 1.0, 1.0, 1.0, math.sqrt(2), math.sqrt(2), math.sqrt(2), math.sqrt(2)])


def blocked_cells(maze: MazeMap, grid_res: float) -> np.ndarray:
    """Boolean (nx, ny) array; a cell is blocked when a wall overlaps it with positive area."""
    x0, y0, _, _ = maze.bounds
    nx = max(1, math.ceil(maze.width / grid_res - 1e-9))
    ny = max(1, math.ceil(maze.height / grid_res - 1e-9))
    cx0 = x0 + grid_res * np.arange(nx)
    cy0 = y0 + grid_res * np.arange(ny)
    lo_x, lo_y = np.meshgrid(cx0, cy0, indexing="ij")
    hi_x, hi_y = lo_x + grid_res, lo_y + grid_res
    blocked = np.zeros((nx, ny), dtype=bool)
    for wx0, wy0, wx1, wy1 in maze.walls:
        blocked |= (wx0 < hi_x) & (wx1 > lo_x) & (wy0 < hi_y) & (wy1 > lo_y)
    return blocked


def allowed_moves(free: np.ndarray) -> np.ndarray:
    """(8, *free.shape) mask of moves that stay on free cells without cutting corners.

    The last two axes of ``free`` are the grid; leading axes are batch axes.
    Cells outside the array count as blocked.
    """
    nx, ny = free.shape[-2:]
    pad = [(0, 0)] * (free.ndim - 2) + [(1, 1), (1, 1)]
    padded = np.pad(free, pad, constant_values=False)
    allowed = np.empty((len(MOVES),) + free.shape, dtype=bool)
    for m, (dx, dy) in enumerate(MOVES):
        ok = free & padded[..., 1 + dx:1 + dx + nx, 1 + dy:1 + dy + ny]
        if dx and dy:
            ok &= padded[..., 1 + dx:1 + dx + nx, 1:1 + ny]
            ok &= padded[..., 1:1 + nx, 1 + dy:1 + dy + ny]
        allowed[m] = ok
    return allowed


class GridModel:
    """Discrete MDP under the value backends.

    Cells are indexed ``ix * ny + iy``. A diagonal move is allowed only when
    both orthogonal neighbours it passes are free (no corner cutting).
    """

    def __init__(self, maze: MazeMap, grid_res: float, field_cache_size: int = 4096) -> None:
        if grid_res <= 0:
            raise ValueError("grid_res must be positive")
        self.maze = maze
        self.grid_res = float(grid_res)
        self.blocked = blocked_cells(maze, self.grid_res)
        self.nx, self.ny = self.blocked.shape
        self.n_cells = self.nx * self.ny
        self.free = ~self.blocked
        self.neighbors = self._build_neighbors()
        self.graph = self._build_graph()
        _, self.components = connected_components(self.graph, directed=False)
        self._field_cache: "OrderedDict[Tuple[int, float], np.ndarray]" = OrderedDict()
        self._field_cache_size = field_cache_size
        logger.debug(
            "Grid for %s: %dx%d cells at res %.3g, %d free",
            maze.name, self.nx, self.ny, self.grid_res, int(self.free.sum()),
        )

    # -- structure ---------------------------------------------------------

    def _free_at(self, ix: np.ndarray, iy: np.ndarray) -> np.ndarray:
        inside = (ix >= 0) & (ix < self.nx) & (iy >= 0) & (iy < self.ny)
        out = np.zeros(ix.shape, dtype=bool)
        out[inside] = self.free[ix[inside], iy[inside]]
        return out

    def _build_neighbors(self) -> np.ndarray:
        """(n_cells, 8) neighbour cell index per move, -1 when the move is not allowed."""
        allowed = allowed_moves(self.free)
        ix, iy = np.meshgrid(np.arange(self.nx), np.arange(self.ny), indexing="ij")
        nbrs = np.full((self.n_cells, len(MOVES)), -1, dtype=np.int64)
        for m, (dx, dy) in enumerate(MOVES):
            target = (ix + dx) * self.ny + (iy + dy)
            nbrs[:, m] = np.where(allowed[m], target, -1).ravel()
        return nbrs

    def _build_graph(self) -> csr_matrix:
        rows, moves = np.nonzero(self.neighbors >= 0)
        cols = self.neighbors[rows, moves]
        weights = MOVE_STEPS[moves] * self.grid_res
        return csr_matrix((weights, (rows, cols)), shape=(self.n_cells, self.n_cells))

    # -- points and cells ---------------------------------------------------

    def cell_coords(self, cell: int) -> Tuple[int, int]:
        return divmod(int(cell), self.ny)

    def cell_center(self, cell: int) -> np.ndarray:
        ix, iy = self.cell_coords(cell)
        x0, y0 = self.maze.bounds[0], self.maze.bounds[1]
        return np.array([x0 + (ix + 0.5) * self.grid_res, y0 + (iy + 0.5) * self.grid_res])

    def cell_index(self, p: Sequence[float]) -> int:
        """Cell containing ``p``, snapped to the nearest free 8-neighbour when blocked."""
        x0, y0 = self.maze.bounds[0], self.maze.bounds[1]
        ix = min(max(int(math.floor((p[0] - x0) / self.grid_res)), 0), self.nx - 1)
        iy = min(max(int(math.floor((p[1] - y0) / self.grid_res)), 0), self.ny - 1)
        if self.free[ix, iy]:
            return ix * self.ny + iy
        best, best_d = -1, math.inf
        for dx, dy in MOVES:
            jx, jy = ix + dx, iy + dy
            if 0 <= jx < self.nx and 0 <= jy < self.ny and self.free[jx, jy]:
                center = self.cell_center(jx * self.ny + jy)
                d = math.hypot(center[0] - p[0], center[1] - p[1])
                if d < best_d:
                    best, best_d = jx * self.ny + jy, d
        if best < 0:
            raise UnreachableError(f"point {tuple(p)} has no free grid cell nearby")
        return best

    def connected(self, a: int, b: int) -> bool:
        return bool(self.components[a] == self.components[b])

    def free_cells(self) -> np.ndarray:
        return np.flatnonzero(self.free.ravel())

    # -- distances ----------------------------------------------------------

    def distance_field(self, target: int, limit: float = np.inf) -> np.ndarray:
        """Grid distance from every cell to ``target`` (inf beyond ``limit``)."""
        key = (int(target), float(limit))
        field = self._field_cache.get(key)
        if field is not None:
            self._field_cache.move_to_end(key)
            return field
        field = dijkstra(self.graph, directed=False, indices=int(target), limit=limit)
        field.setflags(write=False)
        self._field_cache[key] = field
        if len(self._field_cache) > self._field_cache_size:
            self._field_cache.popitem(last=False)
        return field

    def next_hop(self, cell: int, field: np.ndarray) -> int:
        """Greedy descent step on a distance field; -1 at the field's source."""
        if field[cell] == 0.0:
            return -1
        nbrs = self.neighbors[cell]
        ok = nbrs >= 0
        if not ok.any():
            return -1
        scores = np.full(len(MOVES), np.inf)
        scores[ok] = MOVE_STEPS[ok] * self.grid_res + field[nbrs[ok]]
        m = int(np.argmin(scores))
        return int(nbrs[m]) if np.isfinite(scores[m]) else -1
