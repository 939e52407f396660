"""Tabular categorical value iteration over (cell, goal-cell) pairs within eta.

For every free goal cell a square window of half-width ceil(eta / grid_res)
is solved with synchronous distributional Bellman sweeps:

* the target of a move into the goal is the point mass on the first atom,
* otherwise the successor distribution is shifted right by the move length
  in atoms (1 for orthogonal moves, sqrt(2) projected onto the two
  neighbouring atoms for diagonal ones), overflow pooling in the top atom.

The greedy policy takes the move with the smallest expected shift. Cost
distributions and the length of the final move are then obtained by
evaluating that policy. Goals are processed in batches; every array has
the goal batch as its leading axis.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from app.core.config import DEFAULTS
from app.core.dist_core import (
    CategoricalDist,
    kl_divergence_probs,
    make_dist,
    project_shift_probs,
    shift_probs,
    wasserstein_probs,
)
from app.core.errors import ConfigError, ConvergenceError
from app.services.grid_model import MOVE_STEPS, MOVES, GridModel, allowed_moves
from app.services.maze_service import MazeMap, cell_step_distribution
from app.services.value_backend import ValueBackend, hazard_cost_distribution

logger = logging.getLogger(__name__)

_LOWER = DEFAULTS["lower_level"]
# A pair whose value distribution keeps this much mass on the top atom is unreachable.
UNREACHABLE_TOP_MASS = 0.5


@dataclass(frozen=True)
class TabularConfig:
    eta: float = float(_LOWER["eta"])
    grid_res: float = float(_LOWER["grid_res"])
    cost_max: int = int(_LOWER["cost_max"])
    n_atoms: Optional[int] = None
    tolerance: float = float(_LOWER["tabular_tolerance"])
    max_sweeps: int = int(_LOWER["tabular_max_sweeps"])
    batch: int = int(_LOWER["tabular_batch"])

    def __post_init__(self) -> None:
        if self.eta <= 0 or self.grid_res <= 0:
            raise ConfigError("eta and grid_res must be positive")
        if self.cost_max < 0:
            raise ConfigError("cost_max must be non-negative")
        if self.max_sweeps < 1 or self.batch < 1:
            raise ConfigError("max_sweeps and batch must be positive")
        if self.reward_atoms - 1 <= self.half_width * math.sqrt(2):
            raise ConfigError(
                f"{self.reward_atoms} reward atoms cannot represent distances up to eta"
            )

    @property
    def half_width(self) -> int:
        return math.ceil(self.eta / self.grid_res - 1e-9)

    @property
    def reward_atoms(self) -> int:
        if self.n_atoms is not None:
            return int(self.n_atoms)
        return int(round(2.0 * self.eta / self.grid_res)) + 1


@dataclass
class GoalWindowSolution:
    """Converged sweep output for a batch of goal windows."""

    value_dists: np.ndarray  # (b, W, W, N) V^w per window cell
    policy: np.ndarray       # (b, W, W) move index, -1 where undefined
    reachable: np.ndarray    # (b, W, W)
    kl_trace: List[float]
    # max per-pair 1-Wasserstein change per sweep, in atoms
    w1_trace: List[float]


def _point_mass_rows(shape: Tuple[int, ...], n: int, index: int) -> np.ndarray:
    out = np.zeros(shape + (n,))
    out[..., index] = 1.0
    return out


def distributional_value_iteration(
    free_win: np.ndarray,
    n_atoms: int,
    tolerance: float,
    max_sweeps: int,
) -> GoalWindowSolution:
    """Solve goal-centered windows; ``free_win`` is (b, W, W) with the goal at the center."""
    b, width, _ = free_win.shape
    w = width // 2
    allowed = allowed_moves(free_win)
    allowed[:, :, w, w] = False
    e0 = np.zeros(n_atoms)
    e0[0] = 1.0
    atoms = np.arange(n_atoms, dtype=np.float64)

    z = _point_mass_rows((b, width, width), n_atoms, n_atoms - 1)
    z[:, w, w] = e0
    best_m = np.full((b, width, width), -1, dtype=np.int8)
    trace: List[float] = []
    w1: List[float] = []

    for sweep in range(1, max_sweeps + 1):
        padded = np.pad(z, ((0, 0), (1, 1), (1, 1), (0, 0)))
        z_new = _point_mass_rows((b, width, width), n_atoms, n_atoms - 1)
        best_e = np.full((b, width, width), np.inf)
        best_m = np.full((b, width, width), -1, dtype=np.int8)
        for m, (dx, dy) in enumerate(MOVES):
            successor = padded[:, 1 + dx:1 + dx + width, 1 + dy:1 + dy + width]
            q = project_shift_probs(successor, MOVE_STEPS[m])
            if 0 <= w - dx < width and 0 <= w - dy < width:
                q[:, w - dx, w - dy] = e0
            e = np.where(allowed[m], q @ atoms, np.inf)
            better = e < best_e - 1e-9
            best_e = np.where(better, e, best_e)
            best_m[better] = m
            z_new[better] = q[better]
        z_new[:, w, w] = e0
        kl = float(kl_divergence_probs(z_new, z).max())
        trace.append(kl)
        w1.append(float(wasserstein_probs(z_new, z).max()))
        z = z_new
        if kl < tolerance:
            break
    else:
        raise ConvergenceError(f"value iteration did not converge in {max_sweeps} sweeps")

    reachable = z[..., -1] < UNREACHABLE_TOP_MASS
    reachable[:, w, w] = True
    policy = np.where(reachable, best_m, -1).astype(np.int8)
    policy[:, w, w] = -1
    return GoalWindowSolution(
        value_dists=z, policy=policy, reachable=reachable, kl_trace=trace, w1_trace=w1
    )


def evaluate_policy(
    policy: np.ndarray,
    step_weights: np.ndarray,
    cost_atoms: int,
    max_sweeps: int,
) -> Tuple[np.ndarray, np.ndarray]:
    """Cost distribution and final-move length of following ``policy`` to the window center.

    ``step_weights`` is (b, W, W, K): the per-step cost distribution of a
    step ending in each cell. Returns ``(costs (b, W*W, cost_atoms),
    last_step (b, W*W))`` with the last step in grid units.
    """
    b, width, _ = policy.shape
    w = width // 2
    cells = width * width
    valid = (policy >= 0).reshape(b, cells)
    moves = np.where(policy >= 0, policy, 0).astype(np.int64)
    xs, ys = np.meshgrid(np.arange(width), np.arange(width), indexing="ij")
    nxt = (xs + MOVES[moves, 0]) * width + (ys + MOVES[moves, 1])
    nxt = np.where(policy >= 0, nxt, xs * width + ys).reshape(b, cells)
    into_goal = valid & (nxt == w * width + w)
    step_len = MOVE_STEPS[moves].reshape(b, cells)

    weights = step_weights.reshape(b, cells, -1)
    w_next = np.take_along_axis(weights, nxt[..., None], axis=1)
    active = [k for k in range(w_next.shape[-1]) if w_next[..., k].any()]

    costs = _point_mass_rows((b, cells), cost_atoms, 0)
    last = np.zeros((b, cells))
    for _ in range(max_sweeps):
        succ = np.take_along_axis(costs, nxt[..., None], axis=1)
        new = np.zeros_like(costs)
        for k in active:
            new += w_next[..., k, None] * shift_probs(succ, k)
        new[~valid] = costs[~valid]
        new_last = np.where(into_goal, step_len, np.where(valid, np.take_along_axis(last, nxt, axis=1), 0.0))
        if np.array_equal(new, costs) and np.array_equal(new_last, last):
            return costs, last
        costs, last = new, new_last
    raise ConvergenceError(f"policy evaluation did not converge in {max_sweeps} sweeps")


class TabularBackend(ValueBackend):
    """Lookup tables produced by ``train_tabular``.

    ``expected`` holds -V per (goal, window cell) as float32 (inf where the
    pair is unreachable inside the window); ``policy`` the greedy move index.
    Cost distributions that are not the point mass at zero are stored in a
    ragged layout keyed by ``goal * W * W + window cell``.
    """

    kind = "tabular"
    # the policy keeps to the cells the cost tables were evaluated on
    smooth_routes = False

    def __init__(
        self,
        maze: MazeMap,
        config: TabularConfig,
        goal_ids: np.ndarray,
        expected: np.ndarray,
        policy: np.ndarray,
        cost_keys: np.ndarray,
        cost_offsets: np.ndarray,
        cost_first: np.ndarray,
        cost_values: np.ndarray,
        kl_trace: np.ndarray,
        w1_trace: np.ndarray,
        grid: Optional[GridModel] = None,
    ) -> None:
        super().__init__(maze, grid or GridModel(maze, config.grid_res), config.eta, config.cost_max)
        self.config = config
        self.half_width = config.half_width
        self.width = 2 * self.half_width + 1
        self.goal_ids = goal_ids
        self.expected = expected
        self.policy = policy
        self.cost_keys = cost_keys
        self.cost_offsets = cost_offsets
        self.cost_first = cost_first
        self.cost_values = cost_values
        self.kl_trace = kl_trace
        self.w1_trace = w1_trace

    def _window(self, cell: int, target: int) -> Optional[Tuple[int, int, int]]:
        gid = int(self.goal_ids[target])
        if gid < 0:
            return None
        ix, iy = self.grid.cell_coords(cell)
        gx, gy = self.grid.cell_coords(target)
        ox, oy = ix - gx + self.half_width, iy - gy + self.half_width
        if not (0 <= ox < self.width and 0 <= oy < self.width):
            return None
        return gid, ox, oy

    def _cell_distance(self, source: int, target: int) -> float:
        slot = self._window(source, target)
        if slot is None:
            return math.inf
        return float(self.expected[slot])

    def _next_hop(self, cell: int, target: int) -> int:
        slot = self._window(cell, target)
        if slot is None:
            return -1
        m = int(self.policy[slot])
        return int(self.grid.neighbors[cell, m]) if m >= 0 else -1

    def _cell_cost(self, source: int, target: int, s: np.ndarray, t: np.ndarray) -> CategoricalDist:
        gid, ox, oy = self._window(source, target)
        key = gid * self.width * self.width + ox * self.width + oy
        i = int(np.searchsorted(self.cost_keys, key))
        if i == len(self.cost_keys) or self.cost_keys[i] != key:
            return hazard_cost_distribution([], [], self.cost_atoms)
        values = self.cost_values[self.cost_offsets[i]:self.cost_offsets[i + 1]].astype(np.float64)
        probs = np.zeros(self.cost_atoms)
        first = int(self.cost_first[i])
        probs[first:first + values.size] = values / values.sum()
        return make_dist(0.0, 1.0, probs)


def _step_weight_grid(maze: MazeMap, grid: GridModel) -> np.ndarray:
    """(nx, ny, K) per-cell distribution of the cost of a step ending in that cell."""
    per_cell = {}
    for cell in grid.free_cells():
        dist = cell_step_distribution(maze, grid.cell_center(cell))
        if dist is not None:
            per_cell[int(cell)] = dist.probs
    k = max([len(p) for p in per_cell.values()] + [1])
    weights = np.zeros((grid.nx, grid.ny, k))
    weights[..., 0] = 1.0
    for cell, probs in per_cell.items():
        ix, iy = grid.cell_coords(cell)
        weights[ix, iy] = 0.0
        weights[ix, iy, :len(probs)] = probs
    return weights


def train_tabular(maze: MazeMap, config: Optional[TabularConfig] = None) -> TabularBackend:
    """Run distributional value iteration for every free goal cell.

    Args:
        maze: map to train on.
        config: table sizes and solver limits; ``TabularConfig()`` when None.

    Returns:
        A TabularBackend holding expected distances, greedy moves, cost
        tables and the per-sweep KL and 1-Wasserstein traces.

    Raises:
        ConvergenceError: a batch did not converge within ``config.max_sweeps``.
    """
    config = config or TabularConfig()
    grid = GridModel(maze, config.grid_res)
    w = config.half_width
    width = 2 * w + 1
    n_atoms = config.reward_atoms
    cost_atoms = config.cost_max + 1

    goal_cells = grid.free_cells()
    goal_ids = np.full(grid.n_cells, -1, dtype=np.int64)
    goal_ids[goal_cells] = np.arange(goal_cells.size)

    free_windows = sliding_window_view(np.pad(grid.free, w, constant_values=False), (width, width))
    step_grid = _step_weight_grid(maze, grid)
    padded_steps = np.pad(step_grid, ((w, w), (w, w), (0, 0)))
    padded_steps[:w, :, 0] = 1.0
    padded_steps[-w:, :, 0] = 1.0
    padded_steps[:, :w, 0] = 1.0
    padded_steps[:, -w:, 0] = 1.0
    step_windows = sliding_window_view(padded_steps, (width, width), axis=(0, 1))

    expected = np.full((goal_cells.size, width, width), np.inf, dtype=np.float32)
    policy = np.full((goal_cells.size, width, width), -1, dtype=np.int8)
    keys: List[np.ndarray] = []
    firsts: List[np.ndarray] = []
    lengths: List[np.ndarray] = []
    values: List[np.ndarray] = []
    trace: List[float] = []
    w1_trace: List[float] = []

    n_batches = math.ceil(goal_cells.size / config.batch)
    logger.info(
        "Training tabular backend on %s: %d goals, window %d, %d atoms, %d batches",
        maze.name, goal_cells.size, width, n_atoms, n_batches,
    )
    for bi in range(n_batches):
        ids = np.arange(bi * config.batch, min((bi + 1) * config.batch, goal_cells.size))
        gx, gy = np.divmod(goal_cells[ids], grid.ny)
        solved = distributional_value_iteration(
            np.ascontiguousarray(free_windows[gx, gy]), n_atoms, config.tolerance, config.max_sweeps
        )
        weights = np.moveaxis(step_windows[gx, gy], 1, -1)
        costs, last = evaluate_policy(solved.policy, weights, cost_atoms, config.max_sweeps)

        mean_shift = solved.value_dists @ np.arange(n_atoms, dtype=np.float64)
        dist = (mean_shift + last.reshape(mean_shift.shape)) * config.grid_res
        dist[:, w, w] = 0.0
        expected[ids] = np.where(solved.reachable, dist, np.inf).astype(np.float32)
        policy[ids] = solved.policy

        nontrivial = (solved.policy.reshape(ids.size, -1) >= 0) & (costs[..., 0] < 1.0 - 1e-12)
        rows, flat = np.nonzero(nontrivial)
        if rows.size:
            block = costs[rows, flat]
            positive = block > 0
            lo = positive.argmax(axis=1)
            hi = cost_atoms - positive[:, ::-1].argmax(axis=1)
            atom_index = np.arange(cost_atoms)
            keep = (atom_index >= lo[:, None]) & (atom_index < hi[:, None])
            keys.append(ids[rows].astype(np.int64) * width * width + flat)
            firsts.append(lo.astype(np.int16))
            lengths.append((hi - lo).astype(np.int64))
            values.append(block[keep].astype(np.float32))

        if len(solved.kl_trace) > len(trace):
            trace.extend([0.0] * (len(solved.kl_trace) - len(trace)))
        for i, kl in enumerate(solved.kl_trace):
            trace[i] = max(trace[i], kl)
        if len(solved.w1_trace) > len(w1_trace):
            w1_trace.extend([0.0] * (len(solved.w1_trace) - len(w1_trace)))
        for i, moved in enumerate(solved.w1_trace):
            w1_trace[i] = max(w1_trace[i], moved)
        if (bi + 1) % max(1, n_batches // 10) == 0 or bi + 1 == n_batches:
            logger.info("Batch %d/%d done (%d sweeps)", bi + 1, n_batches, len(solved.kl_trace))

    all_lengths = np.concatenate(lengths) if lengths else np.zeros(0, dtype=np.int64)
    offsets = np.concatenate([[0], np.cumsum(all_lengths)]).astype(np.int64)
    logger.info("Stored %d non-trivial cost distributions", all_lengths.size)
    return TabularBackend(
        maze,
        config,
        goal_ids=goal_ids,
        expected=expected,
        policy=policy,
        cost_keys=np.concatenate(keys) if keys else np.zeros(0, dtype=np.int64),
        cost_offsets=offsets,
        cost_first=np.concatenate(firsts) if firsts else np.zeros(0, dtype=np.int16),
        cost_values=np.concatenate(values) if values else np.zeros(0, dtype=np.float32),
        kl_trace=np.array(trace),
        w1_trace=np.array(w1_trace),
        grid=grid,
    )


def solve_goal(grid: GridModel, goal_cell: int, config: TabularConfig) -> GoalWindowSolution:
    """Value iteration for a single goal window (batch of one)."""
    w = config.half_width
    width = 2 * w + 1
    gx, gy = grid.cell_coords(goal_cell)
    windows = sliding_window_view(np.pad(grid.free, w, constant_values=False), (width, width))
    return distributional_value_iteration(
        np.ascontiguousarray(windows[gx, gy][None]),
        config.reward_atoms,
        config.tolerance,
        config.max_sweeps,
    )
