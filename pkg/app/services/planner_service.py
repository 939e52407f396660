"""Constrained Informed RRT* on top of a local value backend.

The tree grows in the plane. Edge rewards and edge cost distributions come
from the backend, and an edge is admitted only when the CVaR of the
cumulative cost from the root (the convolution of every edge cost on the
way) stays within the budget ``K``. With ``K = inf`` the planner is plain
Informed RRT* under the backend metric.
"""
from __future__ import annotations

import json
import logging
import math
import os
from collections import Counter
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import gamma as gamma_fn

from app.core.config import DEFAULTS, get_settings
from app.core.dist_core import CategoricalDist, convolve, cvar_alpha, point_mass
from app.core.errors import ConfigError, LocalityError, MapError, TreeInvariantError, UnreachableError
from app.services.maze_service import MazeMap, free_area, point_is_free, sample_free, segment_collides
from app.services.spatial_index import SpatialIndex
from app.services.value_backend import ValueBackend

logger = logging.getLogger(__name__)

_PLANNER = DEFAULTS["planner"]

ROOT = 0
# Path rewards closer than this are treated as equal.
REWARD_EPS = 1e-9


@dataclass(frozen=True)
class PlannerConfig:
    K: float = math.inf
    alpha: float = 1.0
    iterations: int = _PLANNER["iterations"]
    # Steering cap; the backend's locality radius when unset.
    eta: Optional[float] = None
    # Rewiring constant; gamma_margin times the lower bound when unset.
    gamma_rrt: Optional[float] = None
    # Goal disk radius; the map's goal_tolerance when unset.
    goal_radius: Optional[float] = None
    seed: int = 0
    # chance of sampling s_G outright; off unless a caller opts in
    goal_bias: float = _PLANNER["goal_bias"]
    gamma_margin: float = _PLANNER["gamma_margin"]
    nearest_candidates: int = _PLANNER["nearest_candidates"]
    steer_bisection_steps: int = _PLANNER["steer_bisection_steps"]
    informed_rejection_budget: int = _PLANNER["informed_rejection_budget"]
    cost_atoms: Optional[int] = None
    kd_rebuild_every: Optional[int] = None
    debug: bool = False

    def __post_init__(self) -> None:
        if not self.K >= 0:
            raise ConfigError(f"cost limit K must be non-negative, got {self.K!r}")
        if not 0.0 < self.alpha <= 1.0:
            raise ConfigError(f"alpha must lie in (0, 1], got {self.alpha!r}")
        if self.iterations < 1:
            raise ConfigError("iterations must be positive")
        for name in ("eta", "gamma_rrt", "goal_radius"):
            value = getattr(self, name)
            if value is not None and not value > 0:
                raise ConfigError(f"{name} must be positive, got {value!r}")
        if not 0.0 <= self.goal_bias < 1.0:
            raise ConfigError("goal_bias must lie in [0, 1)")
        if self.gamma_margin < 1.0:
            raise ConfigError("gamma_margin below 1 puts gamma under its lower bound")
        if min(self.nearest_candidates, self.steer_bisection_steps, self.informed_rejection_budget) < 1:
            raise ConfigError("candidate counts and budgets must be positive")
        if self.cost_atoms is not None and self.cost_atoms < 2:
            raise ConfigError("cost_atoms must be at least 2")

    @property
    def constrained(self) -> bool:
        return math.isfinite(self.K)


@dataclass(frozen=True, eq=False)
class PathSolution:
    """A waypoint path with its summed reward and cost distribution."""

    waypoints: Tuple[Tuple[float, float], ...]
    reward: float
    cost: CategoricalDist
    cvar_certificate: float
    alpha: float
    K: float = math.inf
    iteration: int = 0

    @property
    def length(self) -> float:
        return -self.reward

    @property
    def feasible(self) -> bool:
        return self.cvar_certificate <= self.K

    def to_record(self) -> Dict[str, Any]:
        return {
            "waypoints": [[x, y] for x, y in self.waypoints],
            "R_sigma": self.reward,
            "cost_dist": self.cost.to_record(),
            "cvar": self.cvar_certificate,
            "alpha": self.alpha,
            "K": self.K if math.isfinite(self.K) else None,
        }


def path_solution(
    backend: ValueBackend,
    waypoints: Sequence[Sequence[float]],
    alpha: float = 1.0,
    K: float = math.inf,
    cost_atoms: Optional[int] = None,
    iteration: int = 0,
) -> PathSolution:
    """Aggregate reward and cost along a waypoint sequence.

    The reward is the sum of edge values and the cost is the convolution of
    the edge cost distributions, clamped to ``cost_atoms`` atoms. ``K`` is
    recorded, not enforced.

    Raises:
        LocalityError, UnreachableError: a consecutive pair is not local.
    """
    if len(waypoints) == 0:
        raise ConfigError("a path needs at least one waypoint")
    cost_atoms = cost_atoms or get_settings().cost_atoms
    points = [np.asarray(w, dtype=np.float64) for w in waypoints]
    reward = 0.0
    cost = point_mass(0.0, 1.0, n_atoms=cost_atoms)
    for a, b in zip(points[:-1], points[1:]):
        reward += backend.value(a, b)
        cost = convolve(cost, backend.cost_dist(a, b), cost_atoms)
    return PathSolution(
        waypoints=tuple((float(p[0]), float(p[1])) for p in points),
        reward=reward,
        cost=cost,
        cvar_certificate=cvar_alpha(cost, alpha),
        alpha=alpha,
        K=K,
        iteration=iteration,
    )


class PlanTree:
    """Search tree rooted at the start state.

    Nodes are integer ids in insertion order; ``reward[i]`` is the cumulative
    reward R from the root. Edge cost distributions and cumulative cost
    distributions are computed on demand and memoized until the node's
    ancestry changes.
    """

    def __init__(self, root: Sequence[float], backend: ValueBackend, cost_atoms: int, rebuild_every: int = 64) -> None:
        self.backend = backend
        self.cost_atoms = int(cost_atoms)
        self.index = SpatialIndex(rebuild_every)
        self.states: List[np.ndarray] = []
        self.parent: List[int] = []
        self.reward: List[float] = []
        self.edge_reward: List[float] = []
        self.children: List[Dict[int, None]] = []
        self.solutions: List[PathSolution] = []
        self.best_history: List[Tuple[int, float]] = []
        self.stats: Counter = Counter()
        self._edge_cost: Dict[int, CategoricalDist] = {}
        self._cum_cost: Dict[int, CategoricalDist] = {}
        # goal-region node -> R at its last registration attempt
        self._goal_nodes: Dict[int, float] = {}
        self._best: Optional[PathSolution] = None
        self.add_node(root, -1, 0.0)
        self._cum_cost[ROOT] = point_mass(0.0, 1.0, n_atoms=self.cost_atoms)

    def __len__(self) -> int:
        return len(self.states)

    @property
    def best(self) -> Optional[PathSolution]:
        return self._best

    # -- structure ---------------------------------------------------------------

    def add_node(
        self,
        state: Sequence[float],
        parent: int,
        edge_reward: float,
        edge_cost: Optional[CategoricalDist] = None,
    ) -> int:
        state = np.array(state, dtype=np.float64)
        node = self.index.add(state)
        self.states.append(state)
        self.parent.append(parent)
        self.edge_reward.append(edge_reward)
        self.reward.append(0.0 if parent < 0 else self.reward[parent] + edge_reward)
        self.children.append({})
        if parent >= 0:
            self.children[parent][node] = None
        if edge_cost is not None:
            self._edge_cost[node] = edge_cost
        return node

    def is_ancestor(self, a: int, b: int) -> bool:
        """True when ``a`` lies on the root path of ``b`` (a node is its own ancestor)."""
        node = b
        while node >= 0:
            if node == a:
                return True
            node = self.parent[node]
        return False

    def subtree(self, node: int) -> List[int]:
        order = [node]
        for n in order:
            order.extend(self.children[n])
        return order

    def reparent(
        self,
        node: int,
        new_parent: int,
        edge_reward: float,
        edge_cost: Optional[CategoricalDist] = None,
    ) -> None:
        if node == ROOT:
            raise TreeInvariantError("the root cannot be reparented")
        if self.is_ancestor(node, new_parent):
            raise TreeInvariantError(f"reparenting {node} under {new_parent} would create a cycle")
        del self.children[self.parent[node]][node]
        self.parent[node] = new_parent
        self.children[new_parent][node] = None
        self.edge_reward[node] = edge_reward
        self._edge_cost.pop(node, None)
        if edge_cost is not None:
            self._edge_cost[node] = edge_cost
        for n in self.subtree(node):
            self.reward[n] = self.reward[self.parent[n]] + self.edge_reward[n]
            self._cum_cost.pop(n, None)

    def path_nodes(self, node: int) -> List[int]:
        nodes = []
        while node >= 0:
            nodes.append(node)
            node = self.parent[node]
        return nodes[::-1]

    def path_states(self, node: int) -> List[np.ndarray]:
        return [self.states[n] for n in self.path_nodes(node)]

    def edges(self) -> List[Tuple[Tuple[float, float], Tuple[float, float]]]:
        out = []
        for node in range(1, len(self)):
            a, b = self.states[self.parent[node]], self.states[node]
            out.append(((float(a[0]), float(a[1])), (float(b[0]), float(b[1]))))
        return out

    # -- costs ---------------------------------------------------------------------

    def edge_cost(self, node: int) -> CategoricalDist:
        cached = self._edge_cost.get(node)
        if cached is None:
            cached = self.backend.cost_dist(self.states[self.parent[node]], self.states[node])
            self._edge_cost[node] = cached
        return cached

    def cumulative_cost(self, node: int) -> CategoricalDist:
        """Cost distribution of the root path of ``node`` (memoized)."""
        chain = []
        n = node
        while n not in self._cum_cost:
            chain.append(n)
            n = self.parent[n]
        result = self._cum_cost[n]
        for m in reversed(chain):
            result = convolve(result, self.edge_cost(m), self.cost_atoms)
            self._cum_cost[m] = result
        return result

    def cumulative_cost_walk(self, node: int) -> CategoricalDist:
        """Same as ``cumulative_cost`` but walks parent links without the memo."""
        result = point_mass(0.0, 1.0, n_atoms=self.cost_atoms)
        n = node
        while self.parent[n] >= 0:
            result = convolve(result, self.edge_cost(n), self.cost_atoms)
            n = self.parent[n]
        return result

    # -- solutions -----------------------------------------------------------------

    def register_solution(self, node: int, iteration: int, alpha: float, K: float) -> Optional[PathSolution]:
        """Re-validate the root path of a goal-region node and keep it if feasible."""
        self._goal_nodes[node] = self.reward[node]
        try:
            solution = path_solution(self.backend, self.path_states(node), alpha, K, self.cost_atoms, iteration)
        except (LocalityError, UnreachableError) as exc:
            logger.debug("Dropping goal node %d: %s", node, exc)
            self.stats["solutions_rejected"] += 1
            return None
        if not solution.feasible:
            logger.debug("Dropping goal node %d: CVaR %.3f exceeds K=%.3f", node, solution.cvar_certificate, K)
            self.stats["solutions_rejected"] += 1
            return None
        self.solutions.append(solution)
        if self._best is None or solution.reward > self._best.reward + REWARD_EPS:
            self._best = solution
            logger.debug("Iteration %d: best path length %.3f", iteration, solution.length)
        return solution

    def refresh_solutions(self, iteration: int, alpha: float, K: float) -> None:
        """Re-register goal nodes whose reward improved through rewiring."""
        for node, last in list(self._goal_nodes.items()):
            if self.reward[node] > last + REWARD_EPS:
                self.register_solution(node, iteration, alpha, K)

    def record_best(self, iteration: int) -> None:
        if self._best is not None:
            self.best_history.append((iteration, self._best.reward))

    # -- diagnostics ---------------------------------------------------------------

    def check_invariants(self, tol: float = 1e-9) -> None:
        n = len(self)
        roots = [i for i, p in enumerate(self.parent) if p < 0]
        if roots != [ROOT] or self.reward[ROOT] != 0.0:
            raise TreeInvariantError(f"expected a single root with R = 0, found roots {roots}")
        for node in range(1, n):
            steps, m = 0, node
            while m != ROOT:
                m = self.parent[m]
                steps += 1
                if m < 0 or steps > n:
                    raise TreeInvariantError(f"node {node} does not lead back to the root")
            p = self.parent[node]
            if node not in self.children[p]:
                raise TreeInvariantError(f"node {node} missing from the children of {p}")
            expected = self.reward[p] + self.edge_reward[node]
            if abs(self.reward[node] - expected) > tol:
                raise TreeInvariantError(f"R({node}) = {self.reward[node]} but parent chain gives {expected}")
        for node, memo in list(self._cum_cost.items()):
            walked = self.cumulative_cost_walk(node)
            if not np.allclose(memo.probs, walked.probs, atol=1e-9):
                raise TreeInvariantError(f"stale cumulative cost memo at node {node}")


# ---------------------------------------------------------------------------
# Algorithm pieces
# ---------------------------------------------------------------------------

def _check_edge(
    tree: PlanTree,
    node: int,
    s_prime: Sequence[float],
    backend: ValueBackend,
    cfg: PlannerConfig,
) -> Tuple[bool, Optional[CategoricalDist]]:
    start = tree.states[node]
    try:
        if not cfg.constrained:
            backend.distance(start, s_prime)
            return True, None
        edge = backend.cost_dist(start, s_prime)
    except (LocalityError, UnreachableError):
        return False, None
    result = convolve(tree.cumulative_cost(node), edge, tree.cost_atoms)
    if cfg.debug:
        walked = convolve(tree.cumulative_cost_walk(node), edge, tree.cost_atoms)
        if not np.allclose(result.probs, walked.probs, atol=1e-9):
            raise TreeInvariantError(f"memoized cost at node {node} disagrees with the parent walk")
    return cvar_alpha(result, cfg.alpha) <= cfg.K, edge


def valid_edge(
    tree: PlanTree,
    node: int,
    s_prime: Sequence[float],
    backend: ValueBackend,
    cfg: PlannerConfig,
) -> bool:
    """Would attaching ``s_prime`` under ``node`` keep CVaR_alpha of the path cost <= K?

    Non-local or unreachable pairs are invalid edges. With ``K = inf`` only
    locality is checked.
    """
    ok, _ = _check_edge(tree, node, s_prime, backend, cfg)
    return ok


def informed_sample(
    s_o: Sequence[float],
    s_G: Sequence[float],
    r_best: float,
    maze: MazeMap,
    rng: np.random.Generator,
    budget: int = _PLANNER["informed_rejection_budget"],
) -> np.ndarray:
    """Uniform point of S_free inside the ellipse with foci s_o, s_G and major axis r_best.

    With ``r_best = inf`` the ellipse is the whole plane. When ``budget``
    draws all land in walls the sample falls back to all of S_free.
    """
    if not math.isfinite(r_best):
        return sample_free(maze, rng)
    s_o = np.asarray(s_o, dtype=np.float64)
    s_G = np.asarray(s_G, dtype=np.float64)
    r_min = float(np.hypot(*(s_G - s_o)))
    r_best = max(float(r_best), r_min)
    center = 0.5 * (s_o + s_G)
    if r_min > 0:
        e = (s_G - s_o) / r_min
        rotation = np.array([[e[0], -e[1]], [e[1], e[0]]])
    else:
        rotation = np.eye(2)
    radii = np.array([0.5 * r_best, 0.5 * math.sqrt(max(r_best ** 2 - r_min ** 2, 0.0))])
    for _ in range(budget):
        theta = rng.uniform(0.0, 2.0 * math.pi)
        rho = math.sqrt(rng.uniform())
        x = center + rotation @ (radii * rho * np.array([math.cos(theta), math.sin(theta)]))
        if point_is_free(maze, x):
            return x
    logger.debug("Informed sampling budget of %d draws exhausted; sampling all of S_free", budget)
    return sample_free(maze, rng)


def steer(
    s_nearest: Sequence[float],
    s_rand: Sequence[float],
    cap: float,
    backend: ValueBackend,
    steps: int = _PLANNER["steer_bisection_steps"],
) -> Optional[np.ndarray]:
    """Point on the segment toward ``s_rand`` within backend distance ``cap`` of ``s_nearest``.

    Returns ``s_rand`` itself when it qualifies, otherwise bisects along the
    segment; None when no collision-free point qualifies.
    """
    if not cap > 0:
        raise ConfigError("steering cap must be positive")
    maze = backend.maze
    a = np.asarray(s_nearest, dtype=np.float64)
    b = np.asarray(s_rand, dtype=np.float64)

    def admissible(p: np.ndarray) -> bool:
        if not point_is_free(maze, p) or segment_collides(maze, a, p):
            return False
        return bool(backend.distances_from(a, [p])[0] <= cap)

    if admissible(b):
        return b.copy()
    lo, hi = 0.0, 1.0
    for _ in range(steps):
        mid = 0.5 * (lo + hi)
        if admissible(a + mid * (b - a)):
            lo = mid
        else:
            hi = mid
    if lo == 0.0:
        return None
    return a + lo * (b - a)


def gamma_lower_bound(d: int, mu_free: float) -> float:
    """Smallest rewiring constant for asymptotic optimality in d dimensions."""
    if d < 1 or not mu_free > 0:
        raise ConfigError("gamma bound needs d >= 1 and a positive free volume")
    unit_ball = math.pi ** (d / 2.0) / gamma_fn(d / 2.0 + 1.0)
    return (2.0 * (1.0 + 1.0 / d)) ** (1.0 / d) * (mu_free / unit_ball) ** (1.0 / d)


def rewiring_radius(
    n: int,
    d: int = 2,
    mu_free: Optional[float] = None,
    gamma: Optional[float] = None,
) -> float:
    """gamma * (ln n / n) ** (1 / d); gamma defaults to the margin times its lower bound."""
    if n < 2:
        raise ConfigError("rewiring radius needs at least two nodes")
    if gamma is None:
        if mu_free is None:
            raise ConfigError("rewiring radius needs gamma or the free volume")
        gamma = _PLANNER["gamma_margin"] * gamma_lower_bound(d, mu_free)
    return gamma * (math.log(n) / n) ** (1.0 / d)


def _lower_bound_slack(backend: ValueBackend) -> float:
    # Snapping both points to cell centers moves each by at most half a diagonal.
    return math.sqrt(2.0) * backend.grid_res


def nearest_node(tree: PlanTree, p: Sequence[float], candidates: int) -> int:
    """Node minimizing -V(node, p); Euclidean nearest when none is local."""
    backend = tree.backend
    ids = tree.index.knn(p, candidates)
    dist: Dict[int, float] = {}

    def measure(node: int) -> float:
        if node not in dist:
            try:
                dist[node] = backend.distance(tree.states[node], p)
            except (LocalityError, UnreachableError):
                dist[node] = math.inf
        return dist[node]

    local = [node for node in ids if math.isfinite(measure(node))]
    if not local:
        return ids[0]
    best = min(local, key=lambda node: (dist[node], node))
    # Euclidean distance is a lower bound on -V up to the snapping slack.
    for node in tree.index.within(p, dist[best] + _lower_bound_slack(backend)):
        measure(node)
    return min((node for node in dist if math.isfinite(dist[node])), key=lambda node: (dist[node], node))


def near_nodes(tree: PlanTree, p: Sequence[float], radius: float) -> List[Tuple[int, float]]:
    """(node, -V(node, p)) for every node within backend distance ``radius``, by id."""
    backend = tree.backend
    out = []
    for node in tree.index.within(p, radius + _lower_bound_slack(backend)):
        try:
            d = backend.distance(tree.states[node], p)
        except (LocalityError, UnreachableError):
            continue
        if d <= radius:
            out.append((node, d))
    return out


# ---------------------------------------------------------------------------
# Planner
# ---------------------------------------------------------------------------

class ConstrainedInformedRRTStar:
    """One planning run; ``run()`` performs ``cfg.iterations`` extensions."""

    def __init__(
        self,
        backend: ValueBackend,
        maze: MazeMap,
        s_o: Sequence[float],
        s_G: Sequence[float],
        cfg: PlannerConfig,
    ) -> None:
        self.backend = backend
        self.maze = maze
        self.cfg = cfg
        self.s_o = np.asarray(s_o, dtype=np.float64)
        self.s_G = np.asarray(s_G, dtype=np.float64)
        for label, p in (("start", self.s_o), ("goal", self.s_G)):
            if not point_is_free(maze, p):
                raise MapError(f"{label} {tuple(p)} is not in free space")

        settings = get_settings()
        self.eta = min(cfg.eta, backend.eta) if cfg.eta is not None else backend.eta
        self.goal_radius = cfg.goal_radius if cfg.goal_radius is not None else maze.goal_tolerance
        self.mu_free = free_area(maze)
        bound = gamma_lower_bound(2, self.mu_free)
        self.gamma = cfg.gamma_rrt if cfg.gamma_rrt is not None else cfg.gamma_margin * bound
        if self.gamma < bound:
            logger.warning("gamma_rrt %.3f is below its lower bound %.3f", self.gamma, bound)
        self.rng = np.random.default_rng(cfg.seed)
        self.tree = PlanTree(
            self.s_o,
            backend,
            cfg.cost_atoms or settings.cost_atoms,
            cfg.kd_rebuild_every or settings.kd_rebuild_every,
        )

    def in_goal(self, p: np.ndarray) -> bool:
        return float(np.hypot(*(p - self.s_G))) <= self.goal_radius

    def run(self) -> Tuple[PlanTree, Optional[PathSolution]]:
        cfg, tree = self.cfg, self.tree
        logger.info(
            "Planning on %s: K=%s alpha=%.2f N=%d seed=%d",
            self.maze.name, cfg.K, cfg.alpha, cfg.iterations, cfg.seed,
        )
        if self.in_goal(self.s_o):
            tree.register_solution(ROOT, 0, cfg.alpha, cfg.K)
        for iteration in range(1, cfg.iterations + 1):
            self.extend(iteration)
            tree.refresh_solutions(iteration, cfg.alpha, cfg.K)
            tree.record_best(iteration)
            if cfg.debug:
                tree.check_invariants()
            if iteration % 250 == 0:
                logger.debug("Iteration %d: %d nodes, %d solutions", iteration, len(tree), len(tree.solutions))
        tree.stats["iterations"] = cfg.iterations
        best = tree.best
        logger.info(
            "Planner finished: %d nodes, %d solutions, best length %s, stats %s",
            len(tree), len(tree.solutions), f"{best.length:.3f}" if best else "none", dict(tree.stats),
        )
        return tree, best

    def sample(self) -> np.ndarray:
        if self.rng.random() < self.cfg.goal_bias:
            return self.s_G.copy()
        best = self.tree.best
        r_best = best.length if best is not None else math.inf
        return informed_sample(self.s_o, self.s_G, r_best, self.maze, self.rng, self.cfg.informed_rejection_budget)

    def extend(self, iteration: int) -> Optional[int]:
        """One iteration; returns the inserted node id or None."""
        cfg, tree, backend = self.cfg, self.tree, self.backend
        s_rand = self.sample()
        nearest = nearest_node(tree, s_rand, cfg.nearest_candidates)
        cap = min(rewiring_radius(max(2, len(tree)), 2, gamma=self.gamma), self.eta)
        s_new = steer(tree.states[nearest], s_rand, cap, backend, cfg.steer_bisection_steps)
        if s_new is None:
            tree.stats["steer_failures"] += 1
            return None

        near = near_nodes(tree, s_new, cap)
        near_dist = dict(near)
        d_nearest = near_dist.get(nearest)
        if d_nearest is None:
            d_nearest = float(backend.distances_from(tree.states[nearest], [s_new])[0])
            near_dist[nearest] = d_nearest

        # best parent: lowest path length among valid edges
        s_min, c_min = nearest, -tree.reward[nearest] + d_nearest
        for node, d in near:
            c = -tree.reward[node] + d
            if node != nearest and c < c_min - REWARD_EPS and valid_edge(tree, node, s_new, backend, cfg):
                s_min, c_min = node, c
        # a rejected parent skips the insertion; no fallback to the next-best one
        ok, edge = _check_edge(tree, s_min, s_new, backend, cfg)
        if not ok:
            tree.stats["insert_rejections"] += 1
            return None
        new = tree.add_node(s_new, s_min, -near_dist[s_min], edge)

        self.rewire(new, [node for node, _ in near if node not in (s_min, ROOT)])
        if self.in_goal(s_new):
            tree.register_solution(new, iteration, cfg.alpha, cfg.K)
        return new

    def rewire(self, new: int, candidates: List[int]) -> None:
        if not candidates:
            return
        cfg, tree, backend = self.cfg, self.tree, self.backend
        out = backend.distances_from(tree.states[new], [tree.states[node] for node in candidates])
        for node, d in zip(candidates, out):
            if not math.isfinite(d):
                continue
            if -tree.reward[new] + d >= -tree.reward[node] - REWARD_EPS:
                continue
            if tree.is_ancestor(node, new):
                continue
            ok, edge = _check_edge(tree, new, tree.states[node], backend, cfg)
            if ok:
                tree.reparent(node, new, -float(d), edge)
                tree.stats["rewires"] += 1


def plan(
    backend: ValueBackend,
    maze: MazeMap,
    s_o: Sequence[float],
    s_G: Sequence[float],
    cfg: Optional[PlannerConfig] = None,
) -> Tuple[PlanTree, Optional[PathSolution]]:
    """Run the constrained planner.

    Args:
        backend: value backend answering local distance and cost queries.
        maze: map whose free space is sampled.
        s_o: start state, the tree root.
        s_G: goal state; the goal region is a disk around it.
        cfg: planner settings; defaults to ``PlannerConfig()``.

    Returns:
        The final tree and its best solution, or None as the solution when
        no path satisfying the cost limit was found.

    Raises:
        MapError: the start or goal lies outside free space.
    """
    return ConstrainedInformedRRTStar(backend, maze, s_o, s_G, cfg or PlannerConfig()).run()


# ---------------------------------------------------------------------------
# Output records
# ---------------------------------------------------------------------------

def plan_record(
    best: Optional[PathSolution],
    cfg: PlannerConfig,
    wall_time_ms: Optional[float] = None,
) -> Dict[str, Any]:
    if best is not None:
        record = best.to_record()
    else:
        record = {"waypoints": [], "R_sigma": None, "cost_dist": None, "cvar": None, "alpha": cfg.alpha,
                  "K": cfg.K if cfg.constrained else None}
    record.update(
        solved=best is not None,
        iterations=cfg.iterations,
        seed=cfg.seed,
        wall_time_ms=wall_time_ms,
    )
    return record


def write_plan(record: Dict[str, Any], path: str) -> None:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w") as f:
        json.dump(record, f, indent=2, sort_keys=True)
        f.write("\n")


def write_tree(tree: PlanTree, path: str) -> None:
    """Edge-list dump of the tree for visualization."""
    payload = {
        "nodes": [
            {"id": i, "x": float(s[0]), "y": float(s[1]), "parent": tree.parent[i], "R": tree.reward[i]}
            for i, s in enumerate(tree.states)
        ],
        "edges": [[a[0], a[1], b[0], b[1]] for a, b in tree.edges()],
    }
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w") as f:
        json.dump(payload, f, sort_keys=True)
        f.write("\n")
