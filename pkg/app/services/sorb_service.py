"""Search-on-the-replay-buffer baseline: a sampled roadmap searched with Dijkstra.

No cost constraint is applied; the returned path still carries its cost
distribution and CVaR so it can be compared against the constrained planner.
"""
from __future__ import annotations

import logging
import math
from typing import Optional, Sequence

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import dijkstra
from scipy.spatial.distance import cdist

from app.core.config import DEFAULTS
from app.core.errors import ConfigError, MapError
from app.services.maze_service import MazeMap, point_is_free, sample_free
from app.services.planner_service import PathSolution, path_solution
from app.services.value_backend import ValueBackend

logger = logging.getLogger(__name__)

# csgraph drops explicit zeros, so zero-length edges get this weight instead.
_MIN_WEIGHT = 1e-9


def sorb_plan(
    backend: ValueBackend,
    maze: MazeMap,
    s_o: Sequence[float],
    s_G: Sequence[float],
    n_nodes: int = DEFAULTS["sorb"]["n_nodes"],
    edge_cap: Optional[float] = None,
    seed: int = 0,
    alpha: float = 1.0,
    K: float = math.inf,
    cost_atoms: Optional[int] = None,
) -> Optional[PathSolution]:
    """Shortest path through ``n_nodes`` free samples plus the start and goal.

    Every ordered pair with -V <= ``edge_cap`` (default: the backend's
    locality radius) becomes an edge weighted by -V. ``alpha`` and ``K`` only
    label the returned certificate. None when the goal is not connected.

    Args:
        backend: value backend weighting roadmap edges by -V.
        maze: map the nodes are sampled from.
        s_o: start state.
        s_G: goal state.
        n_nodes: number of sampled roadmap nodes besides start and goal.
        edge_cap: longest edge kept, capped at the locality radius.
        seed: seeds the node sampler; the first n samples of a seed are shared.
        alpha: risk level recorded on the certificate.
        K: cost limit recorded on the certificate.
        cost_atoms: cost support size; the settings value when unset.

    Returns:
        The shortest roadmap path as a PathSolution, or None.

    Raises:
        ConfigError: fewer than two nodes requested.
        MapError: the start or goal lies outside free space.
    """
    if n_nodes < 2:
        raise ConfigError("SORB needs at least two sampled nodes")
    edge_cap = backend.eta if edge_cap is None else min(float(edge_cap), backend.eta)
    s_o = np.asarray(s_o, dtype=np.float64)
    s_G = np.asarray(s_G, dtype=np.float64)
    for label, p in (("start", s_o), ("goal", s_G)):
        if not point_is_free(maze, p):
            raise MapError(f"{label} {tuple(p)} is not in free space")

    rng = np.random.default_rng(seed)
    samples = [sample_free(maze, rng) for _ in range(n_nodes)]
    nodes = np.vstack([s_o, s_G] + samples)
    source, target = 0, 1

    # Euclidean distance lower-bounds -V up to the cell-snapping slack.
    euclid = cdist(nodes, nodes)
    slack = math.sqrt(2.0) * backend.grid_res
    rows, cols, weights = [], [], []
    for i in range(len(nodes)):
        js = np.flatnonzero(euclid[i] <= edge_cap + slack)
        js = js[js != i]
        if js.size == 0:
            continue
        d = backend.distances_from(nodes[i], nodes[js])
        keep = d <= edge_cap
        rows.append(np.full(int(keep.sum()), i))
        cols.append(js[keep])
        weights.append(np.maximum(d[keep], _MIN_WEIGHT))
    if not rows:
        logger.info("SORB roadmap has no edges")
        return None
    graph = csr_matrix(
        (np.concatenate(weights), (np.concatenate(rows), np.concatenate(cols))),
        shape=(len(nodes), len(nodes)),
    )
    logger.debug("SORB roadmap: %d nodes, %d edges", len(nodes), graph.nnz)

    dist, predecessors = dijkstra(graph, directed=True, indices=source, return_predecessors=True)
    if not np.isfinite(dist[target]):
        logger.info("SORB found no route from %s to %s", tuple(s_o), tuple(s_G))
        return None

    order = [target]
    while order[-1] != source:
        order.append(int(predecessors[order[-1]]))
    waypoints = nodes[order[::-1]]
    solution = path_solution(backend, waypoints, alpha, K, cost_atoms)
    logger.info("SORB path: %d waypoints, length %.3f", len(waypoints), solution.length)
    return solution
