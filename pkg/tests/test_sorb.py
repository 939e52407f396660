import math

import numpy as np
import pytest

from app.core.errors import ConfigError, MapError
from app.services.oracle_backend import build_oracle
from app.services.sorb_service import sorb_plan


def test_connects_distant_pair(open_map, open_oracle):
    start, goal = (2.5, 2.5), (17.5, 17.5)
    path = sorb_plan(open_oracle, open_map, start, goal, n_nodes=100, seed=0)
    assert path is not None
    assert path.waypoints[0] == start and path.waypoints[-1] == goal
    assert len(path.waypoints) >= 3
    assert path.length >= 15 * math.sqrt(2) - 1e-9
    for a, b in zip(path.waypoints[:-1], path.waypoints[1:]):
        assert open_oracle.distance(a, b) <= open_oracle.eta


def test_certificate_carries_alpha(hazard_map, hazard_oracle):
    path = sorb_plan(hazard_oracle, hazard_map, (5.5, 10.5), (34.5, 10.5), n_nodes=150, seed=1, alpha=0.5, K=2.0)
    assert path is not None
    assert path.alpha == 0.5 and path.K == 2.0
    assert path.cvar_certificate >= 0.0


def test_same_seed_same_path(open_map, open_oracle):
    a = sorb_plan(open_oracle, open_map, (2.5, 2.5), (17.5, 17.5), n_nodes=60, seed=4)
    b = sorb_plan(open_oracle, open_map, (2.5, 2.5), (17.5, 17.5), n_nodes=60, seed=4)
    assert a.waypoints == b.waypoints


def test_sealed_goal_is_unreachable(enclosed_map):
    oracle = build_oracle(enclosed_map, grid_res=1.0, eta=15.0, cost_max=60)
    assert sorb_plan(oracle, enclosed_map, (5.5, 5.5), (16.5, 16.5), n_nodes=80, seed=0) is None


def test_tiny_edge_cap_leaves_goal_disconnected(open_map, open_oracle):
    assert sorb_plan(open_oracle, open_map, (2.5, 2.5), (17.5, 17.5), n_nodes=50, edge_cap=0.5) is None


def test_argument_checks(wall_map, wall_oracle):
    with pytest.raises(ConfigError):
        sorb_plan(wall_oracle, wall_map, (2.5, 2.5), (15.5, 2.5), n_nodes=1)
    with pytest.raises(MapError):
        sorb_plan(wall_oracle, wall_map, (10.0, 2.5), (15.5, 2.5), n_nodes=10)


def test_more_nodes_never_lengthen_the_path(open_map, open_oracle):
    # the first n samples of a seed are shared, so the roadmaps are nested
    for seed in range(50):
        lengths = []
        for n_nodes in (10, 20, 40):
            path = sorb_plan(open_oracle, open_map, (2.5, 2.5), (17.5, 17.5), n_nodes=n_nodes, seed=seed)
            lengths.append(math.inf if path is None else path.length)
        assert all(b <= a + 1e-9 for a, b in zip(lengths, lengths[1:]))
