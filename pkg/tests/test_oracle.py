import math

import numpy as np
import pytest

from app.core.dist_core import convolve_power, expectation, uniform_over, var_alpha
from app.core.errors import LocalityError, UnreachableError
from app.services.maze_service import load_bundled_map, point_is_free, sample_free, segment_collides
from app.services.oracle_backend import build_oracle
from app.services.value_backend import distance, value


def test_identity_is_zero(open_oracle):
    assert open_oracle.distance((4.2, 7.9), (4.2, 7.9)) == 0.0
    assert value(open_oracle, (4.2, 7.9), (4.7, 7.1)) == 0.0  # same cell


def test_straight_and_diagonal_distances(open_oracle):
    assert open_oracle.distance((0.5, 0.5), (5.5, 0.5)) == pytest.approx(5.0)
    assert open_oracle.distance((0.5, 0.5), (3.5, 3.5)) == pytest.approx(3 * math.sqrt(2))
    assert open_oracle.value((0.5, 0.5), (5.5, 0.5)) == pytest.approx(-5.0)


def test_distance_is_symmetric(open_oracle):
    a, b = (2.5, 3.5), (9.5, 11.5)
    assert open_oracle.distance(a, b) == pytest.approx(open_oracle.distance(b, a))


def test_detour_around_wall(wall_map):
    oracle = build_oracle(wall_map, grid_res=1.0, eta=40.0, cost_max=60)
    # up to the gap above the wall, three cells across, back down
    assert oracle.distance((7.5, 5.5), (12.5, 5.5)) == pytest.approx(23 + 2 * math.sqrt(2))


def test_detour_beyond_eta_is_not_local(wall_oracle):
    with pytest.raises(LocalityError):
        wall_oracle.distance((7.5, 5.5), (12.5, 5.5))


def test_far_pair_raises_locality_error(open_oracle):
    with pytest.raises(LocalityError):
        open_oracle.distance((0.5, 0.5), (19.5, 0.5))
    with pytest.raises(LocalityError):
        open_oracle.cost_dist((0.5, 0.5), (19.5, 0.5))


def test_disconnected_pair_raises_unreachable(enclosed_map):
    oracle = build_oracle(enclosed_map, grid_res=1.0, eta=15.0, cost_max=60)
    with pytest.raises(UnreachableError):
        oracle.distance((5.5, 5.5), (16.5, 16.5))


def test_distances_from_matches_distance(wall_oracle):
    s = (5.5, 5.5)
    points = [(5.5, 5.5), (8.5, 2.5), (12.5, 5.5), (2.5, 14.5), (19.5, 19.5)]
    out = wall_oracle.distances_from(s, points)
    for p, d in zip(points, out):
        try:
            expected = wall_oracle.distance(s, p)
        except LocalityError:
            expected = math.inf
        assert d == pytest.approx(expected)
    assert out[0] == 0.0
    assert math.isinf(out[2])


def test_cost_off_hazard_is_zero(hazard_oracle):
    dist = hazard_oracle.cost_dist((2.5, 2.5), (10.5, 2.5))
    assert dist.n_atoms == hazard_oracle.cost_atoms
    assert dist.probs[0] == pytest.approx(1.0)


def test_cost_through_static_hazard_is_point_mass(hazard_oracle):
    dist = hazard_oracle.cost_dist((14.5, 10.5), (26.5, 10.5))
    assert dist.probs.max() == pytest.approx(1.0)
    assert expectation(dist) == pytest.approx(6.0)
    assert var_alpha(dist, 0.1) == pytest.approx(6.0)


def test_cost_through_stochastic_hazard_is_k_fold_convolution(stochastic_map):
    oracle = build_oracle(stochastic_map, grid_res=1.0, eta=15.0, cost_max=60)
    dist = oracle.cost_dist((14.5, 10.5), (26.5, 10.5))
    expected = convolve_power(uniform_over([0, 1, 2], 1.0), 6, oracle.cost_atoms)
    np.testing.assert_allclose(dist.probs, expected.probs, atol=1e-12)


def test_policy_heads_east(open_oracle):
    action = open_oracle.local_policy((5.5, 5.5), (12.5, 5.5))
    np.testing.assert_allclose(action, [1.0, 0.0], atol=1e-9)


def test_policy_is_zero_inside_goal_tolerance(open_oracle):
    np.testing.assert_array_equal(open_oracle.local_policy((5.5, 5.5), (5.9, 5.5)), [0.0, 0.0])


def test_policy_is_clipped_to_a_max(open_oracle):
    action = open_oracle.local_policy((2.5, 2.5), (9.5, 9.5))
    assert math.hypot(*action) <= 1.0 + 1e-12
    assert action[0] > 0 and action[1] > 0


def test_policy_rejects_far_goal(open_oracle):
    with pytest.raises(LocalityError):
        open_oracle.local_policy((0.5, 0.5), (19.5, 19.5))


def test_reward_support_covers_twice_eta(open_oracle):
    v_min, delta, n_atoms = open_oracle.reward_support
    assert v_min == pytest.approx(-30.0)
    assert delta == 1.0 and n_atoms == 31


def test_grid_metric_on_four_rooms():
    maze = load_bundled_map("four_rooms_static")
    oracle = build_oracle(maze, grid_res=1.0, eta=15.0, cost_max=60)
    rng = np.random.default_rng(0)
    res = oracle.grid_res
    checked = 0
    while checked < 1000:
        s = sample_free(maze, rng)
        t = s + rng.uniform(-7, 7, size=2)
        u = t + rng.uniform(-7, 7, size=2)
        if not (point_is_free(maze, t) and point_is_free(maze, u)):
            continue
        try:
            st, tu, su = distance(oracle, s, t), distance(oracle, t, u), distance(oracle, s, u)
            ts = distance(oracle, t, s)
        except (LocalityError, UnreachableError):
            continue
        assert min(st, tu, su) >= 0.0
        assert distance(oracle, s, s) == 0.0
        assert abs(st - ts) <= 2 * res
        assert su <= st + tu + 3 * res
        checked += 1


def test_route_bends_over_the_wall(wall_oracle, wall_map):
    s, t = np.array([7.5, 12.5]), np.array([12.5, 12.5])
    route = wall_oracle.route(s, t)
    assert len(route) >= 3
    np.testing.assert_array_equal(route[0], s)
    np.testing.assert_array_equal(route[-1], t)
    for a, b in zip(route, route[1:]):
        assert not segment_collides(wall_map, a, b)
    assert wall_oracle.local_policy(s, t)[1] > 0.0


def test_visible_pair_routes_straight(open_oracle):
    route = open_oracle.route((1.2, 3.7), (9.9, 8.1))
    assert len(route) == 2


def test_cost_is_scored_on_the_straight_drive():
    # a grid staircase would skirt the hazard edge and count a single step
    maze = load_bundled_map("four_rooms_static")
    oracle = build_oracle(maze, grid_res=1.0, eta=15.0, cost_max=60)
    s, t = (24.1, 54.25), (29.54, 53.44)
    assert len(oracle.route(s, t)) == 2
    dist = oracle.cost_dist(s, t)
    assert dist.probs.max() == pytest.approx(1.0)
    assert expectation(dist) == pytest.approx(4.0)
