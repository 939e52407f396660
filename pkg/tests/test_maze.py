import math

import numpy as np
import pytest
from scipy.stats import chisquare

from app.core.errors import EpisodeError, MapError, SamplingError
from app.services.maze_service import (
    free_area,
    hazard_step_count,
    load_bundled_map,
    load_map,
    map_to_document,
    move,
    point_is_free,
    reset_episode,
    sample_free,
    segment_collides,
    step,
)

from conftest import map_json, static_hazard, uniform_hazard


def test_bundled_four_rooms_has_two_hazards():
    maze = load_bundled_map("four_rooms_static")
    assert len(maze.hazards) == 2
    assert maze.bounds == (0.0, 0.0, 80.0, 80.0)
    assert maze.start_region is not None and maze.goal_region is not None


def test_empty_walls_is_open_arena(open_map):
    assert len(open_map.walls) == 0
    assert free_area(open_map) == pytest.approx(400.0)


def test_free_area_subtracts_overlapping_walls():
    maze = load_map(map_json(walls=[(0, 0, 10, 10), (5, 5, 15, 15)]))
    assert free_area(maze) == pytest.approx(400.0 - 175.0)


@pytest.mark.parametrize(
    "text",
    [
        map_json(hazards=[static_hazard((25, 5), 2)]),
        map_json(walls=[(15, 15, 25, 18)]),
        map_json(bounds=(0, 0, 0, 10)),
        map_json(walls=[(0, 0, 20, 20)]),
        map_json(hazards=[{"center": [5, 5], "radius": 1, "cost": {"kind": "static"}}]),
        map_json(hazards=[uniform_hazard((5, 5), 1, atoms=())]),
        "{not json",
    ],
)
def test_invalid_documents_raise_map_error(text):
    with pytest.raises(MapError):
        load_map(text)


def test_unknown_bundled_map():
    with pytest.raises(MapError):
        load_bundled_map("no_such_map")


def test_document_round_trip():
    maze = load_bundled_map("four_rooms_stochastic")
    again = load_map(map_to_document(maze).model_dump_json())
    np.testing.assert_array_equal(again.walls, maze.walls)
    assert again.hazards == maze.hazards


# -- collisions ---------------------------------------------------------------

def test_zero_length_segment_in_free_space(wall_map):
    assert not segment_collides(wall_map, (3, 3), (3, 3))


def test_segment_through_wall(wall_map):
    assert segment_collides(wall_map, (5, 5), (15, 5))
    assert not segment_collides(wall_map, (5, 18), (15, 18))


def test_grazing_a_corner_counts_as_collision(wall_map):
    # passes exactly through the wall corner (11, 16)
    assert segment_collides(wall_map, (10, 17), (12, 15))


def test_walls_are_closed(wall_map):
    assert not point_is_free(wall_map, (9, 5))
    assert not point_is_free(wall_map, (10, 16))
    assert point_is_free(wall_map, (10, 16.01))


def test_move_stops_short_of_wall(wall_map):
    p = move(wall_map, (8.5, 5), (1, 0))
    assert p[0] < 9.0
    assert p[0] == pytest.approx(9.0, abs=1e-5)
    assert point_is_free(wall_map, p)


def test_move_clips_to_a_max(open_map):
    p = move(open_map, (5, 5), (3, 4))
    assert math.hypot(p[0] - 5, p[1] - 5) == pytest.approx(1.0)


def test_move_stays_inside_bounds(open_map):
    p = move(open_map, (19.5, 10), (1, 0))
    assert p[0] <= 20.0


def test_non_finite_action_is_a_no_op(open_map):
    np.testing.assert_array_equal(move(open_map, (5, 5), (math.nan, 1)), [5, 5])


# -- hazards ------------------------------------------------------------------

def test_hazard_counts(hazard_map):
    assert list(hazard_step_count(hazard_map, (2, 2), (8, 2), 1.0)) == [0]
    assert list(hazard_step_count(hazard_map, (18, 10), (23, 10), 1.0)) == [5]


def test_hazard_count_matches_brute_force(hazard_map):
    a, b = np.array([12.0, 8.3]), np.array([29.0, 11.9])
    length = float(np.hypot(*(b - a)))
    n = math.ceil(length)
    ts = np.minimum(np.arange(1, n + 1) / length, 1.0)
    points = a + ts[:, None] * (b - a)
    tally = int((np.hypot(points[:, 0] - 20, points[:, 1] - 10) <= 3).sum())
    assert list(hazard_step_count(hazard_map, a, b, 1.0)) == [tally]


# -- episodes -------------------------------------------------------------------

def test_step_in_free_space(hazard_map):
    state = reset_episode(hazard_map, (2, 2), (30, 2), horizon=10, seed=0)
    state, reward, cost, done = step(state, hazard_map, (1, 0))
    assert reward == -1.0 and cost == 0.0 and not done
    assert state.step_count == 1


def test_step_into_static_hazard(hazard_map):
    state = reset_episode(hazard_map, (19.5, 10), (30, 10), horizon=10, seed=0)
    _, _, cost, _ = step(state, hazard_map, (1, 0))
    assert cost == 1.0


def test_stochastic_hazard_costs_are_uniform(stochastic_map):
    counts = np.zeros(3)
    state = reset_episode(stochastic_map, (20, 10), (30, 10), horizon=10_001, seed=7)
    for _ in range(10_000):
        state, _, cost, _ = step(state, stochastic_map, (0, 0))
        counts[int(cost)] += 1
    assert chisquare(counts).pvalue > 0.01


def test_done_at_goal_and_horizon(open_map):
    state = reset_episode(open_map, (5, 5), (6.5, 5), horizon=3, seed=0)
    state, _, _, done = step(state, open_map, (1, 0))
    assert done
    state = reset_episode(open_map, (5, 5), (15, 5), horizon=1, seed=0)
    state, _, _, done = step(state, open_map, (0, 1))
    assert done
    with pytest.raises(EpisodeError):
        step(state, open_map, (0, 1))


def test_reset_rejects_blocked_start(wall_map):
    with pytest.raises(MapError):
        reset_episode(wall_map, (10, 5), (15, 5), horizon=5, seed=0)


def test_sample_free_respects_walls(wall_map):
    rng = np.random.default_rng(0)
    for _ in range(200):
        assert point_is_free(wall_map, sample_free(wall_map, rng))


def test_sample_free_budget(wall_map):
    with pytest.raises(SamplingError):
        sample_free(wall_map, np.random.default_rng(0), region=(9.5, 1, 10.5, 2), budget=10)
