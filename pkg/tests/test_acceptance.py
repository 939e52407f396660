"""End-to-end runs on the bundled four-rooms maps (``pytest -m slow``).

Planner runs here opt in to a small goal bias so that 1000 iterations reach
the unit goal disk on an 80x80 map.
"""
import time

import numpy as np
import pytest

from app.services.experiment_service import ExperimentConfig, run_experiment, summarize
from app.services.maze_service import load_bundled_map
from app.services.oracle_backend import build_oracle
from app.services.planner_service import PlannerConfig, plan
from app.services.scenario_service import sample_region_start_goal
from app.services.sorb_service import sorb_plan

pytestmark = pytest.mark.slow

GOAL_BIAS = 0.05


@pytest.fixture(scope="module")
def four_rooms():
    maze = load_bundled_map("four_rooms_static")
    return maze, build_oracle(maze)


@pytest.fixture(scope="module")
def stochastic_rooms():
    maze = load_bundled_map("four_rooms_stochastic")
    return maze, build_oracle(maze)


def _cells(table, key):
    summary = summarize(table)
    return {row[key]: row for row in summary.to_dict(orient="records")}


def test_cost_limit_certificates_hold(four_rooms):
    maze, oracle = four_rooms
    for seed in range(3):
        start, goal = sample_region_start_goal(maze, seed)
        cfg = PlannerConfig(K=0.0, iterations=1500, goal_bias=GOAL_BIAS, seed=seed)
        _, best = plan(oracle, maze, start, goal, cfg)
        if best is not None:
            assert best.cvar_certificate == 0.0


@pytest.mark.parametrize("K", [0.0, 4.0, 10.0])
@pytest.mark.parametrize("alpha", [0.1, 1.0])
def test_every_solution_respects_its_limit(stochastic_rooms, K, alpha):
    maze, oracle = stochastic_rooms
    for seed in range(100):
        start, goal = sample_region_start_goal(maze, seed)
        cfg = PlannerConfig(K=K, alpha=alpha, iterations=300, goal_bias=GOAL_BIAS, seed=seed)
        tree, best = plan(oracle, maze, start, goal, cfg)
        for solution in tree.solutions:
            assert solution.cvar_certificate <= K
        if best is not None:
            assert best.cvar_certificate <= K


def test_best_reward_only_improves(four_rooms):
    maze, oracle = four_rooms
    for seed in range(100):
        start, goal = sample_region_start_goal(maze, seed)
        cfg = PlannerConfig(K=7.0, iterations=300, goal_bias=GOAL_BIAS, seed=seed)
        tree, _ = plan(oracle, maze, start, goal, cfg)
        rewards = [r for _, r in tree.best_history]
        assert all(b >= a for a, b in zip(rewards, rewards[1:]))


def test_hard_open_maze_is_solved(tmp_path):
    started = time.perf_counter()
    cfg = ExperimentConfig(
        map="four_rooms",
        algorithms=["cop", "sorb"],
        difficulty=[0.9],
        trials=100,
        iterations=1000,
        sorb_nodes=1000,
        goal_bias=GOAL_BIAS,
        horizon=100,
        output_dir=str(tmp_path),
    )
    cells = _cells(run_experiment(cfg), "algorithm")
    assert cells["cop"]["success_rate"] >= 0.95
    assert cells["sorb"]["success_rate"] <= cells["cop"]["success_rate"]
    assert time.perf_counter() - started < 600.0


def test_static_cost_limit_trend(tmp_path):
    cfg = ExperimentConfig(
        map="four_rooms_static",
        K=[4.0, 7.0, 10.0],
        protocol="rooms",
        trials=100,
        iterations=1000,
        goal_bias=GOAL_BIAS,
        output_dir=str(tmp_path),
    )
    cells = _cells(run_experiment(cfg), "K")
    rewards = [cells[K]["mean_negated_reward"] for K in (4.0, 7.0, 10.0)]
    for K in (4.0, 7.0, 10.0):
        assert cells[K]["success_rate"] >= 0.90
        assert cells[K]["violation_pct"] <= 15.0
    # a looser limit lets the route cut deeper into the hazards
    assert all(b <= a * 1.02 for a, b in zip(rewards, rewards[1:]))


def test_stochastic_risk_trend(tmp_path):
    cfg = ExperimentConfig(
        map="four_rooms_stochastic",
        K=[10.0],
        alpha=[0.9, 0.5, 0.1],
        protocol="rooms",
        trials=100,
        iterations=1000,
        goal_bias=GOAL_BIAS,
        output_dir=str(tmp_path),
    )
    cells = _cells(run_experiment(cfg), "alpha")
    costs = [cells[a]["expected_cost"] for a in (0.9, 0.5, 0.1)]
    violations = [cells[a]["violation_pct"] for a in (0.9, 0.5, 0.1)]
    assert all(b <= a + 0.05 * max(a, 1.0) for a, b in zip(costs, costs[1:]))
    assert all(b <= a + 1.0 for a, b in zip(violations, violations[1:]))


def test_constrained_runs_collect_less_cost(tmp_path):
    cfg = ExperimentConfig(
        map="four_rooms_static",
        algorithms=["cop", "rrtstar_unconstrained"],
        K=[0.0],
        protocol="rooms",
        trials=5,
        iterations=1500,
        goal_bias=GOAL_BIAS,
        output_dir=str(tmp_path),
    )
    table = run_experiment(cfg)
    executed = table[table["planned"]]
    by_algorithm = executed.groupby("algorithm")["realized_cost"].mean()
    assert by_algorithm["cop"] <= by_algorithm["rrtstar_unconstrained"]


def _median_seconds(run, seeds):
    times = []
    for seed in seeds:
        started = time.perf_counter()
        run(seed)
        times.append(time.perf_counter() - started)
    return float(np.median(times))


def test_planner_scales_better_than_roadmap():
    maze = load_bundled_map("four_rooms")
    oracle = build_oracle(maze)
    seeds = range(10)

    def planner(n):
        def run(seed):
            start, goal = sample_region_start_goal(maze, seed)
            plan(oracle, maze, start, goal, PlannerConfig(iterations=n, goal_bias=GOAL_BIAS, seed=seed))
        return run

    def roadmap(n):
        def run(seed):
            start, goal = sample_region_start_goal(maze, seed)
            sorb_plan(oracle, maze, start, goal, n_nodes=n, seed=seed)
        return run

    planner_ratio = _median_seconds(planner(4000), seeds) / _median_seconds(planner(1000), seeds)
    roadmap_ratio = _median_seconds(roadmap(4000), seeds) / _median_seconds(roadmap(1000), seeds)
    assert planner_ratio <= 6.0
    assert roadmap_ratio >= 12.0
