import json
import math

import numpy as np
import pytest

from app.core.dist_core import expectation
from app.core.errors import ConfigError, LocalityError, SnapshotError
from app.services.backend_store import load_backend, resolve_backend, save_backend
from app.services.maze_service import load_map
from app.services.oracle_backend import build_oracle
from app.services.tabular_backend import TabularConfig, solve_goal, train_tabular

from conftest import map_json, static_hazard

CONFIG = TabularConfig(eta=4.0, grid_res=1.0, cost_max=20)


@pytest.fixture(scope="module")
def small_map():
    return load_map(map_json(name="small", bounds=(0, 0, 10, 10), hazards=[static_hazard((5, 5), 1.5)]))


@pytest.fixture(scope="module")
def tabular(small_map):
    return train_tabular(small_map, CONFIG)


def test_config_rejects_too_few_atoms():
    with pytest.raises(ConfigError):
        TabularConfig(eta=4.0, grid_res=1.0, n_atoms=5)
    with pytest.raises(ConfigError):
        TabularConfig(eta=-1.0)


def test_goal_neighbour_holds_point_mass_on_first_atom(tabular):
    grid = tabular.grid
    goal = grid.cell_index((5.5, 5.5))
    solved = solve_goal(grid, goal, CONFIG)
    w = CONFIG.half_width
    e0 = np.zeros(CONFIG.reward_atoms)
    e0[0] = 1.0
    np.testing.assert_allclose(solved.value_dists[0, w + 1, w], e0)
    np.testing.assert_allclose(solved.value_dists[0, w, w], e0)
    assert solved.reachable.all()


def test_adjacent_distances(tabular):
    assert tabular.distance((4.5, 5.5), (5.5, 5.5)) == pytest.approx(1.0, abs=1e-6)
    assert tabular.distance((4.5, 4.5), (5.5, 5.5)) == pytest.approx(math.sqrt(2), abs=1e-6)


def test_agrees_with_oracle_on_open_ground(small_map, tabular):
    oracle = build_oracle(small_map, grid_res=1.0, eta=4.0, cost_max=20)
    rng = np.random.default_rng(3)
    compared = 0
    for _ in range(800):
        s = rng.uniform(0, 10, size=2)
        t = s + rng.uniform(-4, 4, size=2)
        if not (0 <= t[0] < 10 and 0 <= t[1] < 10):
            continue
        try:
            expected = oracle.distance(s, t)
        except LocalityError:
            continue
        if expected > CONFIG.eta - 1e-3:
            continue
        assert tabular.distance(s, t) == pytest.approx(expected, abs=1e-3)
        compared += 1
    assert compared > 50


def test_non_local_pair(tabular):
    with pytest.raises(LocalityError):
        tabular.distance((0.5, 0.5), (9.5, 9.5))


def test_cost_distributions(tabular):
    clear = tabular.cost_dist((0.5, 0.5), (3.5, 0.5))
    assert clear.n_atoms == CONFIG.cost_max + 1
    assert clear.probs[0] == pytest.approx(1.0)
    crossing = tabular.cost_dist((1.5, 5.5), (5.5, 5.5))
    assert crossing.probs.sum() == pytest.approx(1.0)
    assert expectation(crossing) >= 1.0


def test_kl_trace_converges(tabular):
    trace = tabular.kl_trace
    assert trace.size >= 2
    assert trace[0] > 0.0
    assert trace[-1] < CONFIG.tolerance


def test_w1_trace_shrinks_to_zero(tabular):
    # a goal neighbour drops from the top atom to the first one on sweep one
    moved = tabular.w1_trace
    assert moved.size == tabular.kl_trace.size
    assert moved[0] == pytest.approx(CONFIG.reward_atoms - 1)
    assert np.all(np.diff(moved) <= 1e-9)
    assert moved[-1] <= CONFIG.tolerance


def test_policy_moves_toward_goal(tabular):
    action = tabular.local_policy((1.5, 1.5), (1.5, 4.5))
    assert action[1] > 0.5


def test_snapshot_round_trip(tabular, tmp_path):
    path = str(tmp_path / "tabular.npz")
    save_backend(tabular, path)
    restored = load_backend(path)
    assert restored.kind == "tabular"
    assert restored.describe() == tabular.describe()
    for s, t in [((1.5, 1.5), (3.5, 4.5)), ((1.5, 5.5), (5.5, 5.5))]:
        assert restored.distance(s, t) == tabular.distance(s, t)
        np.testing.assert_array_equal(restored.cost_dist(s, t).probs, tabular.cost_dist(s, t).probs)
    np.testing.assert_array_equal(restored.w1_trace, tabular.w1_trace)


def test_oracle_snapshot_round_trip(small_map, tmp_path):
    oracle = build_oracle(small_map, grid_res=1.0, eta=4.0, cost_max=20)
    path = str(tmp_path / "oracle.npz")
    save_backend(oracle, path)
    restored = resolve_backend(path, small_map)
    assert restored.kind == "oracle"
    assert restored.distance((1.5, 1.5), (4.5, 1.5)) == pytest.approx(3.0)


def test_bad_snapshot(tmp_path):
    path = tmp_path / "junk.npz"
    path.write_bytes(b"not an archive")
    with pytest.raises(SnapshotError):
        load_backend(str(path))
    with pytest.raises(SnapshotError):
        resolve_backend("oracle")


def test_snapshot_version_mismatch(tabular, tmp_path):
    path = str(tmp_path / "old.npz")
    save_backend(tabular, path)
    with np.load(path, allow_pickle=False) as data:
        header = json.loads(str(data["header"]))
        tables = {name: data[name] for name in data.files if name != "header"}
    header["version"] = 1
    with open(path, "wb") as f:
        np.savez_compressed(f, header=np.array(json.dumps(header)), **tables)
    with pytest.raises(SnapshotError, match="version"):
        load_backend(path)
