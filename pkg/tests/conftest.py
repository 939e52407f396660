"""Shared fixtures: small maps that keep grids and planners fast."""
import json

import pytest

from app.services.maze_service import load_map
from app.services.oracle_backend import build_oracle


def map_json(name="open", bounds=(0, 0, 20, 20), walls=(), hazards=(), **extra):
    doc = {
        "name": name,
        "bounds": list(bounds),
        "walls": [list(w) for w in walls],
        "hazards": list(hazards),
    }
    doc.update(extra)
    return json.dumps(doc)


def static_hazard(center, radius, value=1):
    return {"center": list(center), "radius": radius, "cost": {"kind": "static", "value": value}}


def uniform_hazard(center, radius, atoms=(0, 1, 2)):
    return {"center": list(center), "radius": radius, "cost": {"kind": "uniform", "atoms": list(atoms)}}


@pytest.fixture
def open_map():
    return load_map(map_json())


@pytest.fixture
def wall_map():
    # vertical wall with a gap at the top (y in 16..20)
    return load_map(map_json(name="wall", walls=[(9, 0, 11, 16)]))


@pytest.fixture
def enclosed_map():
    # the top-right corner (13..20 x 13..20) is sealed off by two walls
    return load_map(map_json(name="enclosed", walls=[(12, 12, 20, 13), (12, 12, 13, 20)]))


@pytest.fixture
def hazard_map():
    return load_map(
        map_json(name="hazard", bounds=(0, 0, 40, 20), hazards=[static_hazard((20, 10), 3)])
    )


@pytest.fixture
def stochastic_map():
    return load_map(
        map_json(name="stochastic", bounds=(0, 0, 40, 20), hazards=[uniform_hazard((20, 10), 3)])
    )


@pytest.fixture
def open_oracle(open_map):
    return build_oracle(open_map, grid_res=1.0, eta=15.0, cost_max=60)


@pytest.fixture
def wall_oracle(wall_map):
    return build_oracle(wall_map, grid_res=1.0, eta=15.0, cost_max=60)


@pytest.fixture
def hazard_oracle(hazard_map):
    return build_oracle(hazard_map, grid_res=1.0, eta=15.0, cost_max=60)
