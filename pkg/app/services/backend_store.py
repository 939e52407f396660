"""Backend snapshots: a versioned ``.npz`` archive with a JSON header."""
from __future__ import annotations

import json
import logging
import os
from typing import Optional

import numpy as np

from app.core.errors import SnapshotError
from app.services.maze_service import MapDocument, MazeMap, map_from_document, map_to_document
from app.services.oracle_backend import OracleBackend, build_oracle
from app.services.tabular_backend import TabularBackend, TabularConfig
from app.services.value_backend import ValueBackend

logger = logging.getLogger(__name__)

SNAPSHOT_VERSION = 2

_TABLES = (
    "goal_ids",
    "expected",
    "policy",
    "cost_keys",
    "cost_offsets",
    "cost_first",
    "cost_values",
    "kl_trace",
    "w1_trace",
)


def save_backend(backend: ValueBackend, path: str) -> None:
    header = {
        "version": SNAPSHOT_VERSION,
        "kind": backend.kind,
        "grid_res": backend.grid_res,
        "eta": backend.eta,
        "cost_max": backend.cost_max,
        "reward_support": list(backend.reward_support),
        "cost_support": list(backend.cost_support),
        "map": map_to_document(backend.maze).model_dump(mode="json"),
    }
    arrays = {}
    if isinstance(backend, TabularBackend):
        header["tabular"] = {
            "n_atoms": backend.config.n_atoms,
            "tolerance": backend.config.tolerance,
            "max_sweeps": backend.config.max_sweeps,
            "batch": backend.config.batch,
        }
        arrays = {name: getattr(backend, name) for name in _TABLES}
    elif not isinstance(backend, OracleBackend):
        raise SnapshotError(f"cannot snapshot backend kind {backend.kind!r}")

    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    with open(path, "wb") as f:
        np.savez_compressed(f, header=np.array(json.dumps(header, sort_keys=True)), **arrays)
    logger.info("Saved %s backend snapshot to %s", backend.kind, path)


def load_backend(path: str) -> ValueBackend:
    """Restore a backend written by ``save_backend``.

    Raises:
        SnapshotError: unreadable archive, bad header or unsupported version.
    """
    try:
        with np.load(path, allow_pickle=False) as data:
            header = json.loads(str(data["header"]))
            tables = {name: data[name] for name in _TABLES if name in data.files}
    except (OSError, ValueError, KeyError) as exc:
        raise SnapshotError(f"cannot read backend snapshot {path}: {exc}") from exc

    if header.get("version") != SNAPSHOT_VERSION:
        raise SnapshotError(f"unsupported snapshot version {header.get('version')!r}")
    try:
        maze = map_from_document(MapDocument.model_validate(header["map"]))
        kind = header["kind"]
        if kind == "oracle":
            return build_oracle(maze, header["grid_res"], header["eta"], header["cost_max"])
        if kind == "tabular":
            config = TabularConfig(
                eta=header["eta"],
                grid_res=header["grid_res"],
                cost_max=header["cost_max"],
                **header["tabular"],
            )
            missing = [name for name in _TABLES if name not in tables]
            if missing:
                raise SnapshotError(f"snapshot lacks tables {missing}")
            return TabularBackend(maze, config, **tables)
    except (KeyError, TypeError) as exc:
        raise SnapshotError(f"malformed snapshot header: {exc}") from exc
    raise SnapshotError(f"unknown backend kind {kind!r}")


def resolve_backend(ref: str, maze: Optional[MazeMap] = None) -> ValueBackend:
    """``"oracle"`` builds an oracle for ``maze``; anything else is a snapshot path."""
    if ref == "oracle":
        if maze is None:
            raise SnapshotError("an oracle backend needs a map")
        return build_oracle(maze)
    backend = load_backend(ref)
    if maze is not None and backend.maze.name != maze.name:
        logger.warning("Backend %s was built for map %s, not %s", ref, backend.maze.name, maze.name)
    return backend
