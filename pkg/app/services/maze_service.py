"""Continuous 2D point maze: map documents, geometry and episode dynamics."""
from __future__ import annotations

import logging
import math
import os
from dataclasses import dataclass, replace
from typing import List, Literal, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from app.core.config import MAPS_DIR
from app.core.dist_core import CategoricalDist, convolve, point_mass, uniform_over
from app.core.errors import EpisodeError, MapError, SamplingError

logger = logging.getLogger(__name__)

# Distance kept between the agent and a wall (or the workspace edge) on contact.
CONTACT_EPS = 1e-6

Rect = Tuple[float, float, float, float]
Point = Tuple[float, float]


# ---------------------------------------------------------------------------
# Map document schema
# ---------------------------------------------------------------------------

class CostDocument(BaseModel):
    kind: Literal["static", "uniform"]
    value: Optional[float] = None
    atoms: Optional[List[int]] = None


class HazardDocument(BaseModel):
    center: Tuple[float, float]
    radius: float = Field(gt=0)
    cost: CostDocument


class MapDocument(BaseModel):
    """JSON map document as shipped in ``app/schema/maps``."""

    model_config = ConfigDict(extra="ignore")

    name: str
    bounds: Tuple[float, float, float, float]
    walls: List[Tuple[float, float, float, float]] = []
    hazards: List[HazardDocument] = []
    start_region: Optional[Tuple[float, float, float, float]] = None
    goal_region: Optional[Tuple[float, float, float, float]] = None
    goal_tolerance: float = Field(default=1.0, gt=0)
    a_max: float = Field(default=1.0, gt=0)
    step_len: float = Field(default=1.0, gt=0)


# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CostModel:
    """Per-step hazard cost: a fixed value or a uniform draw from integer atoms."""

    kind: str
    value: float = 0.0
    atoms: Tuple[int, ...] = ()

    def sample(self, rng: np.random.Generator) -> float:
        if self.kind == "static":
            return float(self.value)
        return float(self.atoms[int(rng.integers(len(self.atoms)))])

    def step_distribution(self, delta: float = 1.0) -> CategoricalDist:
        if self.kind == "static":
            return point_mass(self.value, delta)
        return uniform_over(self.atoms, delta)

    @property
    def max_step_cost(self) -> float:
        return float(self.value) if self.kind == "static" else float(max(self.atoms))

    @property
    def mean(self) -> float:
        return float(self.value) if self.kind == "static" else float(np.mean(self.atoms))


@dataclass(frozen=True)
class Hazard:
    center: Point
    radius: float
    cost: CostModel

    def contains(self, p: Sequence[float]) -> bool:
        return math.hypot(p[0] - self.center[0], p[1] - self.center[1]) <= self.radius


@dataclass(frozen=True, eq=False)
class MazeMap:
    """Immutable workspace: bounds, closed wall rectangles and hazard disks."""

    name: str
    bounds: Rect
    walls: np.ndarray
    hazards: Tuple[Hazard, ...]
    goal_tolerance: float = 1.0
    a_max: float = 1.0
    step_len: float = 1.0
    start_region: Optional[Rect] = None
    goal_region: Optional[Rect] = None

    @property
    def width(self) -> float:
        return self.bounds[2] - self.bounds[0]

    @property
    def height(self) -> float:
        return self.bounds[3] - self.bounds[1]

    @property
    def hazard_centers(self) -> np.ndarray:
        return np.array([h.center for h in self.hazards], dtype=np.float64).reshape(-1, 2)

    @property
    def hazard_radii(self) -> np.ndarray:
        return np.array([h.radius for h in self.hazards], dtype=np.float64)


@dataclass(frozen=True)
class EpisodeState:
    """Single-owner episode state; ``rng`` is the episode's seeded cost stream."""

    position: Point
    goal: Point
    step_count: int
    horizon: int
    rng: np.random.Generator


# ---------------------------------------------------------------------------
# Loading
# ---------------------------------------------------------------------------

def _rect_inside(rect: Sequence[float], bounds: Rect) -> bool:
    return (
        bounds[0] <= rect[0] < rect[2] <= bounds[2]
        and bounds[1] <= rect[1] < rect[3] <= bounds[3]
    )


def _cost_model(doc: CostDocument, label: str) -> CostModel:
    if doc.kind == "static":
        if doc.value is None or not math.isfinite(doc.value) or doc.value < 0:
            raise MapError(f"{label}: static cost needs a finite non-negative value")
        return CostModel("static", value=float(doc.value))
    if not doc.atoms or min(doc.atoms) < 0:
        raise MapError(f"{label}: uniform cost needs a non-empty list of non-negative atoms")
    return CostModel("uniform", atoms=tuple(int(a) for a in doc.atoms))


def map_from_document(doc: MapDocument) -> MazeMap:
    bounds = tuple(float(v) for v in doc.bounds)
    if not (bounds[0] < bounds[2] and bounds[1] < bounds[3]):
        raise MapError(f"map {doc.name!r}: bounds must have positive extent")

    for i, wall in enumerate(doc.walls):
        if not _rect_inside(wall, bounds):
            raise MapError(f"map {doc.name!r}: wall {i} is degenerate or outside bounds")

    hazards = []
    for i, h in enumerate(doc.hazards):
        cx, cy = h.center
        r = h.radius
        if not (bounds[0] <= cx - r and cx + r <= bounds[2] and bounds[1] <= cy - r and cy + r <= bounds[3]):
            raise MapError(f"map {doc.name!r}: hazard {i} does not lie within bounds")
        hazards.append(Hazard((float(cx), float(cy)), float(r), _cost_model(h.cost, f"hazard {i}")))

    for label, region in (("start_region", doc.start_region), ("goal_region", doc.goal_region)):
        if region is not None and not _rect_inside(region, bounds):
            raise MapError(f"map {doc.name!r}: {label} is degenerate or outside bounds")

    walls = np.array(doc.walls, dtype=np.float64).reshape(-1, 4)
    walls.setflags(write=False)
    maze = MazeMap(
        name=doc.name,
        bounds=bounds,
        walls=walls,
        hazards=tuple(hazards),
        goal_tolerance=doc.goal_tolerance,
        a_max=doc.a_max,
        step_len=doc.step_len,
        start_region=tuple(doc.start_region) if doc.start_region else None,
        goal_region=tuple(doc.goal_region) if doc.goal_region else None,
    )
    if free_area(maze) <= 0.0:
        raise MapError(f"map {doc.name!r}: walls leave no free space")
    return maze


def load_map(text: str) -> MazeMap:
    """Parse and validate a JSON map document.

    Raises:
        MapError: malformed JSON, schema violation, geometry outside bounds
            or a map without free space.
    """
    try:
        doc = MapDocument.model_validate_json(text)
    except ValidationError as exc:
        raise MapError(f"invalid map document: {exc}") from exc
    maze = map_from_document(doc)
    logger.debug("Loaded map %s: %d walls, %d hazards", maze.name, len(maze.walls), len(maze.hazards))
    return maze


def load_map_file(path: str) -> MazeMap:
    with open(path, "r") as f:
        return load_map(f.read())


def load_bundled_map(name: str) -> MazeMap:
    path = os.path.join(MAPS_DIR, f"{name}.json")
    if not os.path.exists(path):
        raise MapError(f"no bundled map named {name!r}")
    return load_map_file(path)


def resolve_map(ref: str) -> MazeMap:
    """A map file path, or the name of a bundled map."""
    if os.path.exists(ref):
        return load_map_file(ref)
    return load_bundled_map(ref)


# ---------------------------------------------------------------------------
# Geometry
# ---------------------------------------------------------------------------

def free_area(maze: MazeMap) -> float:
    """Exact measure of S_free by coordinate compression over the walls."""
    x0, y0, x1, y1 = maze.bounds
    if len(maze.walls) == 0:
        return (x1 - x0) * (y1 - y0)
    xs = np.unique(np.concatenate([[x0, x1], maze.walls[:, 0], maze.walls[:, 2]]))
    ys = np.unique(np.concatenate([[y0, y1], maze.walls[:, 1], maze.walls[:, 3]]))
    mx = 0.5 * (xs[:-1] + xs[1:])
    my = 0.5 * (ys[:-1] + ys[1:])
    gx, gy = np.meshgrid(mx, my, indexing="ij")
    blocked = np.zeros(gx.shape, dtype=bool)
    for wx0, wy0, wx1, wy1 in maze.walls:
        blocked |= (gx > wx0) & (gx < wx1) & (gy > wy0) & (gy < wy1)
    areas = np.outer(np.diff(xs), np.diff(ys))
    return float(areas[~blocked].sum())


def in_bounds(maze: MazeMap, p: Sequence[float]) -> bool:
    x0, y0, x1, y1 = maze.bounds
    return x0 <= p[0] <= x1 and y0 <= p[1] <= y1


def point_is_free(maze: MazeMap, p: Sequence[float]) -> bool:
    """True when ``p`` is inside the bounds and outside every closed wall."""
    if not in_bounds(maze, p):
        return False
    if len(maze.walls) == 0:
        return True
    w = maze.walls
    inside = (w[:, 0] <= p[0]) & (p[0] <= w[:, 2]) & (w[:, 1] <= p[1]) & (p[1] <= w[:, 3])
    return not bool(inside.any())


def _wall_entry_times(maze: MazeMap, a: np.ndarray, d: np.ndarray) -> np.ndarray:
    """Per-wall parameter t in [0, 1] where a + t*d first touches the wall (inf if never)."""
    walls = maze.walls
    n = walls.shape[0]
    t_enter = np.zeros(n)
    t_exit = np.ones(n)
    hit = np.ones(n, dtype=bool)
    for axis in (0, 1):
        lo = walls[:, axis]
        hi = walls[:, axis + 2]
        if d[axis] == 0.0:
            hit &= (lo <= a[axis]) & (a[axis] <= hi)
            continue
        t_lo = (lo - a[axis]) / d[axis]
        t_hi = (hi - a[axis]) / d[axis]
        t_enter = np.maximum(t_enter, np.minimum(t_lo, t_hi))
        t_exit = np.minimum(t_exit, np.maximum(t_lo, t_hi))
    hit &= t_enter <= t_exit
    return np.where(hit, t_enter, np.inf)


def segment_collides(maze: MazeMap, a: Sequence[float], b: Sequence[float]) -> bool:
    """True iff the closed segment ab touches any closed wall rectangle."""
    if len(maze.walls) == 0:
        return False
    a = np.asarray(a, dtype=np.float64)
    d = np.asarray(b, dtype=np.float64) - a
    return bool(np.isfinite(_wall_entry_times(maze, a, d)).any())


def first_contact(maze: MazeMap, a: Sequence[float], b: Sequence[float]) -> float:
    """Fraction of segment ab travelled before touching a wall or leaving the bounds.

    Returns a value > 1 when the whole segment is clear.
    """
    a = np.asarray(a, dtype=np.float64)
    d = np.asarray(b, dtype=np.float64) - a
    t_hit = math.inf
    if len(maze.walls):
        t_hit = float(_wall_entry_times(maze, a, d).min())
    x0, y0, x1, y1 = maze.bounds
    for axis, lo, hi in ((0, x0, x1), (1, y0, y1)):
        end = a[axis] + d[axis]
        if end > hi:
            t_hit = min(t_hit, (hi - a[axis]) / d[axis])
        elif end < lo:
            t_hit = min(t_hit, (lo - a[axis]) / d[axis])
    return t_hit if t_hit <= 1.0 else math.inf


def clip_action(maze: MazeMap, action: Sequence[float]) -> np.ndarray:
    act = np.asarray(action, dtype=np.float64).reshape(2)
    if not np.all(np.isfinite(act)):
        return np.zeros(2)
    norm = float(np.hypot(act[0], act[1]))
    if norm > maze.a_max:
        act = act * (maze.a_max / norm)
    return act


def move(maze: MazeMap, position: Sequence[float], action: Sequence[float]) -> np.ndarray:
    """Straight-line motion that stops just short of the first contact."""
    a = np.asarray(position, dtype=np.float64)
    d = clip_action(maze, action)
    length = float(np.hypot(d[0], d[1]))
    if length == 0.0:
        return a.copy()
    t = first_contact(maze, a, a + d)
    if not math.isfinite(t):
        return a + d
    return a + d * max(0.0, t - CONTACT_EPS / length)


def hazards_at(maze: MazeMap, p: Sequence[float]) -> List[Hazard]:
    return [h for h in maze.hazards if h.contains(p)]


def _count_in_hazards(maze: MazeMap, points: np.ndarray) -> np.ndarray:
    if not maze.hazards or points.shape[0] == 0:
        return np.zeros(len(maze.hazards), dtype=np.int64)
    diff = points[:, None, :] - maze.hazard_centers[None, :, :]
    inside = np.hypot(diff[..., 0], diff[..., 1]) <= maze.hazard_radii[None, :]
    return inside.sum(axis=0).astype(np.int64)


def polyline_hazard_steps(maze: MazeMap, points: Sequence[Sequence[float]], step_len: float) -> np.ndarray:
    """Per-hazard count of step endpoints along a polyline.

    The polyline is cut into ceil(L / step_len) steps by arc length; the
    final endpoint is the last vertex.
    """
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    if pts.shape[0] < 2:
        return np.zeros(len(maze.hazards), dtype=np.int64)
    seg = np.hypot(*np.diff(pts, axis=0).T)
    arc = np.concatenate([[0.0], np.cumsum(seg)])
    total = float(arc[-1])
    n_steps = math.ceil(total / step_len - 1e-9) if total > 0 else 0
    if n_steps == 0:
        return np.zeros(len(maze.hazards), dtype=np.int64)
    s = np.minimum(np.arange(1, n_steps + 1) * step_len, total)
    endpoints = np.column_stack([np.interp(s, arc, pts[:, 0]), np.interp(s, arc, pts[:, 1])])
    return _count_in_hazards(maze, endpoints)


def hazard_step_count(maze: MazeMap, a: Sequence[float], b: Sequence[float], step_len: float) -> np.ndarray:
    """Per-hazard number of length-``step_len`` steps along ab ending inside the hazard."""
    return polyline_hazard_steps(maze, [a, b], step_len)


def cell_step_distribution(maze: MazeMap, p: Sequence[float], delta: float = 1.0) -> Optional[CategoricalDist]:
    """Cost distribution of one step ending at ``p`` (None outside every hazard)."""
    result = None
    for hazard in hazards_at(maze, p):
        step = hazard.cost.step_distribution(delta)
        result = step if result is None else convolve(result, step)
    return result


# ---------------------------------------------------------------------------
# Sampling and episodes
# ---------------------------------------------------------------------------

def sample_free(
    maze: MazeMap,
    rng: np.random.Generator,
    region: Optional[Rect] = None,
    budget: int = 10_000,
) -> np.ndarray:
    """Uniform point of S_free (optionally restricted to ``region``)."""
    x0, y0, x1, y1 = region if region is not None else maze.bounds
    for _ in range(budget):
        p = np.array([rng.uniform(x0, x1), rng.uniform(y0, y1)])
        if point_is_free(maze, p):
            return p
    raise SamplingError(f"no free point found in {budget} draws on map {maze.name!r}")


def reset_episode(
    maze: MazeMap,
    start: Sequence[float],
    goal: Sequence[float],
    horizon: int,
    seed: int,
) -> EpisodeState:
    if horizon < 1:
        raise EpisodeError("horizon must be positive")
    if not point_is_free(maze, start):
        raise MapError(f"start {tuple(start)} is not in free space")
    return EpisodeState(
        position=(float(start[0]), float(start[1])),
        goal=(float(goal[0]), float(goal[1])),
        step_count=0,
        horizon=int(horizon),
        rng=np.random.default_rng(seed),
    )


def step(state: EpisodeState, maze: MazeMap, action: Sequence[float]) -> Tuple[EpisodeState, float, float, bool]:
    """Advance one step: reward is always -1, cost comes from hazards at the new position."""
    if state.step_count >= state.horizon:
        raise EpisodeError("episode already reached its horizon")
    new_pos = move(maze, state.position, action)
    cost = 0.0
    for hazard in hazards_at(maze, new_pos):
        cost += hazard.cost.sample(state.rng)
    next_state = replace(
        state,
        position=(float(new_pos[0]), float(new_pos[1])),
        step_count=state.step_count + 1,
    )
    reached = math.hypot(new_pos[0] - state.goal[0], new_pos[1] - state.goal[1]) <= maze.goal_tolerance
    done = reached or next_state.step_count >= state.horizon
    return next_state, -1.0, cost, done


def map_to_document(maze: MazeMap) -> MapDocument:
    """Inverse of ``map_from_document`` (used to embed maps in snapshots)."""
    hazards = []
    for h in maze.hazards:
        if h.cost.kind == "static":
            cost = CostDocument(kind="static", value=h.cost.value)
        else:
            cost = CostDocument(kind="uniform", atoms=list(h.cost.atoms))
        hazards.append(HazardDocument(center=h.center, radius=h.radius, cost=cost))
    return MapDocument(
        name=maze.name,
        bounds=maze.bounds,
        walls=[tuple(float(v) for v in wall) for wall in maze.walls],
        hazards=hazards,
        start_region=maze.start_region,
        goal_region=maze.goal_region,
        goal_tolerance=maze.goal_tolerance,
        a_max=maze.a_max,
        step_len=maze.step_len,
    )
