"""Heatmaps, reachability masking and non-maximum suppression."""

import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Sequence

import numpy as np

from .errors import OutOfRangeError
from .obstacle_map import ObstacleMap, first_obstacle_indices
from .radial import Cell, LocalPoint, RadialGrid, local_to_polar, point_to_cell


@dataclass(frozen=True)
class Heatmap:
    grid: RadialGrid
    value: np.ndarray

    def __post_init__(self) -> None:
        v = np.asarray(self.value, dtype=float)
        if v.shape != self.grid.shape:
            raise ValueError(f"heatmap shape {v.shape} does not match grid {self.grid.shape}")
        object.__setattr__(self, "value", v)

    @classmethod
    def zeros(cls, grid: RadialGrid) -> "Heatmap":
        return cls(grid, np.zeros(grid.shape))

    def at(self, c: Cell) -> float:
        return float(self.value[c.a, c.j])


@dataclass(frozen=True)
class Waypoint:
    cell: Cell
    local: LocalPoint
    score: float

    def to_json(self) -> Dict[str, Any]:
        return {
            "cell": [self.cell.a, self.cell.j],
            "local": [round(self.local.x, 4), round(self.local.y, 4)],
            "score": round(self.score, 6),
        }


@dataclass(frozen=True)
class WaypointSet:
    waypoints: List[Waypoint] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.waypoints)

    def __iter__(self):  # type: ignore[no-untyped-def]
        return iter(self.waypoints)

    def local_points(self) -> np.ndarray:
        points = [[w.local.x, w.local.y] for w in self.waypoints]
        return np.array(points, dtype=float).reshape(-1, 2)

    def to_json(self) -> List[Dict[str, Any]]:
        return [w.to_json() for w in self.waypoints]


def reachability_mask(obstacle_map: ObstacleMap, logits: Heatmap) -> Heatmap:
    """Mask every cell at or beyond the first obstacle of its ray."""
    if obstacle_map.grid != logits.grid:
        raise ValueError("obstacle map and heatmap grids differ")
    first = first_obstacle_indices(obstacle_map)
    j = np.arange(logits.grid.num_radii)[None, :]
    blocked = (j >= first[:, None]) | obstacle_map.occupied
    return Heatmap(logits.grid, np.where(blocked, -np.inf, logits.value))


def nms_select(
    masked: Heatmap, k: int = 5, nms_radius: float = 1.0, min_score: float = 0.25
) -> WaypointSet:
    if k < 1:
        raise ValueError("k must be at least 1")
    if nms_radius <= 0:
        raise ValueError("nms_radius must be positive")
    grid = masked.grid
    centers = grid.center_local_xy().reshape(-1, 2)
    scores = masked.value.reshape(-1).copy()
    live = np.isfinite(scores) & (scores >= min_score)
    # Stable sort keeps lower flat index (smaller angle bin) first among equal scores.
    order = np.argsort(-np.where(live, scores, -np.inf), kind="stable")

    chosen: List[Waypoint] = []
    for idx in order:
        if len(chosen) >= k:
            break
        if not live[idx]:
            continue
        a, j = divmod(int(idx), grid.num_radii)
        x, y = centers[idx]
        chosen.append(Waypoint(Cell(a, j), LocalPoint(float(x), float(y)), float(scores[idx])))
        live &= np.hypot(centers[:, 0] - x, centers[:, 1] - y) >= nms_radius
    return WaypointSet(chosen)


# Orders cells of one ray behind the ray's clear range, far cells first.
_WITHIN_RAY = 1e-3


def geometric_scores(obstacle_map: ObstacleMap, mask: bool = True) -> Heatmap:
    """Score every cell by the range of the farthest unmasked cell on its ray.

    A small share of the cell's own range breaks ties inside a ray toward its far end.
    Without the mask every cell counts as unmasked, so each ray reaches max range.
    """
    grid = obstacle_map.grid
    ranges = grid.center_ranges()
    if mask:
        first = first_obstacle_indices(obstacle_map)
        clear = np.where(first > 0, ranges[np.maximum(first - 1, 0)], 0.0)
    else:
        clear = np.full(grid.num_angles, ranges[-1])
    return Heatmap(grid, clear[:, None] + _WITHIN_RAY * ranges[None, :])


def geometric_predict(
    obstacle_map: ObstacleMap,
    k: int = 5,
    nms_radius: float = 1.0,
    min_score: float = 0.25,
    mask: bool = True,
) -> WaypointSet:
    scores = geometric_scores(obstacle_map, mask)
    if mask:
        scores = reachability_mask(obstacle_map, scores)
    return nms_select(scores, k, nms_radius, min_score)


def make_target_heatmap(
    grid: RadialGrid, gt_neighbors: Sequence[LocalPoint], sigma: float = 1.0
) -> Heatmap:
    """Sum of unit-peak Gaussians, one per neighbour, wrapping along the angle axis."""
    value = np.zeros(grid.shape)
    a_idx = np.arange(grid.num_angles)[:, None]
    j_idx = np.arange(grid.num_radii)[None, :]
    for p in gt_neighbors:
        polar = local_to_polar(LocalPoint(*p))
        if polar.range > grid.max_range + 1e-9:
            raise OutOfRangeError(f"neighbour at {polar.range:.3f} m beyond max range")
        c = point_to_cell(grid, polar)
        da = np.abs(a_idx - c.a)
        da = np.minimum(da, grid.num_angles - da)
        dj = j_idx - c.j
        value += np.exp(-(da**2 + dj**2) / (2.0 * sigma**2))
    return Heatmap(grid, value)


def pairwise_min_separation(points: np.ndarray) -> float:
    if len(points) < 2:
        return math.inf
    diff = points[:, None, :] - points[None, :, :]
    d = np.hypot(diff[..., 0], diff[..., 1])
    return float(d[np.triu_indices(len(points), 1)].min())
