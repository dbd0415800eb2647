"""Binary obstacle maps from panoramic point clouds.

Points are binned onto the radial grid keeping the maximum elevation per cell, then each
ray is walked outward and a cell is marked occupied when the elevation change from the
previous cell, divided by the radial step, exceeds the slope threshold.
"""

from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import CellOutOfBoundsError
from .radial import RadialGrid

Band = Tuple[float, float]

DEFAULT_BAND: Band = (-2.0, 2.0)


@dataclass(frozen=True)
class PointCloud:
    """Points in the agent frame: columns are local x, local y, z relative to the agent foot."""

    points: np.ndarray

    def __post_init__(self) -> None:
        pts = np.asarray(self.points, dtype=float).reshape(-1, 3)
        if not np.all(np.isfinite(pts)):
            raise ValueError("point cloud contains non-finite coordinates")
        object.__setattr__(self, "points", pts)

    @classmethod
    def from_points(cls, points: Sequence[Sequence[float]]) -> "PointCloud":
        return cls(np.asarray(points, dtype=float).reshape(-1, 3))

    def __len__(self) -> int:
        return int(self.points.shape[0])


@dataclass(frozen=True)
class ElevationGrid:
    grid: RadialGrid
    elevation: np.ndarray
    known: np.ndarray

    def to_json(self) -> Dict[str, Any]:
        return {
            "shape": list(self.grid.shape),
            "elevation": [
                [round(float(v), 4) if k else None for v, k in zip(row, krow)]
                for row, krow in zip(self.elevation, self.known)
            ],
        }


@dataclass(frozen=True)
class ObstacleMap:
    grid: RadialGrid
    occupied: np.ndarray

    def __post_init__(self) -> None:
        occ = np.asarray(self.occupied, dtype=bool)
        if occ.shape != self.grid.shape:
            raise ValueError(f"occupancy shape {occ.shape} does not match grid {self.grid.shape}")
        object.__setattr__(self, "occupied", occ)

    @classmethod
    def empty(cls, grid: RadialGrid) -> "ObstacleMap":
        return cls(grid, np.zeros(grid.shape, dtype=bool))

    def to_raster(self) -> List[List[int]]:
        """Angle-major rows of 0/1 values."""
        return self.occupied.astype(int).tolist()

    @classmethod
    def from_raster(cls, grid: RadialGrid, raster: Sequence[Sequence[int]]) -> "ObstacleMap":
        return cls(grid, np.asarray(raster, dtype=bool))

    def rotated(self, shift: int) -> "ObstacleMap":
        return ObstacleMap(self.grid, np.roll(self.occupied, shift, axis=0))

    def as_float(self) -> np.ndarray:
        return self.occupied.astype(np.float32)


def bin_points(grid: RadialGrid, cloud: PointCloud, band: Band = DEFAULT_BAND) -> ElevationGrid:
    z_min, z_max = band
    if not z_min < z_max:
        raise ValueError(f"invalid elevation band {band}")
    elevation = np.zeros(grid.shape, dtype=float)
    known = np.zeros(grid.shape, dtype=bool)
    pts = cloud.points
    if len(pts) == 0:
        return ElevationGrid(grid, elevation, known)

    ranges = np.hypot(pts[:, 0], pts[:, 1])
    keep = (pts[:, 2] >= z_min) & (pts[:, 2] <= z_max) & (ranges <= grid.max_range + 1e-9)
    pts, ranges = pts[keep], ranges[keep]
    if len(pts) == 0:
        return ElevationGrid(grid, elevation, known)

    bearings = np.degrees(np.arctan2(pts[:, 1], pts[:, 0]))
    a = grid.angle_index(bearings)
    j = np.minimum(grid.radial_index(ranges), grid.num_radii - 1)
    flat = a * grid.num_radii + j

    best = np.full(grid.num_angles * grid.num_radii, -np.inf)
    np.maximum.at(best, flat, pts[:, 2])
    hit = np.isfinite(best)
    elevation.reshape(-1)[hit] = best[hit]
    known.reshape(-1)[hit] = True
    return ElevationGrid(grid, elevation, known)


def gradient_filter(eg: ElevationGrid, slope_threshold: float = 1.0) -> ObstacleMap:
    if slope_threshold <= 0:
        raise ValueError("slope_threshold must be positive")
    grid = eg.grid
    effective = np.zeros(grid.shape, dtype=float)
    carried = np.zeros(grid.num_angles, dtype=float)
    # Unknown cells inherit the last known elevation along their ray (0 at the agent foot).
    for j in range(grid.num_radii):
        carried = np.where(eg.known[:, j], eg.elevation[:, j], carried)
        effective[:, j] = carried
    previous = np.concatenate([np.zeros((grid.num_angles, 1)), effective[:, :-1]], axis=1)
    gradient = np.abs(effective - previous) / grid.radial_step
    return ObstacleMap(grid, gradient > slope_threshold)


def obstacle_map_from_cloud(
    grid: RadialGrid,
    cloud: PointCloud,
    band: Band = DEFAULT_BAND,
    slope_threshold: float = 1.0,
) -> ObstacleMap:
    return gradient_filter(bin_points(grid, cloud, band), slope_threshold)


def first_obstacle_index(obstacle_map: ObstacleMap, a: int) -> Optional[int]:
    if not 0 <= a < obstacle_map.grid.num_angles:
        raise CellOutOfBoundsError(f"angle bin {a} outside grid")
    hits = np.flatnonzero(obstacle_map.occupied[a])
    return int(hits[0]) if hits.size else None


def first_obstacle_indices(obstacle_map: ObstacleMap) -> np.ndarray:
    """First occupied radial index per ray; num_radii where the ray is clear."""
    occ = obstacle_map.occupied
    first = np.argmax(occ, axis=1)
    return np.where(occ.any(axis=1), first, occ.shape[1])
