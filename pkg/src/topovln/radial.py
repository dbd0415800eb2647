"""Agent-centred polar grid shared by obstacle maps, heatmaps and waypoints.

Bearings are measured in degrees counterclockwise from the agent heading and are
always normalized to [0, 360). The local frame has x pointing forward and y to the left.
"""

import math
from dataclasses import dataclass
from typing import NamedTuple, Tuple

import numpy as np

from .config import GridConfig
from .errors import CellOutOfBoundsError, ConfigError, OutOfRangeError

# Tolerance for float noise at bin edges (k * 0.05 m sampling lands on 0.25 m edges).
EDGE_EPS = 1e-9


class Cell(NamedTuple):
    a: int
    j: int


class PolarPoint(NamedTuple):
    bearing: float
    range: float


class LocalPoint(NamedTuple):
    x: float
    y: float


class Pose(NamedTuple):
    x: float
    y: float
    heading: float


@dataclass(frozen=True)
class RadialGrid:
    num_angles: int = 120
    num_radii: int = 12
    angle_step: float = 3.0
    radial_step: float = 0.25
    max_range: float = 3.0

    def __post_init__(self) -> None:
        if min(self.num_angles, self.num_radii) <= 0:
            raise ConfigError("grid counts must be positive")
        if min(self.angle_step, self.radial_step, self.max_range) <= 0:
            raise ConfigError("grid steps must be positive")
        if not math.isclose(self.num_angles * self.angle_step, 360.0, abs_tol=1e-6):
            raise ConfigError("num_angles * angle_step must equal 360")
        if not math.isclose(self.num_radii * self.radial_step, self.max_range, abs_tol=1e-6):
            raise ConfigError("num_radii * radial_step must equal max_range")

    @classmethod
    def from_config(cls, config: GridConfig) -> "RadialGrid":
        return cls(**config.model_dump())

    @property
    def shape(self) -> Tuple[int, int]:
        return (self.num_angles, self.num_radii)

    def contains(self, c: Cell) -> bool:
        return 0 <= c.a < self.num_angles and 0 <= c.j < self.num_radii

    def flat_index(self, c: Cell) -> int:
        return c.a * self.num_radii + c.j

    def center_bearings(self) -> np.ndarray:
        """Bearing of every angle-bin centre, shape (num_angles,)."""
        return (np.arange(self.num_angles) + 0.5) * self.angle_step

    def center_ranges(self) -> np.ndarray:
        """Range of every radial-bin centre, shape (num_radii,)."""
        return (np.arange(self.num_radii) + 0.5) * self.radial_step

    def center_local_xy(self) -> np.ndarray:
        """Local (x, y) of every cell centre, shape (num_angles, num_radii, 2)."""
        b = np.radians(self.center_bearings())[:, None]
        r = self.center_ranges()[None, :]
        return np.stack([r * np.cos(b), r * np.sin(b)], axis=-1)

    def radial_index(self, ranges: np.ndarray) -> np.ndarray:
        """Vectorized radial bin: (j*step, (j+1)*step], with range 0 in bin 0."""
        j = np.ceil(np.asarray(ranges, dtype=float) / self.radial_step - EDGE_EPS).astype(int) - 1
        return np.maximum(j, 0)

    def angle_index(self, bearings: np.ndarray) -> np.ndarray:
        b = np.mod(np.asarray(bearings, dtype=float), 360.0)
        a = np.floor(b / self.angle_step + EDGE_EPS).astype(int)
        return np.mod(a, self.num_angles)


def normalize_bearing(deg: float) -> float:
    b = math.fmod(deg, 360.0)
    if b < 0:
        b += 360.0
    # fmod can return 360 - tiny which rounds back to 360.0
    return 0.0 if b >= 360.0 else b


def signed_bearing(deg: float) -> float:
    """Map a bearing into (-180, 180]; positive is to the left."""
    b = normalize_bearing(deg)
    return b - 360.0 if b > 180.0 else b


def cell_center(grid: RadialGrid, c: Cell) -> PolarPoint:
    if not grid.contains(c):
        raise CellOutOfBoundsError(f"cell {tuple(c)} outside grid {grid.shape}")
    return PolarPoint((c.a + 0.5) * grid.angle_step, (c.j + 0.5) * grid.radial_step)


def point_to_cell(grid: RadialGrid, p: PolarPoint) -> Cell:
    if p.range < 0:
        raise ValueError(f"negative range {p.range}")
    if p.range > grid.max_range + EDGE_EPS:
        raise OutOfRangeError(f"range {p.range:.3f} m beyond max range {grid.max_range} m")
    a = int(grid.angle_index(np.array([p.bearing]))[0])
    j = int(grid.radial_index(np.array([p.range]))[0])
    return Cell(a, min(j, grid.num_radii - 1))


def polar_to_local(p: PolarPoint) -> LocalPoint:
    rad = math.radians(p.bearing)
    return LocalPoint(p.range * math.cos(rad), p.range * math.sin(rad))


def local_to_polar(p: LocalPoint) -> PolarPoint:
    return PolarPoint(normalize_bearing(math.degrees(math.atan2(p.y, p.x))), math.hypot(p.x, p.y))


def local_to_world(agent_pose: Pose, p: LocalPoint) -> Tuple[float, float]:
    h = math.radians(agent_pose.heading)
    c, s = math.cos(h), math.sin(h)
    return (agent_pose.x + c * p.x - s * p.y, agent_pose.y + s * p.x + c * p.y)


def world_to_local(agent_pose: Pose, world: Tuple[float, float]) -> LocalPoint:
    h = math.radians(agent_pose.heading)
    c, s = math.cos(h), math.sin(h)
    dx, dy = world[0] - agent_pose.x, world[1] - agent_pose.y
    return LocalPoint(c * dx + s * dy, -s * dx + c * dy)
