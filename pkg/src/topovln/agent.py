"""Agent kinematics and panoramic range sensing over a heightfield world."""

import math
from dataclasses import dataclass
from enum import Enum
from typing import Literal, Optional, Tuple

import numpy as np

from .obstacle_map import PointCloud
from .radial import Pose, RadialGrid, normalize_bearing
from .world import World

FORWARD_STEP = 0.25
TURN_STEP = 15.0
SCAN_STEP = 0.05

MotionMode = Literal["sliding", "no_sliding"]


class LowLevelAction(str, Enum):
    FORWARD = "forward"
    TURN_LEFT = "turn_left"
    TURN_RIGHT = "turn_right"
    STOP = "stop"


@dataclass(frozen=True)
class AgentState:
    x: float
    y: float
    heading: float = 0.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "heading", normalize_bearing(self.heading))

    @property
    def pose(self) -> Pose:
        return Pose(self.x, self.y, self.heading)

    @property
    def xy(self) -> Tuple[float, float]:
        return (self.x, self.y)

    def z(self, world: World) -> float:
        return float(world.elevation_at(self.x, self.y))


def panoramic_scan(
    world: World,
    agent: AgentState,
    grid: Optional[RadialGrid] = None,
    noise_std: float = 0.0,
    rng: Optional[np.random.Generator] = None,
) -> PointCloud:
    """Sample the heightfield along one ray per angle bin, every 5 cm out to max range."""
    grid = grid or RadialGrid()
    z0 = agent.z(world)
    count = int(math.floor(grid.max_range / SCAN_STEP + 1e-9))
    ranges = np.arange(1, count + 1) * SCAN_STEP
    bearings = np.radians(grid.center_bearings())
    lx = np.cos(bearings)[:, None] * ranges[None, :]
    ly = np.sin(bearings)[:, None] * ranges[None, :]

    h = math.radians(agent.heading)
    wx = agent.x + math.cos(h) * lx - math.sin(h) * ly
    wy = agent.y + math.sin(h) * lx + math.cos(h) * ly
    z = world.elevation_at(wx, wy) - z0
    if noise_std > 0:
        if rng is None:
            raise ValueError("noise_std > 0 requires an rng")
        z = z + rng.normal(0.0, noise_std, size=z.shape)
    return PointCloud(np.stack([lx.ravel(), ly.ravel(), z.ravel()], axis=1))


def step(
    world: World, agent: AgentState, action: LowLevelAction, mode: MotionMode = "sliding"
) -> Tuple[AgentState, bool]:
    """Apply one low-level action; returns the new state and whether motion was blocked."""
    if action is LowLevelAction.TURN_LEFT:
        return AgentState(agent.x, agent.y, agent.heading + TURN_STEP), False
    if action is LowLevelAction.TURN_RIGHT:
        return AgentState(agent.x, agent.y, agent.heading - TURN_STEP), False
    if action is LowLevelAction.STOP:
        return agent, False

    h = math.radians(agent.heading)
    move = (FORWARD_STEP * math.cos(h), FORWARD_STEP * math.sin(h))
    z0 = agent.z(world)
    hit = world.segment_check(agent.xy, move, z0)
    if hit is None:
        return AgentState(agent.x + move[0], agent.y + move[1], agent.heading), False
    if mode == "no_sliding":
        return agent, True

    gx, gy = world.gradient_at(*hit)
    norm = math.hypot(gx, gy)
    if norm == 0:
        return agent, True
    nx, ny = gx / norm, gy / norm
    along = move[0] * nx + move[1] * ny
    slide = (move[0] - along * nx, move[1] - along * ny)
    if math.hypot(*slide) < 1e-9 or world.segment_check(agent.xy, slide, z0) is not None:
        return agent, True
    return AgentState(agent.x + slide[0], agent.y + slide[1], agent.heading), True
