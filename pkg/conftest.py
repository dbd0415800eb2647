"""Shared fixtures: small hand-built heightfield worlds."""

import numpy as np
import pytest

from src.topovln.radial import RadialGrid
from src.topovln.world import World

RESOLUTION = 0.05
ORIGIN = (-4.0, -4.0)
SIZE = 160


def cell_centres() -> tuple:
    c = ORIGIN[0] + (np.arange(SIZE) + 0.5) * RESOLUTION
    return np.meshgrid(c, c, indexing="ij")


def make_world(heightfield: np.ndarray) -> World:
    return World(heightfield, resolution=RESOLUTION, origin=ORIGIN)


@pytest.fixture
def grid() -> RadialGrid:
    return RadialGrid()


@pytest.fixture
def flat_world() -> World:
    return make_world(np.zeros((SIZE, SIZE)))


@pytest.fixture
def wall_world() -> World:
    """Flat 8 x 8 m floor with a 0.3 x 0.2 m block of wall about 1 m ahead of the origin."""
    X, Y = cell_centres()
    hf = np.zeros((SIZE, SIZE))
    hf[(X >= 0.85) & (X <= 1.15) & (Y >= -0.1) & (Y <= 0.1)] = 1.5
    return make_world(hf)


@pytest.fixture
def long_wall_world() -> World:
    """Floor for x < 0.5 and a wall face running the full length of the y axis."""
    X, _ = cell_centres()
    hf = np.where(X >= 0.5, 1.5, 0.0)
    return make_world(hf)
