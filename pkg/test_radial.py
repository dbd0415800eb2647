#!/usr/bin/env python3
"""Tests for the agent-centred polar grid."""

import math

import pytest
from pydantic import ValidationError

from src.topovln.config import GridConfig
from src.topovln.errors import CellOutOfBoundsError, ConfigError, OutOfRangeError
from src.topovln.radial import (
    Cell,
    LocalPoint,
    PolarPoint,
    Pose,
    RadialGrid,
    cell_center,
    local_to_polar,
    local_to_world,
    normalize_bearing,
    point_to_cell,
    polar_to_local,
    signed_bearing,
    world_to_local,
)


def test_default_grid_shape(grid):
    assert grid.shape == (120, 12), "Default grid should be 120 angles by 12 radii"
    assert grid.max_range == 3.0, "Default max range should be 3 m"


def test_grid_rejects_inconsistent_products():
    with pytest.raises(ConfigError):
        RadialGrid(num_angles=100)
    with pytest.raises(ConfigError):
        RadialGrid(num_radii=10)
    with pytest.raises(ValidationError):
        GridConfig(angle_step=4.0)


def test_grid_from_config_round_trips():
    grid = RadialGrid.from_config(GridConfig(num_angles=72, angle_step=5.0))
    assert grid.num_angles == 72, "from_config should carry the angle count"
    assert grid.angle_step == 5.0, "from_config should carry the angle step"


@pytest.mark.parametrize(
    "bearing,expected",
    [(0.0, 0.0), (360.0, 0.0), (-90.0, 270.0), (725.0, 5.0), (-0.0, 0.0), (359.5, 359.5)],
)
def test_normalize_bearing(bearing, expected):
    assert normalize_bearing(bearing) == pytest.approx(expected), f"normalize({bearing})"


def test_signed_bearing_is_left_positive():
    assert signed_bearing(90.0) == pytest.approx(90.0), "90° is to the left"
    assert signed_bearing(270.0) == pytest.approx(-90.0), "270° is 90° to the right"
    assert signed_bearing(180.0) == pytest.approx(180.0), "180° maps to +180"


def test_point_to_cell_edges(grid):
    assert point_to_cell(grid, PolarPoint(0.0, 0.0)) == Cell(0, 0), "Origin lands in cell (0, 0)"
    assert point_to_cell(grid, PolarPoint(0.0, 0.25)) == Cell(0, 0), "Radial bins are closed above"
    assert point_to_cell(grid, PolarPoint(0.0, 0.26)) == Cell(0, 1), "Just past 0.25 m is bin 1"
    assert point_to_cell(grid, PolarPoint(0.0, 3.0)) == Cell(0, 11), "Max range is the last bin"
    assert point_to_cell(grid, PolarPoint(3.0, 1.0)) == Cell(1, 3), "3° starts angle bin 1"
    assert point_to_cell(grid, PolarPoint(-1.5, 1.0)) == Cell(119, 3), "Negative bearings wrap"


def test_point_to_cell_errors(grid):
    with pytest.raises(OutOfRangeError):
        point_to_cell(grid, PolarPoint(0.0, 3.01))
    with pytest.raises(ValueError):
        point_to_cell(grid, PolarPoint(0.0, -0.1))


def test_cell_center_round_trip(grid):
    for c in [Cell(0, 0), Cell(57, 6), Cell(119, 11)]:
        assert point_to_cell(grid, cell_center(grid, c)) == c, f"Centre of {c} should map back"
    with pytest.raises(CellOutOfBoundsError):
        cell_center(grid, Cell(120, 0))


def test_polar_local_conversions():
    local = polar_to_local(PolarPoint(90.0, 2.0))
    assert local.x == pytest.approx(0.0, abs=1e-12), "90° points along local y"
    assert local.y == pytest.approx(2.0), "90° points to the left"
    back = local_to_polar(LocalPoint(-1.0, -1.0))
    assert back.bearing == pytest.approx(225.0), "Back-right diagonal is 225°"
    assert back.range == pytest.approx(math.sqrt(2.0))


def test_local_world_frames_are_inverse():
    pose = Pose(1.0, 2.0, 90.0)
    assert local_to_world(pose, LocalPoint(1.0, 0.0)) == pytest.approx((1.0, 3.0)), (
        "Forward at heading 90° is +y"
    )
    for point in [(3.0, -1.0), (0.5, 0.5), (-2.0, 4.0)]:
        local = world_to_local(pose, point)
        assert local_to_world(pose, local) == pytest.approx(point), "Frames should invert"
