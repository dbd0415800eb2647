#!/usr/bin/env python3
"""Tests for point binning, the gradient filter and scans of small worlds."""

import numpy as np
import pytest

from src.topovln.agent import AgentState, panoramic_scan
from src.topovln.errors import CellOutOfBoundsError
from src.topovln.obstacle_map import (
    ObstacleMap,
    PointCloud,
    bin_points,
    first_obstacle_index,
    first_obstacle_indices,
    gradient_filter,
    obstacle_map_from_cloud,
)


def test_empty_cloud_is_all_free(grid):
    eg = bin_points(grid, PointCloud.from_points([]))
    assert not eg.known.any(), "No cell should be observed"
    occ = gradient_filter(eg)
    assert not occ.occupied.any(), "An unobserved scene has no obstacles"
    assert first_obstacle_index(occ, 0) is None, "Clear rays have no first obstacle"


def test_bin_keeps_maximum_elevation(grid):
    cloud = PointCloud.from_points([[1.0, 0.0, 0.1], [0.95, 0.01, 0.2], [1.0, 0.0, -0.3]])
    eg = bin_points(grid, cloud)
    assert eg.known[0, 3], "Points at 1 m straight ahead fall in cell (0, 3)"
    assert eg.elevation[0, 3] == pytest.approx(0.2), "Cells keep the highest point"


def test_band_and_range_filtering(grid):
    cloud = PointCloud.from_points([[1.0, 0.0, 5.0], [3.5, 0.0, 0.5], [0.0, 1.0, -3.0]])
    eg = bin_points(grid, cloud, (-2.0, 2.0))
    assert not eg.known.any(), "Points outside the band or beyond max range are dropped"
    with pytest.raises(ValueError):
        bin_points(grid, cloud, (1.0, -1.0))


def test_step_up_marks_only_the_jump(grid):
    occ = obstacle_map_from_cloud(grid, PointCloud.from_points([[1.0, 0.0, 0.5]]))
    assert occ.occupied[0, 3], "A 0.5 m rise over one radial step is an obstacle"
    assert occ.occupied.sum() == 1, "Cells behind the jump inherit its elevation"
    assert first_obstacle_index(occ, 0) == 3, "The first obstacle is the jump cell"


def test_gentle_slope_is_free(grid):
    occ = obstacle_map_from_cloud(grid, PointCloud.from_points([[1.0, 0.0, 0.2]]))
    assert not occ.occupied.any(), "A gradient of 0.8 is below the threshold"
    cloud = PointCloud.from_points([[1.0, 0.0, 0.2]])
    steep = obstacle_map_from_cloud(grid, cloud, slope_threshold=0.5)
    assert steep.occupied[0, 3], "Lowering the threshold turns the same step into an obstacle"


def test_first_obstacle_indices_default(grid):
    occ = ObstacleMap.empty(grid)
    occ.occupied[5, 7] = True
    first = first_obstacle_indices(occ)
    assert first[5] == 7, "Blocked rays report their first occupied index"
    assert first[0] == grid.num_radii, "Clear rays report num_radii"
    with pytest.raises(CellOutOfBoundsError):
        first_obstacle_index(occ, 120)


def test_raster_round_trip(grid):
    occ = ObstacleMap.empty(grid)
    occ.occupied[3, 4] = True
    again = ObstacleMap.from_raster(grid, occ.to_raster())
    assert np.array_equal(again.occupied, occ.occupied), "Raster form should be lossless"
    with pytest.raises(ValueError):
        ObstacleMap.from_raster(grid, [[0, 1]])


def test_wall_ahead_blocks_front_bins(grid, wall_world):
    cloud = panoramic_scan(wall_world, AgentState(0.0, 0.0, 0.0), grid)
    occ = obstacle_map_from_cloud(grid, cloud)
    blocked = {a: first_obstacle_index(occ, a) for a in range(grid.num_angles)}
    for a in (118, 119, 0, 1):
        assert blocked[a] == 3, f"Bin {a} should hit the wall in radial bin 3"
    others = [a for a, j in blocked.items() if j is not None and a not in (118, 119, 0, 1)]
    assert others == [], f"Only the four front bins should be blocked, got {others}"


def test_scan_noise_requires_rng(grid, flat_world):
    with pytest.raises(ValueError):
        panoramic_scan(flat_world, AgentState(0.0, 0.0), grid, noise_std=0.1)
    noisy = panoramic_scan(
        flat_world, AgentState(0.0, 0.0), grid, noise_std=0.01, rng=np.random.default_rng(0)
    )
    assert len(noisy) == grid.num_angles * 60, "One sample every 5 cm out to 3 m on every ray"
