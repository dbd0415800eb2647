#!/usr/bin/env python3
"""Tests for ground-truth graphs, episode sampling and training examples."""

import math

import pytest

from src.topovln.config import ObstacleConfig, WorldConfig
from src.topovln.episodes import (
    episode_from_json,
    episode_to_json,
    example_from_json,
    generate_episode,
    make_training_examples,
    render_instruction,
    sample_gt_graph,
)
from src.topovln.errors import InfeasibleEpisodeError
from src.topovln.world import generate_world


@pytest.fixture(scope="module")
def two_rooms():
    return generate_world(5, WorldConfig(rooms_x=2, rooms_y=1))


def test_gt_graph_spacing_and_edges(two_rooms):
    gt = sample_gt_graph(two_rooms, seed=1, node_spacing=1.0, max_nodes=12)
    assert 0 < len(gt.positions) <= 12, "The node budget is respected"
    for i, a in enumerate(gt.positions):
        for b in gt.positions[i + 1 :]:
            assert math.dist(a[:2], b[:2]) >= 1.0, "Nodes keep the Poisson-disc spacing"
    for i, j in gt.edges:
        assert math.dist(gt.positions[i][:2], gt.positions[j][:2]) <= 3.0, "Edges are short"
    assert sample_gt_graph(two_rooms, seed=1, max_nodes=12) == gt, "Sampling is seeded"


def test_episode_geometry(two_rooms):
    episode = generate_episode(
        two_rooms, seed=4, episode_id=7, min_separation=2.0, max_separation=8.0
    )
    d = two_rooms.geodesic(episode.start, episode.goal)
    assert 2.0 - 0.1 <= d <= 8.0 + 0.1, f"Geodesic separation {d:.2f} should be in range"
    assert episode.gt_path[0] == pytest.approx(episode.start, abs=1e-4), "Paths start at the start"
    assert episode.gt_path[-1] == pytest.approx(episode.goal, abs=1e-4), "Paths end at the goal"
    assert episode.instruction.startswith("Walk through the"), "Instructions open with a room"
    assert episode.start_heading % 15 == 0, "Start headings are multiples of 15°"
    assert episode_from_json(episode_to_json(episode)) == episode, "JSON form is lossless"


def test_impossible_separation_is_reported(two_rooms):
    with pytest.raises(InfeasibleEpisodeError):
        generate_episode(two_rooms, seed=0, min_separation=50.0, max_separation=60.0, max_tries=3)


def test_instruction_mentions_doorways(two_rooms):
    episode = generate_episode(two_rooms, seed=2, min_separation=5.0, max_separation=8.0)
    text, regions = render_instruction(two_rooms, episode.gt_path)
    assert text == episode.instruction, "Rendering is deterministic"
    if "doorway" in regions:
        assert "doorway" in text, "Crossing a door is described"
    assert text.endswith("."), "Instructions are sentences"


def test_training_examples(two_rooms, grid):
    gt = sample_gt_graph(two_rooms, seed=1, max_nodes=5)
    examples = make_training_examples(two_rooms, gt, grid, ObstacleConfig(), seed=3)
    assert len(examples) == len(gt.positions), "One example per ground-truth node"
    for ex in examples:
        assert ex.observed.grid == grid and ex.target.value.shape == grid.shape
        in_range = all(math.hypot(*p) <= grid.max_range for p in ex.neighbors)
        assert in_range, "Neighbours are in range"
        again = example_from_json(grid, ex.to_json())
        assert again.node == ex.node and (again.truth.occupied == ex.truth.occupied).all()
