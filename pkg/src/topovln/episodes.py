"""Ground-truth graphs, navigation episodes and waypoint training examples."""

import logging
import math
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, Field

from .agent import AgentState, MotionMode, panoramic_scan
from .config import ObstacleConfig
from .errors import InfeasibleEpisodeError
from .obstacle_map import ObstacleMap, obstacle_map_from_cloud
from .predictor_model import TrainingExample
from .radial import LocalPoint, RadialGrid, local_to_polar, world_to_local
from .waypoints import Heatmap, make_target_heatmap
from .world import DOOR_TAG, LANDING_TAG, STAIR_TAG, WALL_TAG, World, downsample_path

logger = logging.getLogger(__name__)

EDGE_LENGTH = 3.0
PATH_SPACING = 0.25
STRAIGHT_TOLERANCE = 30.0

Point = Tuple[float, float]


class GtGraph(BaseModel):
    positions: List[Tuple[float, float, float]] = Field(default_factory=list)
    edges: List[Tuple[int, int]] = Field(default_factory=list)

    def neighbors(self) -> Dict[int, List[int]]:
        out: Dict[int, List[int]] = {i: [] for i in range(len(self.positions))}
        for i, j in self.edges:
            out[i].append(j)
            out[j].append(i)
        return {k: sorted(v) for k, v in out.items()}


class Episode(BaseModel):
    episode_id: int
    world_index: int
    world_seed: int
    start: Point
    start_heading: float
    goal: Point
    instruction: str
    gt_path: List[Point]
    regions: List[str]
    mode: MotionMode = "sliding"


def segment_traversable(world: World, a: Point, b: Point) -> bool:
    length = math.hypot(b[0] - a[0], b[1] - a[1])
    n = max(1, int(math.ceil(length / world.resolution)))
    t = np.linspace(0.0, 1.0, n + 1)
    ix, iy, inside = world.cell_index(a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1]))
    if not inside.all():
        return False
    return bool(world.traversable[ix, iy].all())


def sample_gt_graph(
    world: World,
    seed: int,
    node_spacing: float = 1.0,
    max_nodes: Optional[int] = None,
    edge_length: float = EDGE_LENGTH,
) -> GtGraph:
    """Dart-throwing Poisson-disc nodes over free space; edges are short traversable segments."""
    rng = np.random.default_rng(seed)
    fi, fj = np.nonzero(world.free_space)
    cx, cy = world.cell_center(fi, fj)
    accepted: List[int] = []
    pts = np.empty((0, 2))
    for k in rng.permutation(len(fi)):
        p = np.array([cx[k], cy[k]])
        if len(pts) and np.hypot(*(pts - p).T).min() < node_spacing:
            continue
        accepted.append(int(k))
        pts = np.vstack([pts, p])
        if max_nodes is not None and len(accepted) >= max_nodes:
            break

    positions = [
        (float(cx[k]), float(cy[k]), float(world.elevation_at(cx[k], cy[k]))) for k in accepted
    ]
    edges = []
    for i in range(len(positions)):
        for j in range(i + 1, len(positions)):
            a, b = positions[i][:2], positions[j][:2]
            if math.dist(a, b) <= edge_length and segment_traversable(world, a, b):
                edges.append((i, j))
    return GtGraph(positions=positions, edges=edges)


def _turn_phrase(before: Point, after: Point) -> str:
    angle = math.degrees(math.atan2(after[1], after[0]) - math.atan2(before[1], before[0]))
    angle = (angle + 180.0) % 360.0 - 180.0
    if abs(angle) < STRAIGHT_TOLERANCE:
        return "go straight through the doorway"
    return f"turn {'left' if angle > 0 else 'right'} at the doorway"


def region_sequence(world: World, path: Sequence[Point]) -> List[Tuple[str, int, int]]:
    """Consecutive scene tags along a path with their first and last path index."""
    runs: List[Tuple[str, int, int]] = []
    for k, (x, y) in enumerate(path):
        tag = world.scene_tag(x, y)
        if tag == WALL_TAG:
            continue
        if runs and runs[-1][0] == tag:
            runs[-1] = (tag, runs[-1][1], k)
        else:
            runs.append((tag, k, k))
    return runs


def render_instruction(world: World, path: Sequence[Point]) -> Tuple[str, List[str]]:
    runs = region_sequence(world, path)
    if not runs:
        return "Stop where you are.", []
    tags = [r[0] for r in runs]
    if len(runs) == 1:
        return f"Walk through the {tags[0]}, stop near the far side of the {tags[0]}.", tags

    n = len(path)
    parts = [f"Walk through the {tags[0]}"]
    for idx, (tag, first, last) in enumerate(runs[1:], start=1):
        final = idx == len(runs) - 1
        if tag == DOOR_TAG:
            p0, p1 = path[max(0, first - 4)], path[first]
            q0, q1 = path[last], path[min(n - 1, last + 4)]
            before = (p1[0] - p0[0], p1[1] - p0[1])
            parts.append(_turn_phrase(before, (q1[0] - q0[0], q1[1] - q0[1])))
        elif tag == STAIR_TAG:
            rising = world.elevation_at(*path[last]) >= world.elevation_at(*path[first])
            parts.append("climb the staircase" if rising else "go down the staircase")
        elif tag == LANDING_TAG:
            parts.append("cross the landing")
        elif not final:
            parts.append(f"continue into the {tag}")
        if final:
            parts.append(f"stop near the {tag}" if tag != DOOR_TAG else "stop at the doorway")
    return ", ".join(parts) + ".", tags


def generate_episode(
    world: World,
    seed: int,
    episode_id: int = 0,
    world_index: int = 0,
    min_separation: float = 4.0,
    max_separation: float = 12.0,
    mode: MotionMode = "sliding",
    max_tries: int = 20,
) -> Episode:
    rng = np.random.default_rng(seed)
    fi, fj = np.nonzero(world.free_space)
    if len(fi) == 0:
        raise InfeasibleEpisodeError("world has no free space")
    for attempt in range(max_tries):
        k = int(rng.integers(len(fi)))
        sx, sy = world.cell_center(fi[k], fj[k])
        start = (float(sx), float(sy))
        field = world.geodesic_field(start)
        ok = world.free_space & (field >= min_separation) & (field <= max_separation)
        gi, gj = np.nonzero(ok)
        if len(gi) == 0:
            logger.debug(
                "episode %d: start %s has no goal in range (try %d)", episode_id, start, attempt
            )
            continue
        g = int(rng.integers(len(gi)))
        gx, gy = world.cell_center(gi[g], gj[g])
        goal = (float(gx), float(gy))
        path = world.geodesic_path(start, goal)
        if path is None:
            continue
        gt_path = downsample_path(path, PATH_SPACING)
        instruction, regions = render_instruction(world, gt_path)
        return Episode(
            episode_id=episode_id,
            world_index=world_index,
            world_seed=int(world.seed) if world.seed is not None else -1,
            start=start,
            start_heading=float(rng.integers(24) * 15),
            goal=goal,
            instruction=instruction,
            gt_path=[(round(x, 4), round(y, 4)) for x, y in gt_path],
            regions=regions,
            mode=mode,
        )
    raise InfeasibleEpisodeError(
        f"no start/goal pair within [{min_separation}, {max_separation}] m after {max_tries} tries"
    )


@dataclass(frozen=True)
class LabeledExample:
    world_index: int
    node: int
    heading: float
    observed: ObstacleMap
    truth: ObstacleMap
    neighbors: List[LocalPoint]
    target: Heatmap

    def training_example(self) -> TrainingExample:
        return TrainingExample(self.observed, self.target)

    def to_json(self) -> Dict[str, Any]:
        return {
            "world": self.world_index,
            "node": self.node,
            "heading": self.heading,
            "observed": self.observed.to_raster(),
            "truth": self.truth.to_raster(),
            "neighbors": [[round(p.x, 4), round(p.y, 4)] for p in self.neighbors],
        }


def example_from_json(grid: RadialGrid, data: Dict[str, Any], sigma: float = 1.0) -> LabeledExample:
    neighbors = [LocalPoint(float(x), float(y)) for x, y in data["neighbors"]]
    return LabeledExample(
        world_index=int(data["world"]),
        node=int(data["node"]),
        heading=float(data["heading"]),
        observed=ObstacleMap.from_raster(grid, data["observed"]),
        truth=ObstacleMap.from_raster(grid, data["truth"]),
        neighbors=neighbors,
        target=make_target_heatmap(grid, neighbors, sigma),
    )


def make_training_examples(
    world: World,
    gt: GtGraph,
    grid: RadialGrid,
    obstacle: ObstacleConfig,
    seed: int,
    world_index: int = 0,
    noise_std: float = 0.0,
    sigma: float = 1.0,
) -> List[LabeledExample]:
    """One example per ground-truth node, scanned at a seeded heading."""
    rng = np.random.default_rng(seed)
    band = (obstacle.z_min, obstacle.z_max)
    adjacency = gt.neighbors()
    examples = []
    for node, (x, y, _) in enumerate(gt.positions):
        agent = AgentState(x, y, float(rng.integers(24) * 15))
        cloud = panoramic_scan(world, agent, grid)
        truth = obstacle_map_from_cloud(grid, cloud, band, obstacle.slope_threshold)
        observed = truth
        if noise_std > 0:
            cloud = panoramic_scan(world, agent, grid, noise_std=noise_std, rng=rng)
            observed = obstacle_map_from_cloud(grid, cloud, band, obstacle.slope_threshold)
        neighbors = []
        for other in adjacency[node]:
            local = world_to_local(agent.pose, gt.positions[other][:2])
            if local_to_polar(local).range <= grid.max_range:
                neighbors.append(local)
        examples.append(
            LabeledExample(
                world_index=world_index,
                node=node,
                heading=agent.heading,
                observed=observed,
                truth=truth,
                neighbors=neighbors,
                target=make_target_heatmap(grid, neighbors, sigma),
            )
        )
    return examples


def episode_to_json(episode: Episode) -> Dict[str, Any]:
    return episode.model_dump(mode="json")


def episode_from_json(data: Dict[str, Any]) -> Episode:
    return Episode.model_validate(data)
