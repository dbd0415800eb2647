"""Topological graph with visitation records.

Nodes are visited once the agent has stood on them and generated waypoints there; every
other node is an observed-but-unexplored option. Updates follow three rules: revisits do
not regenerate waypoints, new waypoints near existing nodes reuse those nodes, and new
waypoints near each other are collapsed to one.
"""

import heapq
import math
from dataclasses import dataclass
from typing import TYPE_CHECKING, Dict, Iterable, List, Optional, Sequence, Set, Tuple

from pydantic import BaseModel, Field

from .errors import UnknownNodeError
from .obstacle_map import PointCloud
from .radial import Pose, local_to_world

if TYPE_CHECKING:
    from .pipeline import WaypointPipeline

Position = Tuple[float, float, float]

DEFAULT_MERGE_THRESHOLD = 0.5


class Node(BaseModel):
    id: int
    position: Position
    visited: bool = False
    cached_options: Optional[List[int]] = None

    def xy(self) -> Tuple[float, float]:
        return (self.position[0], self.position[1])


class GraphSnapshot(BaseModel):
    nodes: List[Node] = Field(default_factory=list)
    edges: List[Tuple[int, int]] = Field(default_factory=list)


@dataclass(frozen=True)
class WorldWaypoint:
    position: Position
    score: float


@dataclass(frozen=True)
class Observation:
    """A panoramic capture and the pose it was taken from."""

    cloud: PointCloud
    pose: Pose
    z: float


class TopoGraph:
    def __init__(self) -> None:
        self.nodes: Dict[int, Node] = {}
        self._adjacency: Dict[int, Set[int]] = {}

    # -- structure -------------------------------------------------------------

    def add_node(self, position: Sequence[float], visited: bool = False) -> int:
        node_id = len(self.nodes)
        x, y, *rest = position
        z = rest[0] if rest else 0.0
        point = (float(x), float(y), float(z))
        self.nodes[node_id] = Node(id=node_id, position=point, visited=visited)
        self._adjacency[node_id] = set()
        return node_id

    def add_edge(self, i: int, j: int) -> bool:
        self.require(i)
        self.require(j)
        if i == j or j in self._adjacency[i]:
            return False
        self._adjacency[i].add(j)
        self._adjacency[j].add(i)
        return True

    def require(self, node_id: int) -> Node:
        try:
            return self.nodes[node_id]
        except KeyError:
            raise UnknownNodeError(f"node {node_id} not in graph") from None

    def __contains__(self, node_id: object) -> bool:
        return node_id in self.nodes

    def __len__(self) -> int:
        return len(self.nodes)

    @property
    def edges(self) -> List[Tuple[int, int]]:
        return sorted((i, j) for i, nbrs in self._adjacency.items() for j in nbrs if i < j)

    def neighbors(self, node_id: int) -> List[int]:
        self.require(node_id)
        return sorted(self._adjacency[node_id])

    def edge_length(self, i: int, j: int) -> float:
        a, b = self.nodes[i].position, self.nodes[j].position
        return math.hypot(a[0] - b[0], a[1] - b[1])

    def path_length(self, path: Sequence[int]) -> float:
        return sum(self.edge_length(a, b) for a, b in zip(path, path[1:]))

    def nearest_within(self, xy: Tuple[float, float], threshold: float) -> Optional[int]:
        """Nearest node strictly closer than threshold (2-D); ties go to the lower id."""
        best: Optional[Tuple[float, int]] = None
        for node in self.nodes.values():
            d = math.hypot(node.position[0] - xy[0], node.position[1] - xy[1])
            if d < threshold and (best is None or (d, node.id) < best):
                best = (d, node.id)
        return best[1] if best else None

    # -- serialization ---------------------------------------------------------

    def snapshot(self) -> GraphSnapshot:
        return GraphSnapshot(
            nodes=[self.nodes[i].model_copy(deep=True) for i in sorted(self.nodes)],
            edges=self.edges,
        )

    def to_json(self) -> Dict[str, object]:
        return self.snapshot().model_dump(mode="json")

    @classmethod
    def from_snapshot(cls, snapshot: GraphSnapshot) -> "TopoGraph":
        graph = cls()
        for node in sorted(snapshot.nodes, key=lambda n: n.id):
            graph.nodes[node.id] = node.model_copy(deep=True)
            graph._adjacency[node.id] = set()
        for i, j in snapshot.edges:
            graph.add_edge(i, j)
        return graph

    @classmethod
    def from_json(cls, data: Dict[str, object]) -> "TopoGraph":
        return cls.from_snapshot(GraphSnapshot.model_validate(data))

    def copy(self) -> "TopoGraph":
        return TopoGraph.from_snapshot(self.snapshot())


def merging_module(
    graph: TopoGraph,
    new_waypoints: Iterable[WorldWaypoint],
    current: int,
    merge_threshold: float = DEFAULT_MERGE_THRESHOLD,
) -> List[int]:
    """Attach new waypoints to the graph and return the resulting option ids."""
    if merge_threshold <= 0:
        raise ValueError("merge_threshold must be positive")
    graph.require(current)

    survivors: List[WorldWaypoint] = []
    for wp in sorted(new_waypoints, key=lambda w: -w.score):
        if all(
            math.hypot(wp.position[0] - s.position[0], wp.position[1] - s.position[1])
            >= merge_threshold
            for s in survivors
        ):
            survivors.append(wp)

    options: List[int] = []
    for wp in survivors:
        node_id = graph.nearest_within((wp.position[0], wp.position[1]), merge_threshold)
        if node_id is None:
            node_id = graph.add_node(wp.position)
        if node_id == current or node_id in options:
            continue
        graph.add_edge(current, node_id)
        options.append(node_id)
    return options


def graph_update(
    graph: TopoGraph,
    current: int,
    observation: Observation,
    pipeline: "WaypointPipeline",
    merge_threshold: float = DEFAULT_MERGE_THRESHOLD,
) -> TopoGraph:
    node = graph.require(current)
    if node.visited:
        return graph

    node.visited = True
    obstacle_map, elevation = pipeline.obstacle_map(observation.cloud)
    waypoints = pipeline.predict(obstacle_map)
    world_points = []
    for wp in waypoints:
        x, y = local_to_world(observation.pose, wp.local)
        a, j = wp.cell
        dz = elevation.elevation[a, j] if elevation.known[a, j] else 0.0
        world_points.append(WorldWaypoint((x, y, observation.z + float(dz)), wp.score))
    node.cached_options = merging_module(graph, world_points, current, merge_threshold)
    return graph


def shortest_path(graph: TopoGraph, start: int, goal: int) -> Optional[List[int]]:
    """Uniform-cost search over Euclidean edge lengths."""
    graph.require(start)
    graph.require(goal)
    queue: List[Tuple[float, int, Tuple[int, ...]]] = [(0.0, start, (start,))]
    best: Dict[int, float] = {start: 0.0}
    seen: Set[int] = set()
    while queue:
        cost, node, path = heapq.heappop(queue)
        if node in seen:
            continue
        seen.add(node)
        if node == goal:
            return list(path)
        for nxt in graph.neighbors(node):
            if nxt in seen:
                continue
            total = cost + graph.edge_length(node, nxt)
            if total < best.get(nxt, math.inf):
                best[nxt] = total
                heapq.heappush(queue, (total, nxt, path + (nxt,)))
    return None


def graph_distances(graph: TopoGraph, start: int) -> Dict[int, float]:
    """Edge-length distance from start to every reachable node."""
    graph.require(start)
    dist: Dict[int, float] = {start: 0.0}
    queue: List[Tuple[float, int]] = [(0.0, start)]
    while queue:
        cost, node = heapq.heappop(queue)
        if cost > dist.get(node, math.inf):
            continue
        for nxt in graph.neighbors(node):
            total = cost + graph.edge_length(node, nxt)
            if total < dist.get(nxt, math.inf):
                dist[nxt] = total
                heapq.heappush(queue, (total, nxt))
    return dist


def visit_partition(graph: TopoGraph) -> Tuple[List[int], List[int]]:
    visited = sorted(i for i, n in graph.nodes.items() if n.visited)
    unvisited = sorted(i for i, n in graph.nodes.items() if not n.visited)
    return visited, unvisited

