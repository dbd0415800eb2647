"""Turn-then-move execution of graph targets as low-level actions."""

import math
from dataclasses import dataclass, field
from typing import List, Tuple

from .agent import FORWARD_STEP, TURN_STEP, AgentState, LowLevelAction, MotionMode, step
from .errors import DisconnectedError
from .radial import local_to_polar, signed_bearing, world_to_local
from .topograph import TopoGraph, shortest_path
from .world import World

MAX_TURNS = int(round(180.0 / TURN_STEP))


@dataclass
class NavigationResult:
    state: AgentState
    path: List[int]
    actions: List[LowLevelAction] = field(default_factory=list)
    collisions: int = 0
    forward_count: int = 0
    poses: List[Tuple[float, float]] = field(default_factory=list)
    budget_exhausted: bool = False


def turn_count(bearing: float) -> int:
    """Signed number of 15° turns nearest a bearing; positive turns left."""
    n = int(math.floor(signed_bearing(bearing) / TURN_STEP + 0.5))
    return max(-MAX_TURNS, min(MAX_TURNS, n))


def forward_count(distance: float) -> int:
    return int(math.floor(distance / FORWARD_STEP + 0.5))


def navigate_to(
    world: World,
    agent: AgentState,
    graph: TopoGraph,
    current: int,
    target: int,
    mode: MotionMode = "sliding",
    budget: int = 500,
) -> NavigationResult:
    """Follow the shortest graph path from ``current`` to ``target``.

    Each hop turns to the nearest multiple of 15° toward the next node, then moves forward
    the rounded number of 0.25 m steps measured from the pose after turning. The residual
    heading error is not corrected within a hop.
    """
    path = shortest_path(graph, current, target)
    if path is None:
        raise DisconnectedError(f"node {target} is not reachable from node {current}")

    result = NavigationResult(state=agent, path=path)

    def act(action: LowLevelAction) -> bool:
        if len(result.actions) >= budget:
            result.budget_exhausted = True
            return False
        result.state, collided = step(world, result.state, action, mode)
        result.actions.append(action)
        if action is LowLevelAction.FORWARD:
            result.forward_count += 1
            result.collisions += int(collided)
            result.poses.append(result.state.xy)
        return True

    for node_id in path[1:]:
        goal = graph.nodes[node_id].xy()
        n = turn_count(local_to_polar(world_to_local(result.state.pose, goal)).bearing)
        turn = LowLevelAction.TURN_LEFT if n > 0 else LowLevelAction.TURN_RIGHT
        for _ in range(abs(n)):
            if not act(turn):
                return result
        distance = math.hypot(goal[0] - result.state.x, goal[1] - result.state.y)
        for _ in range(forward_count(distance)):
            if not act(LowLevelAction.FORWARD):
                return result
    return result
