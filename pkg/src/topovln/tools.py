"""Navigation tools exposed over MCP."""

import json
import logging
from typing import Any, Dict, List, Optional

from mcp.types import CallToolResult, TextContent, Tool

from .config import RunConfig, load_run_config
from .episodes import generate_episode
from .errors import TopoVlnError
from .harness import inspect_location
from .navigator import report_for, run_episode
from .obstacle_map import ObstacleMap
from .pipeline import WaypointPipeline
from .planners import PLANNER_KINDS, make_planner
from .world import World, generate_world

POSE_PROPERTIES: Dict[str, Any] = {
    "world_seed": {"type": "integer", "description": "Seed of the generated world"},
    "x": {"type": "number", "description": "World x coordinate in metres"},
    "y": {"type": "number", "description": "World y coordinate in metres"},
    "heading": {
        "type": "number",
        "description": "Heading in degrees, counter-clockwise",
        "default": 0,
    },
}

TOOL_DEFINITIONS: List[Dict[str, Any]] = [
    {
        "name": "inspect_location",
        "category": "perception",
        "description": "Scan a pose in a generated world and return its obstacle map and waypoints",
        "inputSchema": {
            "type": "object",
            "properties": POSE_PROPERTIES,
            "required": ["world_seed", "x", "y"],
            "additionalProperties": False,
        },
    },
    {
        "name": "predict_waypoints",
        "category": "perception",
        "description": "Predict waypoints from a radial obstacle raster (rows are angle bins)",
        "inputSchema": {
            "type": "object",
            "properties": {
                "obstacle_map": {
                    "type": "array",
                    "items": {"type": "array", "items": {"type": "integer"}},
                },
            },
            "required": ["obstacle_map"],
            "additionalProperties": False,
        },
    },
    {
        "name": "run_episode",
        "category": "navigation",
        "description": "Generate an episode in a seeded world and run it with an offline planner",
        "inputSchema": {
            "type": "object",
            "properties": {
                "world_seed": {"type": "integer"},
                "episode_seed": {"type": "integer", "default": 0},
                "planner": {
                    "type": "string",
                    "enum": ["oracle", "greedy", "heuristic"],
                    "default": "oracle",
                },
            },
            "required": ["world_seed"],
            "additionalProperties": False,
        },
    },
]


def _text(payload: Any, is_error: bool = False) -> CallToolResult:
    text = payload if isinstance(payload, str) else json.dumps(payload, indent=2, sort_keys=True)
    return CallToolResult(content=[TextContent(type="text", text=text)], isError=is_error)


class NavigatorTools:
    """Handles navigation tools for the MCP server."""

    def __init__(self, config: Optional[RunConfig] = None) -> None:
        self.config = config or load_run_config()
        self.pipeline = WaypointPipeline.from_config(self.config)
        self._worlds: Dict[int, World] = {}

    def world(self, seed: int) -> World:
        if seed not in self._worlds:
            self._worlds[seed] = generate_world(
                seed,
                self.config.world,
                self.config.obstacle.slope_threshold,
                self.config.grid.radial_step,
            )
        return self._worlds[seed]

    def get_tools(self) -> List[Tool]:
        return [
            Tool(name=t["name"], description=t["description"], inputSchema=t["inputSchema"])
            for t in TOOL_DEFINITIONS
        ]

    def get_available_tools_summary(self) -> Dict[str, Any]:
        categories: Dict[str, List[Dict[str, str]]] = {}
        for t in TOOL_DEFINITIONS:
            categories.setdefault(t["category"], []).append(
                {"name": t["name"], "description": t["description"]}
            )
        return {
            "total_tools": len(TOOL_DEFINITIONS),
            "categories": categories,
            "planners": PLANNER_KINDS,
        }

    async def call_tool(self, name: str, arguments: Dict[str, Any]) -> CallToolResult:
        handler = getattr(self, f"_tool_{name}", None)
        if handler is None:
            return _text(f"Tool '{name}' not found", is_error=True)
        try:
            return _text(await handler(**arguments))
        except (TopoVlnError, ValueError, TypeError) as exc:
            logging.exception(f"Error executing tool '{name}' with arguments {arguments}")
            return _text(f"Error executing {name}: {exc}", is_error=True)

    async def _tool_inspect_location(
        self, world_seed: int, x: float, y: float, heading: float = 0.0
    ) -> Dict[str, Any]:
        return inspect_location(self.config, self.world(world_seed), x, y, heading, self.pipeline)

    async def _tool_predict_waypoints(self, obstacle_map: List[List[int]]) -> List[Dict[str, Any]]:
        grid = self.pipeline.grid
        rows_ok = len(obstacle_map) == grid.num_angles
        if not rows_ok or any(len(r) != grid.num_radii for r in obstacle_map):
            raise ValueError(f"obstacle_map must be {grid.num_angles} x {grid.num_radii}")
        return self.pipeline.predict(ObstacleMap.from_raster(grid, obstacle_map)).to_json()

    async def _tool_run_episode(
        self, world_seed: int, episode_seed: int = 0, planner: str = "oracle"
    ) -> Dict[str, Any]:
        if planner not in ("oracle", "greedy", "heuristic"):
            raise ValueError(f"planner must be oracle, greedy or heuristic, not {planner!r}")
        world = self.world(world_seed)
        data = self.config.data
        episode = generate_episode(
            world,
            episode_seed,
            min_separation=data.min_separation,
            max_separation=data.max_separation,
            mode=self.config.sim.mode,
        )
        policy = make_planner(
            self.config.planner.model_copy(update={"kind": planner}),
            goal=episode.goal,
            success_radius=self.config.sim.success_radius,
            distance=lambda p: world.geodesic(p, episode.goal),
        )
        record = await run_episode(world, episode, self.config, policy, self.pipeline)
        report = report_for(world, episode, record, self.config)
        return {
            "instruction": episode.instruction,
            "start": episode.start,
            "goal": episode.goal,
            "node_trajectory": record.node_trajectory,
            "stop_reason": record.stop_reason,
            "metrics": report.metrics.model_dump(mode="json"),
        }
