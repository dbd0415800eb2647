"""Closed-loop episode runner: scan, map, update the graph, plan, execute."""

import asyncio
import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, Field

from .agent import AgentState, panoramic_scan
from .config import RunConfig
from .controller import navigate_to
from .episodes import Episode
from .errors import PlannerTransportError, TopoVlnError
from .llm_client import ChatCompletionsClient
from .metrics import EpisodeReport, nav_metrics
from .pipeline import WaypointPipeline
from .planners import PlannerPolicy, make_planner, validate_response
from .prompting import GoTo, build_context
from .topograph import Observation, TopoGraph, graph_update
from .world import World

logger = logging.getLogger(__name__)

Point = Tuple[float, float]


class EpisodeRecord(BaseModel):
    episode_id: int
    world_index: int
    trajectory: List[Point] = Field(default_factory=list)
    node_trajectory: List[int] = Field(default_factory=list)
    stop: Point = (0.0, 0.0)
    collisions: int = 0
    forward_count: int = 0
    planner_steps: int = 0
    revisits: int = 0
    flagged: bool = False
    flag_reason: Optional[str] = None
    stop_reason: str = "stop"
    graph: Dict[str, Any] = Field(default_factory=dict)


class EpisodeLog:
    """Append-only JSONL audit log for one episode."""

    def __init__(self, path: Optional[Path], redact: Any = None):
        self.path = path
        self._redact = redact or (lambda s: s)
        if path is not None:
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text("")

    def write(self, record: Dict[str, Any]) -> None:
        if self.path is None:
            return
        line = self._redact(json.dumps(record, sort_keys=True))
        with self.path.open("a") as fh:
            fh.write(line + "\n")


def _round(p: Sequence[float]) -> Point:
    return (round(float(p[0]), 4), round(float(p[1]), 4))


async def run_episode(
    world: World,
    episode: Episode,
    config: RunConfig,
    planner: PlannerPolicy,
    pipeline: WaypointPipeline,
    log_path: Optional[Path] = None,
    redact: Any = None,
) -> EpisodeRecord:
    log = EpisodeLog(log_path, redact)
    seed = np.random.SeedSequence([episode.world_seed & 0xFFFFFFFF, episode.episode_id])
    rng = np.random.default_rng(seed)
    state = AgentState(episode.start[0], episode.start[1], episode.start_heading)
    graph = TopoGraph()
    current = graph.add_node((state.x, state.y, state.z(world)))
    record = EpisodeRecord(
        episode_id=episode.episode_id,
        world_index=episode.world_index,
        trajectory=[_round(state.xy)],
        node_trajectory=[current],
    )
    remaining = config.budgets.low_level_actions
    record.stop_reason = "step_budget"

    for step_index in range(config.budgets.planner_steps):
        cloud = panoramic_scan(world, state, pipeline.grid, config.sim.noise_std, rng)
        graph_update(
            graph, current, Observation(cloud, state.pose, state.z(world)), pipeline,
            config.graph.merge_threshold,
        )
        ctx = build_context(
            graph, current, state.pose, record.node_trajectory, episode.instruction, world.scene_tag
        )
        try:
            response = await planner.decide(ctx)
        except PlannerTransportError as exc:
            logger.exception("episode %d: planner unreachable", episode.episode_id)
            record.flagged = True
            record.flag_reason = record.stop_reason = "transport_error"
            log.write({"step": step_index, "node": current, "error": str(exc)})
            break
        validate_response(response, ctx)
        record.planner_steps += 1

        entry: Dict[str, Any] = {
            "step": step_index,
            "node": current,
            "pose": [round(state.x, 4), round(state.y, 4), round(state.heading, 2)],
            "options": [o.node for o in ctx.action_options],
            "prompt": getattr(planner, "last_prompt", None),
            "raw_replies": response.raw_replies,
            "thought": response.thought,
            "action": response.action.model_dump(),
            "flagged": response.flagged,
        }

        if not isinstance(response.action, GoTo):
            if response.flagged:
                record.flagged, record.flag_reason = True, response.flag_reason
                record.stop_reason = "parse_failure"
            else:
                record.stop_reason = "stop"
            log.write(entry)
            break

        target = response.action.node
        if graph.nodes[target].visited and target != current:
            record.revisits += 1
        nav = navigate_to(world, state, graph, current, target, config.sim.mode, remaining)
        remaining -= len(nav.actions)
        state = nav.state
        record.collisions += nav.collisions
        record.forward_count += nav.forward_count
        record.trajectory.extend(_round(p) for p in nav.poses)
        current = target
        record.node_trajectory.append(target)

        entry.update(
            path=nav.path,
            actions=[a.value for a in nav.actions],
            collisions=nav.collisions,
        )
        log.write(entry)
        if nav.budget_exhausted or remaining <= 0:
            record.stop_reason = "action_budget"
            break

    record.stop = _round(state.xy)
    record.graph = graph.to_json()
    return record


def report_for(
    world: World, episode: Episode, record: EpisodeRecord, config: RunConfig
) -> EpisodeReport:
    metrics = nav_metrics(
        episode,
        record.trajectory,
        record.stop,
        record.collisions,
        record.forward_count,
        config.sim.success_radius,
        world.geodesic,
    )
    return EpisodeReport(
        episode_id=episode.episode_id,
        seed=episode.world_seed,
        metrics=metrics,
        planner_steps=record.planner_steps,
        revisits=record.revisits,
        flagged=record.flagged,
        flag_reason=record.flag_reason,
        stop_reason=record.stop_reason,
    )


async def run_episodes(
    worlds: Sequence[World],
    episodes: Sequence[Episode],
    config: RunConfig,
    pipeline: WaypointPipeline,
    out_dir: Optional[Path] = None,
    client: Optional[ChatCompletionsClient] = None,
) -> List[Tuple[EpisodeRecord, EpisodeReport]]:
    """Run episodes with at most ``config.workers`` in flight; results keep episode order."""
    owns_client = client is None and config.planner.kind == "llm"
    if owns_client:
        client = ChatCompletionsClient(config.planner.llm)
    limiter = asyncio.Semaphore(config.workers)

    async def one(episode: Episode) -> Tuple[EpisodeRecord, EpisodeReport]:
        world = worlds[episode.world_index]
        goal = episode.goal
        planner = make_planner(
            config.planner,
            goal=goal,
            success_radius=config.sim.success_radius,
            distance=lambda p: world.geodesic(p, goal),
            client=client,
        )
        log_path: Optional[Path] = None
        if out_dir is not None:
            log_path = out_dir / "episodes" / f"episode_{episode.episode_id:04d}.jsonl"
        async with limiter:
            try:
                record = await run_episode(
                    world, episode, config, planner, pipeline, log_path,
                    client.redact if client else None,
                )
            except TopoVlnError as exc:
                logger.exception("episode %d failed", episode.episode_id)
                record = EpisodeRecord(
                    episode_id=episode.episode_id,
                    world_index=episode.world_index,
                    trajectory=[_round(episode.start)],
                    stop=_round(episode.start),
                    flagged=True,
                    flag_reason=type(exc).__name__,
                    stop_reason="error",
                )
        return record, report_for(world, episode, record, config)

    try:
        return list(await asyncio.gather(*(one(e) for e in episodes)))
    finally:
        if owns_client and client is not None:
            await client.close()
