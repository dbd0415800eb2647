"""Planner policies: chat model, prompt heuristic, goal oracle and frontier-greedy."""

import logging
import math
from typing import Callable, Dict, List, Optional, Protocol, Tuple

from .config import PlannerConfig
from .errors import InvalidActionError, ParseError
from .llm_client import ChatCompletionsClient, Message
from .prompting import (
    FORMAT_REMINDER,
    SYSTEM_PROMPT,
    GoTo,
    PlannerResponse,
    PromptContext,
    PromptHeuristicResponder,
    Stop,
    parse_response,
    serialize_context,
)
from .topograph import TopoGraph, graph_distances

logger = logging.getLogger(__name__)

GoalDistance = Callable[[Tuple[float, float]], float]


class PlannerPolicy(Protocol):
    async def decide(self, ctx: PromptContext) -> PlannerResponse: ...


class ReplySource(Protocol):
    async def complete(self, messages: List[Message]) -> str: ...


class HeuristicReplySource:
    """Reply source that answers the first user turn with PromptHeuristicResponder."""

    def __init__(self) -> None:
        self.responder = PromptHeuristicResponder()

    async def complete(self, messages: List[Message]) -> str:
        prompt = next(m["content"] for m in messages if m["role"] == "user")
        return self.responder.respond(prompt)


class PromptPlanner:
    """Serializes the context, queries a reply source and parses the Thought/Action reply.

    A reply that fails to parse is retried once with a format reminder; a second failure
    stops the episode and flags the response.
    """

    def __init__(
        self,
        source: ReplySource,
        include_visit_info: bool = True,
        include_graph: bool = True,
        redact: Callable[[str], str] = lambda s: s,
    ):
        self.source = source
        self.include_visit_info = include_visit_info
        self.include_graph = include_graph
        self.redact = redact
        self.last_prompt: Optional[str] = None

    async def decide(self, ctx: PromptContext) -> PlannerResponse:
        prompt = serialize_context(ctx, self.include_visit_info, self.include_graph)
        self.last_prompt = prompt
        messages: List[Message] = [
            {"role": "system", "content": SYSTEM_PROMPT},
            {"role": "user", "content": prompt},
        ]
        valid = ctx.node_ids()
        replies: List[str] = []

        reply = await self.source.complete(messages)
        replies.append(self.redact(reply))
        try:
            response = parse_response(reply, valid)
        except ParseError as first:
            logger.info("unparseable reply (%s), re-querying with a format reminder", first.kind)
            messages = messages + [
                {"role": "assistant", "content": reply},
                {"role": "user", "content": FORMAT_REMINDER},
            ]
            reply = await self.source.complete(messages)
            replies.append(self.redact(reply))
            try:
                response = parse_response(reply, valid)
            except ParseError as second:
                logger.warning("second unparseable reply (%s), stopping", second.kind)
                return PlannerResponse(
                    thought="",
                    action=Stop(),
                    raw_replies=replies,
                    flagged=True,
                    flag_reason=second.kind,
                )
        return response.model_copy(update={"raw_replies": replies})


def oracle_decide(
    ctx: PromptContext,
    goal: Tuple[float, float],
    success_radius: float = 3.0,
    distance: Optional[GoalDistance] = None,
) -> PlannerResponse:
    """Move toward the goal using privileged goal knowledge.

    Stops once the current node lies within ``success_radius``. Otherwise the candidates
    are the action options plus every other node of the graph, so the oracle can backtrack;
    the one nearest the goal wins, ties by lower id.
    """
    dist = distance or (lambda p: math.hypot(p[0] - goal[0], p[1] - goal[1]))
    nodes = {n.id: n for n in ctx.graph.nodes}
    here = dist(nodes[ctx.current].xy())
    if here <= success_radius:
        return PlannerResponse(thought=f"Within {here:.2f} m of the goal.", action=Stop())

    candidates = {o.node for o in ctx.action_options} | set(nodes)
    candidates.discard(ctx.current)
    scored = sorted((dist(nodes[i].xy()), i) for i in candidates)
    scored = [(d, i) for d, i in scored if math.isfinite(d)]
    if not scored:
        return PlannerResponse(thought="No other place is known.", action=Stop())
    best_d, best = scored[0]
    return PlannerResponse(
        thought=f"Place {best} is {best_d:.2f} m from the goal.", action=GoTo(node=best)
    )


class OraclePlanner:
    def __init__(
        self,
        goal: Tuple[float, float],
        success_radius: float = 3.0,
        distance: Optional[GoalDistance] = None,
    ):
        self.goal = goal
        self.success_radius = success_radius
        self.distance = distance

    async def decide(self, ctx: PromptContext) -> PlannerResponse:
        return oracle_decide(ctx, self.goal, self.success_radius, self.distance)


def greedy_decide(ctx: PromptContext) -> PlannerResponse:
    """Nearest unvisited node by graph distance, ties by lower id; stop when none remain."""
    graph = TopoGraph.from_snapshot(ctx.graph)
    dist = graph_distances(graph, ctx.current)
    frontier = sorted((d, i) for i, d in dist.items() if not graph.nodes[i].visited)
    if not frontier:
        return PlannerResponse(thought="Every reachable place is explored.", action=Stop())
    d, node = frontier[0]
    thought = f"Nearest unexplored place is {d:.2f} m away."
    return PlannerResponse(thought=thought, action=GoTo(node=node))


class GreedyPlanner:
    async def decide(self, ctx: PromptContext) -> PlannerResponse:
        return greedy_decide(ctx)


def validate_response(response: PlannerResponse, ctx: PromptContext) -> PlannerResponse:
    if isinstance(response.action, GoTo) and response.action.node not in ctx.node_ids():
        raise InvalidActionError(f"planner chose unknown node {response.action.node}")
    return response


def make_planner(
    config: PlannerConfig,
    goal: Optional[Tuple[float, float]] = None,
    success_radius: float = 3.0,
    distance: Optional[GoalDistance] = None,
    client: Optional[ChatCompletionsClient] = None,
) -> PlannerPolicy:
    if config.kind == "oracle":
        if goal is None:
            raise ValueError("the oracle planner needs the episode goal")
        return OraclePlanner(goal, success_radius, distance)
    if config.kind == "greedy":
        return GreedyPlanner()
    if config.kind == "heuristic":
        return PromptPlanner(
            HeuristicReplySource(), config.include_visit_info, config.include_graph
        )
    if client is None:
        client = ChatCompletionsClient(config.llm)
    return PromptPlanner(client, config.include_visit_info, config.include_graph, client.redact)


PLANNER_KINDS: Dict[str, str] = {
    "llm": "chat-completions model reading the serialized prompt",
    "heuristic": "offline responder reading the serialized prompt",
    "oracle": "privileged planner that knows the goal",
    "greedy": "nearest-unvisited frontier explorer",
}
