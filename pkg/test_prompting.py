#!/usr/bin/env python3
"""Tests for prompt serialization, reply parsing and the offline responder."""

import random
import string

import pytest

from src.topovln.errors import AmbiguousActionError, MissingActionError, UnknownNodeIdError
from src.topovln.prompting import (
    GoTo,
    PlannerResponse,
    PromptHeuristicResponder,
    Stop,
    build_context,
    direction_word,
    parse_response,
    render_response,
    serialize_context,
    serialize_graph,
)
from src.topovln.radial import Pose
from src.topovln.topograph import TopoGraph


def small_graph(first_option_visited: bool = False) -> TopoGraph:
    """Place 0 at the origin with options 1 (ahead) and 2 (left); Place 3 is elsewhere."""
    graph = TopoGraph()
    here = graph.add_node((0.0, 0.0), visited=True)
    ahead = graph.add_node((1.0, 0.0), visited=first_option_visited)
    left = graph.add_node((0.0, 2.0))
    elsewhere = graph.add_node((-3.0, 0.0))
    graph.add_edge(here, ahead)
    graph.add_edge(here, left)
    graph.add_edge(ahead, elsewhere)
    graph.nodes[here].cached_options = [ahead, left]
    return graph


def scene(x: float, y: float) -> str:
    return "kitchen" if x >= 0 else "hallway"


@pytest.mark.parametrize(
    "bearing,word",
    [(0, "front"), (45, "front"), (46, "left"), (135, "left"), (180, "back"), (225, "back"),
     (226, "right"), (314, "right"), (315, "front"), (-90, "right")],
)
def test_direction_word(bearing, word):
    assert direction_word(bearing) == word, f"{bearing}° should read as {word}"


def test_context_sections():
    graph = small_graph()
    ctx = build_context(graph, 0, Pose(0.0, 0.0, 0.0), [0], "Walk into the kitchen.", scene)
    assert [o.node for o in ctx.action_options] == [1, 2], "Options keep their cached order"
    assert ctx.action_options[0].direction == "front", "Place 1 is straight ahead"
    assert ctx.action_options[1].direction == "left", "Place 2 is to the left"
    assert ctx.action_options[1].distance == pytest.approx(2.0), "Distance is planar"
    assert [s.node for s in ctx.supplementary] == [3], "Unvisited non-options are supplementary"
    assert ctx.supplementary[0].scene == "hallway", "Scene tags describe supplementary places"
    assert ctx.node_ids() == {0, 1, 2, 3}, "Every graph node is addressable"


def test_serialized_prompt_layout():
    ctx = build_context(small_graph(), 0, Pose(0.0, 0.0, 0.0), [0], "Walk into the kitchen.", scene)
    prompt = serialize_context(ctx)
    headers = ["Instruction:", "History:", "Trajectory:", "Graph:", "VisitInfo:",
               "Supplementary:", "Action Options:"]
    positions = [prompt.index(h) for h in headers]
    assert positions == sorted(positions), "Sections appear in a fixed order"
    assert "Place 0 is connected with Places 1, 2" in prompt, "Graph lists visited places"
    assert "Place 1: front, bearing 0°, distance 1.0 m" in prompt, "Options carry geometry"
    assert "Place 2: front" not in prompt
    assert "Place 2: left, bearing 90° left, distance 2.0 m" in prompt
    assert "Place 1: unvisited" in prompt, "VisitInfo reports option status"
    assert prompt.rstrip().endswith("Action: <a place id, or stop>"), "The format directive closes"

    ablated = serialize_context(ctx, include_visit_info=False, include_graph=False)
    assert "VisitInfo:" not in ablated and "Graph:" not in ablated, "Ablations drop sections"


def test_serialize_graph_isolated_place():
    graph = TopoGraph()
    graph.add_node((0.0, 0.0), visited=True)
    assert serialize_graph(graph) == "Place 0 is connected with no other places"


CORPUS = [
    ("Thought: the door is ahead\nAction: 3", GoTo(node=3)),
    ("Action: stop", Stop()),
    ("action: STOP", Stop()),
    ("### Action: stop", Stop()),
    ("**Action:** 3", GoTo(node=3)),
    ("Action: Place 3", GoTo(node=3)),
    ("Action: `2`", GoTo(node=2)),
    ("- Action: 1", GoTo(node=1)),
    ("> Action: 1", GoTo(node=1)),
    ("Action： 1", GoTo(node=1)),
    ("Action: 3, 3", GoTo(node=3)),
    ("Thought: a\nAction: 1\nThought: b\nAction: 2", GoTo(node=2)),
]

MALFORMED = [
    ("", MissingActionError),
    ("I would go to place 3.", MissingActionError),
    ("Thought only: go to 3", MissingActionError),
    ("Actions: 3", MissingActionError),
    ("Action 3", MissingActionError),
    ("Thought: I will stop here", MissingActionError),
    ("The action: 3 is best", MissingActionError),
    ("Action: 3 or 4", AmbiguousActionError),
    ("Action: stop at 3", AmbiguousActionError),
    ("Action:", AmbiguousActionError),
    ("Action: go forward", AmbiguousActionError),
    ("Action: 1.5", AmbiguousActionError),
    ("Action: none", AmbiguousActionError),
    ("Action: stopping", AmbiguousActionError),
    ("Action: Place 3 then Place 4", AmbiguousActionError),
    ("Action: 2\nAction: stop 4", AmbiguousActionError),
    ("Thought: go\nAction:\n3", AmbiguousActionError),
    ("Action: 99", UnknownNodeIdError),
    ("Action: -1", UnknownNodeIdError),
    ("**Action:** 42", UnknownNodeIdError),
]


@pytest.mark.parametrize("raw,action", CORPUS)
def test_parse_accepts_common_variants(raw, action):
    parsed = parse_response(raw, valid_ids=range(10))
    assert parsed.action == action, f"{raw!r} should parse as {action}"


@pytest.mark.parametrize("raw,error", MALFORMED)
def test_parse_rejects_malformed_replies(raw, error):
    with pytest.raises(error) as info:
        parse_response(raw, valid_ids=range(10))
    assert info.value.kind == error.kind, "Errors carry a machine-readable kind"


def test_last_thought_is_kept():
    parsed = parse_response("Thought: first\nAction: 1\nThought: second\nAction: 2")
    assert parsed.thought == "second", "The last Thought line wins"


THOUGHT_ALPHABET = string.ascii_letters + string.digits + " .,;:!?'\"()-*`_#>°"


def random_response(rng: random.Random) -> PlannerResponse:
    thought = "".join(rng.choice(THOUGHT_ALPHABET) for _ in range(rng.randint(0, 60))).strip()
    action = Stop() if rng.random() < 0.2 else GoTo(node=rng.randint(0, 500))
    return PlannerResponse(thought=thought, action=action)


def test_render_then_parse_reproduces_responses():
    rng = random.Random(0)
    for _ in range(1000):
        response = random_response(rng)
        again = parse_response(render_response(response))
        assert again == response, f"{response!r} should survive rendering"


@pytest.mark.parametrize(
    "thought", ["use `x`", "**bold** claim", "snake_case_name_", "ends with *", "a  b   c"]
)
def test_thought_markup_and_spacing_survive(thought):
    response = PlannerResponse(thought=thought, action=GoTo(node=3))
    assert parse_response(render_response(response)).thought == thought, "Thought text is kept"


def test_wrapping_markup_around_labels_is_removed():
    parsed = parse_response("**Thought:** the hall is open\n**Action:** 3")
    assert parsed.thought == "the hall is open", "Bold labels do not leak into the thought"
    parsed = parse_response("`Thought: check the door`\nAction: stop")
    assert parsed.thought == "check the door" and parsed.is_stop


def test_render_folds_line_breaks():
    response = PlannerResponse(thought="first line\n  second line", action=Stop())
    assert render_response(response) == "Thought: first line second line\nAction: stop"


def test_responder_prefers_unvisited_options():
    responder = PromptHeuristicResponder()
    graph = small_graph(first_option_visited=True)
    ctx = build_context(graph, 0, Pose(0.0, 0.0, 0.0), [0, 1, 0], "Go.")
    reply = parse_response(responder.respond(serialize_context(ctx)))
    assert reply.action == GoTo(node=2), "With VisitInfo the visited option is skipped"

    blind = parse_response(responder.respond(serialize_context(ctx, include_visit_info=False)))
    assert blind.action == GoTo(node=1), "Without VisitInfo the first option is taken"


def test_responder_backtracks_then_stops():
    graph = small_graph(first_option_visited=True)
    graph.nodes[2].visited = True
    responder = PromptHeuristicResponder()
    ctx = build_context(graph, 0, Pose(0.0, 0.0, 0.0), [0, 1, 0, 2, 0], "Go.")
    reply = parse_response(responder.respond(serialize_context(ctx)))
    assert reply.action == GoTo(node=3), "With every option visited it returns to a frontier"

    graph.nodes[0].cached_options = []
    ctx = build_context(graph, 0, Pose(0.0, 0.0, 0.0), [0], "Go.")
    assert parse_response(responder.respond(serialize_context(ctx))).is_stop, "No options stops"
