"""Prompt context serialization and Thought/Action reply parsing.

The context carries seven inputs: instruction, history, trajectory, graph, visit info,
supplementary unvisited places and action options. Scene tags stand in for images.
"""

import math
import re
from typing import Callable, Dict, Iterable, List, Literal, Optional, Sequence, Set, Tuple, Union

from pydantic import BaseModel, Field

from .errors import AmbiguousActionError, MissingActionError, UnknownNodeIdError
from .radial import Pose, local_to_polar, signed_bearing, world_to_local
from .topograph import GraphSnapshot, TopoGraph

SceneTagger = Callable[[float, float], str]

SECTION_HEADERS = (
    "Instruction",
    "History",
    "Trajectory",
    "Graph",
    "VisitInfo",
    "Supplementary",
    "Action Options",
)

SYSTEM_PROMPT = """You are a navigation agent moving through an indoor environment.
Each turn you receive:
- Instruction: global step-by-step guidance to follow.
- History: the places you have visited, in order, with what you saw there.
- Trajectory: the ids of visited places, in order, ending with your current place.
- Graph: which places are directly reachable from each visited place.
- VisitInfo: whether each current action option has already been visited.
- Supplementary: unvisited places elsewhere in the graph you could return to explore.
- Action Options: places you can move to now, with direction, bearing and distance.
You may choose any place in the graph; distant places are reached through the graph.
Prefer unvisited places unless the instruction requires going back.
Answer with exactly two lines:
Thought: <your reasoning in one line>
Action: <a place id, or stop>"""

FORMAT_REMINDER = (
    "Your previous reply could not be parsed. Reply with exactly two lines, "
    "'Thought: ...' and 'Action: <place id or stop>'."
)


class GoTo(BaseModel):
    kind: Literal["goto"] = "goto"
    node: int


class Stop(BaseModel):
    kind: Literal["stop"] = "stop"


Action = Union[GoTo, Stop]


class PlannerResponse(BaseModel):
    thought: str = ""
    action: Action = Field(discriminator="kind")
    raw_replies: List[str] = Field(default_factory=list)
    flagged: bool = False
    flag_reason: Optional[str] = None

    @property
    def is_stop(self) -> bool:
        return isinstance(self.action, Stop)


class HistoryEntry(BaseModel):
    node: int
    scene: str


class VisitEntry(BaseModel):
    node: int
    visited: bool


class SupplementaryEntry(BaseModel):
    node: int
    scene: str


class ActionOption(BaseModel):
    node: int
    direction: Literal["front", "left", "back", "right"]
    bearing: float
    distance: float


class PromptContext(BaseModel):
    instruction: str
    current: int
    history: List[HistoryEntry] = Field(default_factory=list)
    trajectory: List[int] = Field(default_factory=list)
    graph: GraphSnapshot = Field(default_factory=GraphSnapshot)
    visit_info: List[VisitEntry] = Field(default_factory=list)
    supplementary: List[SupplementaryEntry] = Field(default_factory=list)
    action_options: List[ActionOption] = Field(default_factory=list)

    def node_ids(self) -> Set[int]:
        return {n.id for n in self.graph.nodes}


def direction_word(bearing: float) -> str:
    """Bucket a bearing (degrees, counterclockwise) into front/left/back/right."""
    b = bearing % 360.0
    if b <= 45.0 or b >= 315.0:
        return "front"
    if b <= 135.0:
        return "left"
    if b <= 225.0:
        return "back"
    return "right"


def _bearing_text(bearing: float) -> str:
    signed = int(math.floor(signed_bearing(bearing) + 0.5))
    if signed == 0:
        return "0°"
    return f"{abs(signed)}° {'left' if signed > 0 else 'right'}"


def _adjacency(graph: GraphSnapshot) -> Dict[int, List[int]]:
    adjacency: Dict[int, List[int]] = {n.id: [] for n in graph.nodes}
    for i, j in graph.edges:
        adjacency[i].append(j)
        adjacency[j].append(i)
    return {k: sorted(v) for k, v in adjacency.items()}


def serialize_graph(graph: Union[TopoGraph, GraphSnapshot]) -> str:
    snapshot = graph.snapshot() if isinstance(graph, TopoGraph) else graph
    adjacency = _adjacency(snapshot)
    lines = []
    for node in sorted(snapshot.nodes, key=lambda n: n.id):
        if not node.visited:
            continue
        linked = adjacency[node.id]
        if linked:
            lines.append(
                f"Place {node.id} is connected with Places {', '.join(str(i) for i in linked)}"
            )
        else:
            lines.append(f"Place {node.id} is connected with no other places")
    return "\n".join(lines)


def build_context(
    graph: TopoGraph,
    current: int,
    pose: Pose,
    trajectory: Sequence[int],
    instruction: str,
    scene_tag: Optional[SceneTagger] = None,
) -> PromptContext:
    """Assemble the prompt context at the agent's current node and pose."""
    current_node = graph.require(current)

    def tag(node_id: int) -> str:
        if scene_tag is None:
            return "unknown place"
        x, y = graph.nodes[node_id].xy()
        return scene_tag(x, y)

    options = list(current_node.cached_options or [])
    action_options = []
    for node_id in options:
        local = world_to_local(pose, graph.nodes[node_id].xy())
        polar = local_to_polar(local)
        action_options.append(
            ActionOption(
                node=node_id,
                direction=direction_word(polar.bearing),
                bearing=round(polar.bearing, 3),
                distance=round(polar.range, 3),
            )
        )

    option_set = set(options)
    return PromptContext(
        instruction=instruction,
        current=current,
        history=[HistoryEntry(node=n, scene=tag(n)) for n in trajectory],
        trajectory=list(trajectory),
        graph=graph.snapshot(),
        visit_info=[VisitEntry(node=n, visited=graph.nodes[n].visited) for n in options],
        supplementary=[
            SupplementaryEntry(node=n.id, scene=tag(n.id))
            for n in sorted(graph.nodes.values(), key=lambda n: n.id)
            if not n.visited and n.id not in option_set
        ],
        action_options=action_options,
    )


def serialize_context(
    ctx: PromptContext, include_visit_info: bool = True, include_graph: bool = True
) -> str:
    sections: List[Tuple[str, str]] = [("Instruction", ctx.instruction.strip())]

    history = [f"Step {i}: Place {h.node}, {h.scene}" for i, h in enumerate(ctx.history)]
    sections.append(("History", "\n".join(history) or "No places visited yet."))

    trajectory = " -> ".join(str(n) for n in ctx.trajectory) or "empty"
    sections.append(("Trajectory", f"{trajectory}\nYou are at Place {ctx.current}."))

    if include_graph:
        sections.append(("Graph", serialize_graph(ctx.graph) or "No connections recorded."))

    if include_visit_info:
        visit = [
            f"Place {v.node}: {'visited' if v.visited else 'unvisited'}" for v in ctx.visit_info
        ]
        sections.append(("VisitInfo", "\n".join(visit) or "No action options."))

    supplementary = [f"Place {s.node}: {s.scene}" for s in ctx.supplementary]
    sections.append(("Supplementary", "\n".join(supplementary) or "No other unvisited places."))

    options = [
        f"Place {o.node}: {o.direction}, bearing {_bearing_text(o.bearing)}, "
        f"distance {o.distance:.1f} m"
        for o in ctx.action_options
    ]
    sections.append(("Action Options", "\n".join(options) or "No action options available."))

    body = "\n\n".join(f"{header}:\n{text}" for header, text in sections)
    return (
        f"{body}\n\nRespond in this format:\n"
        "Thought: <your reasoning in one line>\nAction: <a place id, or stop>"
    )


_LABEL = re.compile(r"^([*`_]*)\s*(thought|action)\s*[*`_]*\s*[:：]\s*(.*)$", re.IGNORECASE)
_INTEGER = re.compile(r"-?\d+")
_STOP = re.compile(r"\bstop\b", re.IGNORECASE)
_MARKUP = "*`_ \t"


def _labelled_lines(raw: str) -> Iterable[Tuple[str, str]]:
    for line in raw.splitlines():
        match = _LABEL.match(line.strip().lstrip("#>-").strip())
        if not match:
            continue
        opener, label, body = match.group(1), match.group(2).lower(), match.group(3).strip()
        # Markup that opened before the label closes right after the colon or at line end.
        if opener and body.startswith(opener):
            body = body[len(opener) :]
        elif opener and body.endswith(opener):
            body = body[: -len(opener)]
        yield label, body.strip()


def parse_response(raw: str, valid_ids: Optional[Iterable[int]] = None) -> PlannerResponse:
    """Parse the last Thought and Action lines of a reply.

    The thought keeps its text; only the action body is stripped of markup. Raises
    MissingActionError when no Action line exists, AmbiguousActionError when the action
    names both stop and a place, several places or nothing usable, and UnknownNodeIdError
    when the place is not in ``valid_ids``.
    """
    thought = ""
    action_body: Optional[str] = None
    for label, body in _labelled_lines(raw):
        if label == "thought":
            thought = body
        else:
            action_body = body.strip(_MARKUP)

    if action_body is None:
        raise MissingActionError("reply has no Action line", raw=raw)

    ids = {int(tok) for tok in _INTEGER.findall(action_body)}
    wants_stop = bool(_STOP.search(action_body))
    if wants_stop and not ids:
        return PlannerResponse(thought=thought, action=Stop())
    if wants_stop or len(ids) != 1:
        raise AmbiguousActionError(f"cannot read an action from {action_body!r}", raw=raw)

    node = ids.pop()
    if valid_ids is not None and node not in set(valid_ids):
        raise UnknownNodeIdError(f"place {node} is not in the graph", raw=raw)
    return PlannerResponse(thought=thought, action=GoTo(node=node))


def render_response(response: PlannerResponse) -> str:
    thought = " ".join(part.strip() for part in response.thought.splitlines() if part.strip())
    action = "stop" if isinstance(response.action, Stop) else str(response.action.node)
    return f"Thought: {thought}\nAction: {action}"


def _section(prompt: str, header: str) -> Optional[List[str]]:
    lines = prompt.splitlines()
    try:
        start = lines.index(f"{header}:")
    except ValueError:
        return None
    body = []
    for line in lines[start + 1 :]:
        if not line.strip():
            break
        body.append(line)
    return body


_PLACE_LINE = re.compile(r"^Place (\d+):\s*(.*)$")


class PromptHeuristicResponder:
    """Answers a rendered prompt without a language model.

    With a VisitInfo section it picks the first unvisited option, then the first
    supplementary place. Otherwise, or when nothing is unvisited, it takes the first action
    option. It stops only when no options are listed.
    """

    def respond(self, prompt: str) -> str:
        options = [
            int(m.group(1))
            for m in (_PLACE_LINE.match(line) for line in _section(prompt, "Action Options") or [])
            if m
        ]
        if not options:
            return render_response(
                PlannerResponse(thought="No options remain.", action=Stop())
            )

        visit_lines = _section(prompt, "VisitInfo")
        if visit_lines is not None:
            unvisited = [
                int(m.group(1))
                for m in (_PLACE_LINE.match(line) for line in visit_lines)
                if m and m.group(2).strip() == "unvisited"
            ]
            for node in options:
                if node in unvisited:
                    return render_response(
                        PlannerResponse(
                            thought=f"Place {node} is unexplored.", action=GoTo(node=node)
                        )
                    )
            lines = _section(prompt, "Supplementary") or []
            elsewhere = [int(m.group(1)) for m in map(_PLACE_LINE.match, lines) if m]
            if elsewhere:
                node = elsewhere[0]
                return render_response(
                    PlannerResponse(
                        thought=f"Backtracking to unexplored Place {node}.", action=GoTo(node=node)
                    )
                )
        node = options[0]
        return render_response(
            PlannerResponse(
                thought=f"Taking the first option, Place {node}.", action=GoTo(node=node)
            )
        )
