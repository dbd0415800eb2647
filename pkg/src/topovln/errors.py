"""Exception hierarchy for topovln."""

from typing import Optional


class TopoVlnError(Exception):
    """Base class for all topovln errors."""


class ConfigError(TopoVlnError):
    """Run configuration failed validation."""


class CellOutOfBoundsError(TopoVlnError):
    """A cell index lies outside the radial grid."""


class OutOfRangeError(TopoVlnError):
    """A polar point lies beyond the grid's max range."""


class UnknownNodeError(TopoVlnError):
    """A node id is not present in the topological graph."""


class DisconnectedError(TopoVlnError):
    """No path exists between two graph nodes."""


class InfeasibleLayoutError(TopoVlnError):
    """A world layout cannot be generated."""


class InfeasibleEpisodeError(TopoVlnError):
    """No start/goal pair satisfies the episode constraints."""


class CorruptModelError(TopoVlnError):
    """The predictor produced non-finite output."""


class TrainingDivergedError(TopoVlnError):
    """Training produced a non-finite loss."""


class EmptyDatasetError(TopoVlnError):
    """Training was requested on an empty dataset."""


class MissingDatasetError(TopoVlnError):
    """An expected dataset file does not exist."""


class PlannerError(TopoVlnError):
    """A planner failed to produce a decision."""


class PlannerTransportError(PlannerError):
    """The chat endpoint could not be reached after all retries."""


class InvalidActionError(PlannerError):
    """A planner targeted a node that is not in the graph."""


class ParseError(TopoVlnError):
    """A planner reply does not follow the Thought/Action contract."""

    kind = "parse_error"

    def __init__(self, message: str, raw: Optional[str] = None):
        super().__init__(message)
        self.raw = raw


class MissingActionError(ParseError):
    kind = "missing_action"


class UnknownNodeIdError(ParseError):
    kind = "unknown_node_id"


class AmbiguousActionError(ParseError):
    kind = "ambiguous"
