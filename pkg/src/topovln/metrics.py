"""Navigation and waypoint metrics with aggregation into summary tables."""

import csv
import math
from pathlib import Path
from typing import Callable, Dict, List, Optional, Protocol, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, Field
from scipy.spatial.distance import cdist

from .errors import EmptyDatasetError
from .obstacle_map import ObstacleMap, first_obstacle_indices
from .radial import LocalPoint
from .waypoints import Heatmap, WaypointSet

Point = Tuple[float, float]
Geodesic = Callable[[Point, Point], float]
PointSeq = Sequence[Sequence[float]]

RATE_FIELDS = {"osr", "sr", "collision_rate", "pct_open", "flagged"}


class EpisodeLike(Protocol):
    start: Point
    goal: Point
    gt_path: List[Point]


class NavMetrics(BaseModel):
    ne: float
    osr: bool
    sr: bool
    spl: float
    ndtw: float
    collision_rate: float
    path_length: float
    shortest_length: float


class WaypointMetrics(BaseModel):
    delta: int
    pct_open: Optional[float] = None
    avg_score: Optional[float] = None
    d_c: Optional[float] = None
    d_h: Optional[float] = None


def _as_points(points: PointSeq) -> np.ndarray:
    return np.asarray(points, dtype=float).reshape(-1, 2)


def dtw_distance(a: PointSeq, b: PointSeq) -> float:
    """Full dynamic-time-warping cost with Euclidean point distance."""
    pa, pb = _as_points(a), _as_points(b)
    if len(pa) == 0 or len(pb) == 0:
        return math.inf
    cost = cdist(pa, pb)
    n, m = cost.shape
    acc = np.full((n + 1, m + 1), np.inf)
    acc[0, 0] = 0.0
    for i in range(1, n + 1):
        for j in range(1, m + 1):
            acc[i, j] = cost[i - 1, j - 1] + min(acc[i - 1, j], acc[i, j - 1], acc[i - 1, j - 1])
    return float(acc[n, m])


def ndtw(trajectory: PointSeq, reference: PointSeq, radius: float = 3.0) -> float:
    ref = _as_points(reference)
    if len(ref) == 0:
        raise ValueError("reference path is empty")
    return float(math.exp(-dtw_distance(trajectory, ref) / (len(ref) * radius)))


def _directed(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return cdist(a, b).min(axis=1)


def chamfer_distance(a: PointSeq, b: PointSeq) -> Optional[float]:
    """Mean of the two directed mean nearest-neighbour distances; None for an empty set."""
    pa, pb = _as_points(a), _as_points(b)
    if len(pa) == 0 or len(pb) == 0:
        return None
    return float((_directed(pa, pb).mean() + _directed(pb, pa).mean()) / 2)


def hausdorff_distance(a: PointSeq, b: PointSeq) -> Optional[float]:
    pa, pb = _as_points(a), _as_points(b)
    if len(pa) == 0 or len(pb) == 0:
        return None
    return float(max(_directed(pa, pb).max(), _directed(pb, pa).max()))


def path_length(points: PointSeq) -> float:
    p = _as_points(points)
    if len(p) < 2:
        return 0.0
    return float(np.hypot(*np.diff(p, axis=0).T).sum())


def _euclidean(a: Point, b: Point) -> float:
    return math.hypot(a[0] - b[0], a[1] - b[1])


def nav_metrics(
    episode: EpisodeLike,
    trajectory: Sequence[Point],
    stop: Point,
    collisions: int,
    forward_count: int,
    success_radius: float = 3.0,
    geodesic: Optional[Geodesic] = None,
) -> NavMetrics:
    if len(trajectory) == 0:
        raise ValueError("trajectory is empty")
    dist = geodesic or _euclidean
    goal = tuple(episode.goal)
    ne = dist(tuple(stop), goal)  # type: ignore[arg-type]
    sr = ne <= success_radius
    osr = min(dist(tuple(p), goal) for p in trajectory) <= success_radius  # type: ignore[arg-type]
    shortest = dist(tuple(episode.start), goal)  # type: ignore[arg-type]
    travelled = path_length(trajectory)
    denom = max(travelled, shortest)
    spl = (shortest / denom if denom > 0 else 1.0) if sr else 0.0
    return NavMetrics(
        ne=float(ne),
        osr=bool(osr),
        sr=bool(sr),
        spl=float(spl),
        ndtw=ndtw(trajectory, episode.gt_path, success_radius),
        collision_rate=collisions / forward_count if forward_count else 0.0,
        path_length=travelled,
        shortest_length=float(shortest),
    )


def open_cells(truth: ObstacleMap) -> np.ndarray:
    """Cells that are free and in front of the first obstacle of their ray."""
    first = first_obstacle_indices(truth)
    j = np.arange(truth.grid.num_radii)[None, :]
    return (j < first[:, None]) & ~truth.occupied


def waypoint_metrics(
    predicted: WaypointSet,
    gt_neighbors: Sequence[LocalPoint],
    gt_heatmap: Heatmap,
    truth: ObstacleMap,
) -> WaypointMetrics:
    delta = abs(len(predicted) - len(gt_neighbors))
    if len(predicted) == 0:
        return WaypointMetrics(delta=delta)
    free = open_cells(truth)
    on_open = [bool(free[w.cell.a, w.cell.j]) for w in predicted]
    scores = [gt_heatmap.at(w.cell) for w in predicted]
    pred_pts = predicted.local_points()
    gt_pts = [(p[0], p[1]) for p in gt_neighbors]
    return WaypointMetrics(
        delta=delta,
        pct_open=100.0 * sum(on_open) / len(on_open),
        avg_score=float(np.mean(scores)),
        d_c=chamfer_distance(pred_pts, gt_pts),
        d_h=hausdorff_distance(pred_pts, gt_pts),
    )


class EpisodeReport(BaseModel):
    episode_id: int
    seed: int
    metrics: NavMetrics
    planner_steps: int = 0
    revisits: int = 0
    flagged: bool = False
    flag_reason: Optional[str] = None
    stop_reason: str = "stop"

    def values(self) -> Dict[str, Optional[float]]:
        m = self.metrics
        return {
            "ne": m.ne,
            "osr": float(m.osr),
            "sr": float(m.sr),
            "spl": m.spl,
            "ndtw": m.ndtw,
            "collision_rate": m.collision_rate,
            "revisits": float(self.revisits),
            "planner_steps": float(self.planner_steps),
            "flagged": float(self.flagged),
        }


class WaypointReport(BaseModel):
    seed: int
    world: int
    node: int
    predictor: str
    metrics: WaypointMetrics

    def values(self) -> Dict[str, Optional[float]]:
        m = self.metrics
        return {
            "delta": float(m.delta),
            "pct_open": None if m.pct_open is None else m.pct_open / 100.0,
            "avg_score": m.avg_score,
            "d_c": m.d_c,
            "d_h": m.d_h,
        }


Report = Union[EpisodeReport, WaypointReport]


class Summary(BaseModel):
    count: int
    means: Dict[str, Optional[float]]
    counts: Dict[str, int]
    per_seed: Dict[str, Dict[str, Optional[float]]] = Field(default_factory=dict)

    def to_json(self) -> Dict[str, object]:
        return self.model_dump(mode="json")

    def to_table(self) -> str:
        """Aligned text table: one row per metric, overall mean then one column per seed."""
        seeds = sorted(self.per_seed, key=int)
        header = ["metric", "n", "all"] + [f"seed {s}" for s in seeds]
        rows = [header]
        for name in self.means:
            row = [name, str(self.counts[name]), _fmt(self.means[name])]
            row += [_fmt(self.per_seed[s].get(name)) for s in seeds]
            rows.append(row)
        widths = [max(len(r[i]) for r in rows) for i in range(len(header))]
        return "\n".join(
            "  ".join(
                cell.ljust(w) if i == 0 else cell.rjust(w)
                for i, (cell, w) in enumerate(zip(r, widths))
            )
            for r in rows
        )


def _fmt(value: Optional[float]) -> str:
    return "-" if value is None else f"{value:.3f}"


def _means(
    rows: Sequence[Dict[str, Optional[float]]],
) -> Tuple[Dict[str, Optional[float]], Dict[str, int]]:
    means: Dict[str, Optional[float]] = {}
    counts: Dict[str, int] = {}
    for name in rows[0]:
        present = [r[name] for r in rows if r[name] is not None]
        counts[name] = len(present)
        if not present:
            means[name] = None
            continue
        mean = float(np.mean(present))
        means[name] = 100.0 * mean if name in RATE_FIELDS else mean
    return means, counts


def aggregate(reports: Sequence[Report]) -> Summary:
    """Means over reports (rates as percentages) with a per-seed breakdown.

    None values are excluded from means; ``counts`` reports how many values contributed.
    """
    if not reports:
        raise EmptyDatasetError("cannot aggregate an empty report list")
    rows = [r.values() for r in reports]
    means, counts = _means(rows)
    by_seed: Dict[int, List[Dict[str, Optional[float]]]] = {}
    for report, row in zip(reports, rows):
        by_seed.setdefault(report.seed, []).append(row)
    per_seed = {str(seed): _means(seed_rows)[0] for seed, seed_rows in sorted(by_seed.items())}
    return Summary(count=len(reports), means=means, counts=counts, per_seed=per_seed)


def write_summary_csv(summary: Summary, path: Union[str, Path]) -> None:
    seeds = sorted(summary.per_seed, key=int)
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["metric", "n", "all"] + [f"seed_{s}" for s in seeds])
        for name, value in summary.means.items():
            writer.writerow(
                [name, summary.counts[name], _fmt(value)]
                + [_fmt(summary.per_seed[s].get(name)) for s in seeds]
            )
