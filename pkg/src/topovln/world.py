"""Heightfield worlds: procedural rooms, doors and stairs, traversability and geodesics.

The heightfield is indexed ``[ix, iy]`` with ``ix`` along world x. Elevations outside the
extent read as wall height, so the border is never traversable.
"""

import logging
import math
import threading
from collections import OrderedDict
from functools import cached_property
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import ndimage
from scipy.sparse import coo_matrix, csr_matrix
from scipy.sparse.csgraph import dijkstra

from .config import WorldConfig
from .errors import InfeasibleLayoutError

logger = logging.getLogger(__name__)

WorldLayout = WorldConfig

WORLD_FORMAT_VERSION = 1
MIN_CORRIDOR_WIDTH = 0.8
DOOR_MARGIN = 0.3
STAIR_MARGIN = 0.5
SNAP_RADIUS = 0.5
_FIELD_CACHE_SIZE = 32

ROOM_NAMES = (
    "kitchen",
    "living room",
    "bedroom",
    "bathroom",
    "office",
    "hallway",
    "dining room",
    "study",
    "laundry room",
    "corridor",
    "library",
    "storage room",
)

WALL_TAG = "wall"
DOOR_TAG = "doorway"
STAIR_TAG = "staircase"
LANDING_TAG = "landing"

Point = Tuple[float, float]


class World:
    """Immutable heightfield with scene tags. Derived rasters are computed lazily."""

    def __init__(
        self,
        heightfield: np.ndarray,
        resolution: float = 0.05,
        origin: Point = (0.0, 0.0),
        labels: Optional[np.ndarray] = None,
        tag_names: Sequence[str] = (WALL_TAG,),
        wall_height: float = 1.5,
        slope_threshold: float = 1.0,
        radial_step: float = 0.25,
        layout: Optional[WorldLayout] = None,
        seed: Optional[int] = None,
    ):
        hf = np.array(heightfield, dtype=float)
        if hf.ndim != 2 or hf.size == 0:
            raise ValueError("heightfield must be a non-empty 2-D array")
        if not np.all(np.isfinite(hf)):
            raise ValueError("heightfield contains non-finite elevations")
        if resolution <= 0:
            raise ValueError("resolution must be positive")
        self.heightfield = hf
        self.heightfield.setflags(write=False)
        self.resolution = float(resolution)
        self.origin = (float(origin[0]), float(origin[1]))
        self.labels = (
            np.zeros(hf.shape, dtype=int) if labels is None else np.asarray(labels, dtype=int)
        )
        self.tag_names = list(tag_names)
        self.wall_height = float(wall_height)
        self.slope_threshold = float(slope_threshold)
        self.radial_step = float(radial_step)
        self.layout = layout
        self.seed = seed
        self._fields: "OrderedDict[int, Tuple[np.ndarray, np.ndarray]]" = OrderedDict()
        self._fields_lock = threading.Lock()

    # -- lookup ----------------------------------------------------------------

    @property
    def shape(self) -> Tuple[int, int]:
        return self.heightfield.shape  # type: ignore[return-value]

    @property
    def extent(self) -> Tuple[float, float, float, float]:
        x0, y0 = self.origin
        nx, ny = self.shape
        return (x0, x0 + nx * self.resolution, y0, y0 + ny * self.resolution)

    def cell_index(self, x: Any, y: Any) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        ix = np.floor((np.asarray(x, dtype=float) - self.origin[0]) / self.resolution).astype(int)
        iy = np.floor((np.asarray(y, dtype=float) - self.origin[1]) / self.resolution).astype(int)
        inside = (ix >= 0) & (ix < self.shape[0]) & (iy >= 0) & (iy < self.shape[1])
        return ix, iy, inside

    def cell_center(self, ix: Any, iy: Any) -> Tuple[np.ndarray, np.ndarray]:
        return (
            self.origin[0] + (np.asarray(ix) + 0.5) * self.resolution,
            self.origin[1] + (np.asarray(iy) + 0.5) * self.resolution,
        )

    def elevation_at(self, x: Any, y: Any) -> Any:
        xs, ys = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
        ix, iy, inside = self.cell_index(xs.ravel(), ys.ravel())
        out = np.full(ix.shape, self.wall_height, dtype=float)
        out[inside] = self.heightfield[ix[inside], iy[inside]]
        if xs.ndim == 0:
            return float(out[0])
        return out.reshape(xs.shape)

    def scene_tag(self, x: float, y: float) -> str:
        ix, iy, inside = self.cell_index(x, y)
        if not inside:
            return WALL_TAG
        return self.tag_names[int(self.labels[ix, iy])]

    def is_traversable(self, x: float, y: float) -> bool:
        ix, iy, inside = self.cell_index(x, y)
        return bool(inside and self.traversable[ix, iy])

    @cached_property
    def _gradient(self) -> Tuple[np.ndarray, np.ndarray]:
        gx, gy = np.gradient(self.heightfield, self.resolution)
        return gx, gy

    def gradient_at(self, x: float, y: float) -> Point:
        ix, iy, inside = self.cell_index(x, y)
        if not inside:
            return (0.0, 0.0)
        gx, gy = self._gradient
        return (float(gx[ix, iy]), float(gy[ix, iy]))

    # -- traversability --------------------------------------------------------

    @cached_property
    def traversable(self) -> np.ndarray:
        """Cells whose radial-step neighbourhood varies by at most slope * radial_step."""
        size = max(1, int(round(self.radial_step / self.resolution)))
        pad = {"size": size, "mode": "constant", "cval": self.wall_height}
        hi = ndimage.maximum_filter(self.heightfield, **pad)
        lo = ndimage.minimum_filter(self.heightfield, **pad)
        return (hi - lo) <= self.slope_threshold * self.radial_step + 1e-9

    @cached_property
    def components(self) -> Tuple[np.ndarray, int]:
        return ndimage.label(self.traversable, structure=np.ones((3, 3), dtype=int))

    @cached_property
    def free_space(self) -> np.ndarray:
        """Largest 8-connected traversable component."""
        labelled, count = self.components
        if count == 0:
            return np.zeros(self.shape, dtype=bool)
        sizes = np.bincount(labelled.ravel())[1:]
        return labelled == int(np.argmax(sizes)) + 1

    def segment_check(self, start: Point, displacement: Point, z0: float) -> Optional[Point]:
        """First sample along a motion segment that breaks the slope rule, or None.

        Samples every resolution step plus the endpoint; a sample is blocked when
        |elevation - z0| / radial_step exceeds the slope threshold.
        """
        length = math.hypot(*displacement)
        if length == 0:
            return None
        n = int(math.floor(length / self.resolution + 1e-9))
        ts = [k * self.resolution / length for k in range(1, n + 1)]
        if not ts or ts[-1] < 1.0 - 1e-12:
            ts.append(1.0)
        t = np.asarray(ts)
        xs = start[0] + t * displacement[0]
        ys = start[1] + t * displacement[1]
        bad = np.abs(self.elevation_at(xs, ys) - z0) / self.radial_step > self.slope_threshold
        if not bad.any():
            return None
        k = int(np.argmax(bad))
        return (float(xs[k]), float(ys[k]))

    # -- geodesics -------------------------------------------------------------

    @cached_property
    def _free_index(self) -> np.ndarray:
        index = np.full(self.shape, -1, dtype=int)
        free = self.traversable
        index[free] = np.arange(int(free.sum()))
        return index

    @cached_property
    def _free_cells(self) -> Tuple[np.ndarray, np.ndarray]:
        return np.nonzero(self.traversable)

    @cached_property
    def _graph(self) -> csr_matrix:
        index = self._free_index
        n = int((index >= 0).sum())
        rows: List[np.ndarray] = []
        cols: List[np.ndarray] = []
        weights: List[np.ndarray] = []
        nx, ny = self.shape
        for dx, dy in ((1, 0), (0, 1), (1, 1), (1, -1)):
            a = index[max(0, -dx) : nx - max(0, dx), max(0, -dy) : ny - max(0, dy)]
            b = index[max(0, dx) : nx + min(0, dx) or None, max(0, dy) : ny + min(0, dy) or None]
            both = (a >= 0) & (b >= 0)
            rows.append(a[both])
            cols.append(b[both])
            weights.append(np.full(int(both.sum()), self.resolution * math.hypot(dx, dy)))
        r, c, w = np.concatenate(rows), np.concatenate(cols), np.concatenate(weights)
        return coo_matrix((w, (r, c)), shape=(n, n)).tocsr()

    def _snap(self, point: Point) -> Optional[Tuple[int, float]]:
        """Graph node for a point, falling back to the nearest free cell within SNAP_RADIUS."""
        ix, iy, inside = self.cell_index(point[0], point[1])
        if inside and self._free_index[ix, iy] >= 0:
            return int(self._free_index[ix, iy]), 0.0
        reach = int(math.ceil(SNAP_RADIUS / self.resolution))
        i0, i1 = max(0, int(ix) - reach), min(self.shape[0], int(ix) + reach + 1)
        j0, j1 = max(0, int(iy) - reach), min(self.shape[1], int(iy) + reach + 1)
        if i0 >= i1 or j0 >= j1:
            return None
        window = self._free_index[i0:i1, j0:j1]
        wi, wj = np.nonzero(window >= 0)
        if wi.size == 0:
            return None
        cx, cy = self.cell_center(wi + i0, wj + j0)
        d = np.hypot(cx - point[0], cy - point[1])
        k = int(np.argmin(d))
        if d[k] > SNAP_RADIUS:
            return None
        return int(window[wi[k], wj[k]]), float(d[k])

    def _field(self, node: int) -> Tuple[np.ndarray, np.ndarray]:
        """Dijkstra field rooted at a graph node, kept in a small LRU shared by callers."""
        with self._fields_lock:
            cached = self._fields.get(node)
            if cached is not None:
                self._fields.move_to_end(node)
                return cached
        dist, pred = dijkstra(self._graph, directed=False, indices=node, return_predecessors=True)
        with self._fields_lock:
            self._fields[node] = (dist, pred)
            self._fields.move_to_end(node)
            while len(self._fields) > _FIELD_CACHE_SIZE:
                self._fields.popitem(last=False)
        return dist, pred

    def geodesic_field(self, goal: Point) -> np.ndarray:
        """Geodesic distance from every cell to ``goal``; inf where unreachable."""
        out = np.full(self.shape, np.inf)
        snapped = self._snap(goal)
        if snapped is None:
            return out
        dist, _ = self._field(snapped[0])
        fi, fj = self._free_cells
        out[fi, fj] = dist + snapped[1]
        return out

    def geodesic(self, a: Point, b: Point) -> float:
        sa, sb = self._snap(a), self._snap(b)
        if sa is None or sb is None:
            return math.inf
        if sa[0] == sb[0]:
            return math.hypot(a[0] - b[0], a[1] - b[1])
        dist, _ = self._field(sb[0])
        return float(dist[sa[0]]) + sa[1] + sb[1]

    def geodesic_path(self, a: Point, b: Point) -> Optional[List[Point]]:
        sa, sb = self._snap(a), self._snap(b)
        if sa is None or sb is None:
            return None
        dist, pred = self._field(sb[0])
        if not np.isfinite(dist[sa[0]]):
            return None
        fi, fj = self._free_cells
        path: List[Point] = [(float(a[0]), float(a[1]))]
        node = pred[sa[0]]
        while node >= 0:
            cx, cy = self.cell_center(fi[node], fj[node])
            path.append((float(cx), float(cy)))
            node = pred[node]
        path.append((float(b[0]), float(b[1])))
        return path


def downsample_path(points: Sequence[Point], spacing: float = 0.25) -> List[Point]:
    """Keep points at least ``spacing`` of arc length apart, always keeping both ends."""
    if not points:
        return []
    kept = [points[0]]
    travelled = 0.0
    for prev, cur in zip(points, points[1:]):
        travelled += math.hypot(cur[0] - prev[0], cur[1] - prev[1])
        if travelled >= spacing:
            kept.append(cur)
            travelled = 0.0
    if kept[-1] != points[-1]:
        kept.append(points[-1])
    return kept


def _check_layout(layout: WorldLayout) -> None:
    if layout.corridor_width < MIN_CORRIDOR_WIDTH:
        raise InfeasibleLayoutError(
            f"corridor width {layout.corridor_width} m is below the {MIN_CORRIDOR_WIDTH} m minimum"
        )
    if layout.corridor_width + 2 * DOOR_MARGIN > layout.room_size:
        raise InfeasibleLayoutError(
            f"room size {layout.room_size} m cannot hold a {layout.corridor_width} m door"
        )
    if layout.stairs:
        needed = 2 * layout.stair_steps * layout.tread + 3 * STAIR_MARGIN
        if layout.room_size < needed:
            raise InfeasibleLayoutError(
                f"stairs with {layout.stair_steps} steps need rooms of at least {needed:.2f} m"
            )


def _spanning_doors(
    rng: np.random.Generator, rooms_x: int, rooms_y: int, extra: int
) -> List[Tuple[Tuple[int, int], Tuple[int, int]]]:
    pairs = [((a, b), (a + 1, b)) for a in range(rooms_x - 1) for b in range(rooms_y)]
    pairs += [((a, b), (a, b + 1)) for a in range(rooms_x) for b in range(rooms_y - 1)]
    order = rng.permutation(len(pairs))
    parent = {(a, b): (a, b) for a in range(rooms_x) for b in range(rooms_y)}

    def find(r: Tuple[int, int]) -> Tuple[int, int]:
        while parent[r] != r:
            parent[r] = parent[parent[r]]
            r = parent[r]
        return r

    tree, spare = [], []
    for k in order:
        p, q = pairs[int(k)]
        rp, rq = find(p), find(q)
        if rp != rq:
            parent[rp] = rq
            tree.append(pairs[int(k)])
        else:
            spare.append(pairs[int(k)])
    return tree + spare[:extra]


def generate_world(
    seed: int,
    layout: Optional[WorldLayout] = None,
    slope_threshold: float = 1.0,
    radial_step: float = 0.25,
) -> World:
    """Rooms on a grid joined by a seeded spanning tree of doors, with optional stairs."""
    layout = layout or WorldLayout()
    _check_layout(layout)
    rng = np.random.default_rng(seed)
    res, s, t = layout.resolution, layout.room_size, layout.wall_thickness

    width = layout.rooms_x * s + (layout.rooms_x + 1) * t
    height = layout.rooms_y * s + (layout.rooms_y + 1) * t
    nx, ny = int(math.ceil(width / res - 1e-9)), int(math.ceil(height / res - 1e-9))
    cx = (np.arange(nx) + 0.5) * res
    cy = (np.arange(ny) + 0.5) * res
    X, Y = np.meshgrid(cx, cy, indexing="ij")

    hf = np.full((nx, ny), layout.wall_height)
    labels = np.zeros((nx, ny), dtype=int)
    num_rooms = layout.rooms_x * layout.rooms_y
    order = rng.permutation(max(num_rooms, len(ROOM_NAMES)))
    names = [ROOM_NAMES[i % len(ROOM_NAMES)] for i in order]
    tag_names = [WALL_TAG]
    room_label: Dict[Tuple[int, int], int] = {}

    def origin_of(a: int, b: int) -> Point:
        return (t + a * (s + t), t + b * (s + t))

    for a in range(layout.rooms_x):
        for b in range(layout.rooms_y):
            x0, y0 = origin_of(a, b)
            inside = (X >= x0) & (X < x0 + s) & (Y >= y0) & (Y < y0 + s)
            hf[inside] = 0.0
            tag_names.append(names[len(room_label)])
            room_label[(a, b)] = len(tag_names) - 1
            labels[inside] = room_label[(a, b)]

    tag_names.append(DOOR_TAG)
    door_label = len(tag_names) - 1
    half = layout.corridor_width / 2
    for p, q in _spanning_doors(rng, layout.rooms_x, layout.rooms_y, layout.extra_doors):
        x0, y0 = origin_of(*p)
        centre = float(rng.uniform(half + DOOR_MARGIN, s - half - DOOR_MARGIN))
        if q[0] == p[0] + 1:
            gap = (X >= x0 + s) & (X < x0 + s + t) & (np.abs(Y - (y0 + centre)) <= half)
        else:
            gap = (Y >= y0 + s) & (Y < y0 + s + t) & (np.abs(X - (x0 + centre)) <= half)
        hf[gap] = 0.0
        labels[gap] = door_label

    if layout.stairs:
        tag_names.extend([STAIR_TAG, LANDING_TAG])
        stair_label, landing_label = len(tag_names) - 2, len(tag_names) - 1
        rooms = sorted(room_label)
        a, b = rooms[int(rng.integers(len(rooms)))]
        x0, y0 = origin_of(a, b)
        n, riser, tread = layout.stair_steps, layout.riser, layout.tread
        flight = n * tread
        landing = s - 2 * flight - 2 * STAIR_MARGIN
        band = (Y >= y0 + STAIR_MARGIN) & (Y < y0 + s - STAIR_MARGIN) & (X >= x0) & (X < x0 + s)
        dx = X - (x0 + STAIR_MARGIN)
        up = band & (dx >= 0) & (dx < flight)
        hf[up] = (np.floor(dx[up] / tread) + 1) * riser
        labels[up] = stair_label
        top = band & (dx >= flight) & (dx < flight + landing)
        hf[top] = n * riser
        labels[top] = landing_label
        dd = dx - flight - landing
        down = band & (dd >= 0) & (dd < flight)
        hf[down] = (n - np.floor(dd[down] / tread) - 1) * riser
        labels[down & (hf > 0)] = stair_label

    world = World(
        hf,
        resolution=res,
        labels=labels,
        tag_names=tag_names,
        wall_height=layout.wall_height,
        slope_threshold=slope_threshold,
        radial_step=radial_step,
        layout=layout,
        seed=seed,
    )

    comp, _ = world.components
    seen = set()
    for label in room_label.values():
        ids = np.unique(comp[(labels == label) & world.traversable])
        seen.update(int(i) for i in ids if i > 0)
    if len(seen) != 1:
        raise InfeasibleLayoutError(f"world for seed {seed} has {len(seen)} free-space components")
    logger.debug("generated world seed=%d shape=%s rooms=%d", seed, hf.shape, num_rooms)
    return world


def world_to_json(world: World) -> Dict[str, Any]:
    if world.layout is None or world.seed is None:
        raise ValueError("only generated worlds have a procedural JSON form")
    return {
        "format_version": WORLD_FORMAT_VERSION,
        "seed": int(world.seed),
        "layout": world.layout.model_dump(mode="json"),
        "slope_threshold": world.slope_threshold,
        "radial_step": world.radial_step,
    }


def world_from_json(data: Dict[str, Any]) -> World:
    version = data.get("format_version")
    if version != WORLD_FORMAT_VERSION:
        raise ValueError(f"unsupported world format version {version!r}")
    return generate_world(
        int(data["seed"]),
        WorldLayout.model_validate(data["layout"]),
        slope_threshold=float(data.get("slope_threshold", 1.0)),
        radial_step=float(data.get("radial_step", 0.25)),
    )
