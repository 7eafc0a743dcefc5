"""Vessel topology extraction.

A skeletonized likelihood map is first treated as a pixel graph (every
foreground pixel a vertex, 8-adjacency the edges), then contracted into
a compact vessel graph: branch and end pixels become nodes, maximal
degree-2 chains become polyline segments, and periodic anchor nodes are
dropped along long segments.  Segment paths can afterwards be re-traced
through a background-distance field so that the centerline follows the
ridge of the field rather than the raw skeleton.

Conventions: in-memory pixel coordinates are ``(row, col)``; the JSON
wire format uses ``x = col`` and ``y = row``.
"""

from __future__ import annotations

import heapq
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy import ndimage

from .errors import InputError
from .raster import binarize, thin

# Fixed neighbor iteration order (row-major) so that every traversal in
# this module is deterministic.
OFFSETS8: tuple[tuple[int, int], ...] = (
    (-1, -1), (-1, 0), (-1, 1),
    (0, -1), (0, 1),
    (1, -1), (1, 0), (1, 1),
)

_COUNT_KERNEL = np.array([[1, 1, 1], [1, 0, 1], [1, 1, 1]], dtype=np.int8)

_SQRT2 = math.sqrt(2.0)

NODE_KINDS = ("end", "branch", "anchor")
SEGMENT_LABELS = ("artery", "vein", "unknown")


@dataclass(eq=False)
class PixelGraph:
    """A binary skeleton viewed as a graph of pixels under 8-adjacency."""

    mask: np.ndarray

    def __post_init__(self) -> None:
        mask = np.asarray(self.mask, dtype=bool)
        if mask.ndim != 2:
            raise InputError("pixel graph mask must be 2-D")
        self.mask = mask

    @property
    def shape(self) -> tuple[int, int]:
        return self.mask.shape

    def node_count(self) -> int:
        return int(self.mask.sum())

    def degrees(self) -> np.ndarray:
        """Neighbor count per pixel (0 on background)."""
        counts = ndimage.convolve(
            self.mask.astype(np.int8), _COUNT_KERNEL, mode="constant", cval=0
        )
        return np.where(self.mask, counts, 0).astype(np.int8)


@dataclass(eq=False)
class GraphNode:
    id: int
    row: int
    col: int
    kind: str
    bw: float = 0.0
    p_artery: float = 0.0
    p_vein: float = 0.0
    label: str = "unknown"
    # Which annulus circle this node was cut at, if any ("inner" or
    # "outer").  Transient routing aid, not serialized.
    on_circle: str | None = None

    @property
    def rc(self) -> tuple[int, int]:
        return (self.row, self.col)


@dataclass(eq=False)
class VesselSegment:
    id: int
    node_ids: list[int]
    path: np.ndarray
    arc: float
    chord: float
    width: float | None = None
    label: str = "unknown"
    p_artery: float = 0.0
    p_vein: float = 0.0
    closed: bool = False
    retraced: bool = False
    retrace_fallback: bool = False

    def endpoints(self) -> tuple[int, int]:
        return self.node_ids[0], self.node_ids[-1]


@dataclass(eq=False)
class VesselGraph:
    nodes: list[GraphNode]
    segments: list[VesselSegment]
    shape: tuple[int, int]

    def node_by_id(self) -> dict[int, GraphNode]:
        return {n.id: n for n in self.nodes}

    def validate(self) -> None:
        """Check structural invariants; raises InputError on violation."""
        ids = [n.id for n in self.nodes]
        if len(ids) != len(set(ids)):
            raise InputError("duplicate node ids")
        by_id = self.node_by_id()
        for n in self.nodes:
            if n.kind not in NODE_KINDS:
                raise InputError(f"node {n.id}: bad kind {n.kind!r}")
        for s in self.segments:
            if len(s.path) < 1 or s.path.ndim != 2 or s.path.shape[1] != 2:
                raise InputError(f"segment {s.id}: malformed path")
            if s.label not in SEGMENT_LABELS:
                raise InputError(f"segment {s.id}: bad label {s.label!r}")
            if s.chord > s.arc + 1e-9:
                raise InputError(f"segment {s.id}: chord exceeds arc")
            for nid in s.node_ids:
                if nid not in by_id:
                    raise InputError(f"segment {s.id}: unknown node id {nid}")
            first, last = by_id[s.node_ids[0]], by_id[s.node_ids[-1]]
            for endpoint in (first, last):
                if endpoint.kind == "anchor":
                    raise InputError(
                        f"segment {s.id}: endpoint {endpoint.id} is an anchor"
                    )
            if tuple(s.path[0]) != first.rc or tuple(s.path[-1]) != last.rc:
                raise InputError(f"segment {s.id}: path does not meet its endpoints")
            if s.closed and tuple(s.path[0]) != tuple(s.path[-1]):
                raise InputError(f"segment {s.id}: closed flag on open path")


def polyline_lengths(path: np.ndarray) -> tuple[float, float]:
    """Arc length (sum of step lengths) and endpoint chord of a polyline."""
    path = np.asarray(path, dtype=np.float64)
    if len(path) < 2:
        return 0.0, 0.0
    steps = np.diff(path, axis=0)
    arc = float(np.sqrt((steps * steps).sum(axis=1)).sum())
    chord = float(math.dist(path[0], path[-1]))
    return arc, chord


def union_graph(values: np.ndarray, thresholds) -> PixelGraph:
    """Union of skeletons over all binarization thresholds.

    Thresholding at several likelihood levels and skeletonizing each
    mask captures both faint vessels (low thresholds) and well-centered
    cores (high thresholds); the pixel-wise union is the working
    superset that contraction and retracing then clean up.

    Skeletons from adjacent thresholds can land one pixel apart along
    the same vessel, which would turn the union into a two-pixel band
    whose every pixel looks like a branch.  A final thinning pass
    collapses those bands; it is a no-op wherever the per-threshold
    skeletons already agree.
    """
    thresholds = tuple(thresholds)
    if not thresholds:
        raise InputError("at least one threshold required")
    if any(t2 <= t1 for t1, t2 in zip(thresholds, thresholds[1:])):
        raise InputError("thresholds must be strictly increasing")
    values = np.asarray(values)
    union = np.zeros(values.shape, dtype=bool)
    for t in thresholds:
        union |= thin(binarize(values, t))
    return PixelGraph(thin(union))


def _anchor_indices(n_pixels: int, spacing: int) -> list[int]:
    # Anchor at every multiple of the spacing, endpoints excluded.
    return [i for i in range(spacing, n_pixels - 1, spacing) if i % spacing == 0]


class _GraphBuilder:
    def __init__(self, shape: tuple[int, int]):
        self.nodes: list[GraphNode] = []
        self.segments: list[VesselSegment] = []
        self.shape = shape
        self._node_at: dict[tuple[int, int], int] = {}

    def node(self, rc: tuple[int, int], kind: str) -> int:
        nid = self._node_at.get(rc)
        if nid is None:
            nid = len(self.nodes)
            self.nodes.append(GraphNode(nid, rc[0], rc[1], kind))
            self._node_at[rc] = nid
        return nid

    def segment(self, path: list[tuple[int, int]], end_ids: tuple[int, int],
                spacing: int, closed: bool = False) -> None:
        arr = np.array(path, dtype=np.int64)
        arc, chord = polyline_lengths(arr)
        node_ids = [end_ids[0]]
        for i in _anchor_indices(len(path), spacing):
            node_ids.append(self.node(path[i], "anchor"))
        node_ids.append(end_ids[1])
        self.segments.append(
            VesselSegment(
                id=len(self.segments),
                node_ids=node_ids,
                path=arr,
                arc=arc,
                chord=chord,
                closed=closed,
            )
        )

    def build(self) -> VesselGraph:
        return VesselGraph(self.nodes, self.segments, self.shape)


def contract(g: PixelGraph, spacing: int = 10) -> VesselGraph:
    """Collapse degree-2 pixel chains into polyline segments.

    Pixels of degree 1 become end nodes and pixels of degree >= 3
    branch nodes; every maximal chain between two such terminals
    becomes one segment whose path lists each traversed pixel.  Anchor
    nodes are placed along a path at every ``spacing``-th pixel
    (endpoints excluded).  An isolated pixel yields a bare end node.
    A simple cycle touching no terminal yields one segment flagged
    ``closed`` whose path starts and ends at its base pixel; the base
    is recorded as an end node.

    Traversal order is fixed (raster order over pixels, row-major over
    neighbor offsets) so output ids are deterministic.
    """
    if spacing < 2:
        raise InputError("spacing must be >= 2")
    mask = g.mask
    deg = g.degrees()
    builder = _GraphBuilder(g.shape)
    if not mask.any():
        return builder.build()

    consumed = np.zeros(mask.shape, dtype=bool)
    visited_edges: set[tuple[tuple[int, int], tuple[int, int]]] = set()

    def edge_key(a, b):
        return (a, b) if a <= b else (b, a)

    def neighbors(rc):
        r, c = rc
        for dr, dc in OFFSETS8:
            rr, cc = r + dr, c + dc
            if 0 <= rr < mask.shape[0] and 0 <= cc < mask.shape[1] and mask[rr, cc]:
                yield (rr, cc)

    terminals = np.argwhere(mask & (deg != 2))
    for r, c in terminals:
        p = (int(r), int(c))
        kind = "end" if deg[p] <= 1 else "branch"
        pid = builder.node(p, kind)
        consumed[p] = True
        for q in neighbors(p):
            if edge_key(p, q) in visited_edges:
                continue
            visited_edges.add(edge_key(p, q))
            path = [p, q]
            prev, cur = p, q
            while deg[cur] == 2:
                consumed[cur] = True
                nxt = next(n for n in neighbors(cur) if n != prev)
                visited_edges.add(edge_key(cur, nxt))
                path.append(nxt)
                prev, cur = cur, nxt
            consumed[cur] = True
            qkind = "end" if deg[cur] <= 1 else "branch"
            qid = builder.node(cur, qkind)
            builder.segment(path, (pid, qid), spacing)

    # Anything left is a pure cycle of degree-2 pixels.
    leftover = np.argwhere(mask & ~consumed)
    for r, c in leftover:
        start = (int(r), int(c))
        if consumed[start]:
            continue
        consumed[start] = True
        path = [start]
        prev, cur = start, next(iter(neighbors(start)))
        while cur != start:
            consumed[cur] = True
            path.append(cur)
            nxt = next(n for n in neighbors(cur) if n != prev)
            prev, cur = cur, nxt
        path.append(start)
        base = builder.node(start, "end")
        builder.segment(path, (base, base), spacing, closed=True)

    return builder.build()


def decompose(vg: VesselGraph) -> list[VesselSegment]:
    """Return the graph's segments as an ordered list.

    The segments partition the vasculature: each has its polyline path,
    endpoints that are end or branch nodes, and the ``closed`` flag for
    cycles.  The graph is validated before the list is handed out.
    """
    vg.validate()
    return list(vg.segments)


def annotate_bw(vg: VesselGraph, field: np.ndarray) -> VesselGraph:
    """Stamp each node with the field value at its pixel."""
    field = np.asarray(field)
    if field.shape != tuple(vg.shape):
        raise InputError("field shape does not match graph extent")
    for n in vg.nodes:
        n.bw = float(field[n.row, n.col])
    return vg


def retrace(
    seg: VesselSegment,
    field: np.ndarray,
    g: PixelGraph,
    corridor: int = 5,
    epsilon: float = 1e-3,
) -> VesselSegment:
    """Re-route a segment's path along the ridge of a scalar field.

    A shortest path is found between the segment's endpoints inside a
    corridor (Chebyshev radius ``corridor`` around the original path)
    restricted to pixels with positive field value.  The cost of a step
    between pixels u and v is ``1 / (epsilon + field[u] + field[v])``,
    so high-field pixels are cheap and the minimal path hugs the ridge.
    Exploration order is deterministic: the frontier is keyed by
    (cost, arc length, row, col), so among equal-cost routes the
    geometrically shortest wins (under a constant field the result is
    a geodesic and never longer than the original path).

    Paths of at most 2 pixels and closed paths are returned unchanged.
    If an endpoint has no positive field under the corridor, or no
    positive-field route connects the endpoints, the original path is
    kept and ``retrace_fallback`` is set on the returned segment.

    Arc and chord lengths are recomputed; endpoints never move.
    """
    if corridor < 1:
        raise InputError("corridor must be >= 1")
    if epsilon <= 0:
        raise InputError("epsilon must be positive")
    field = np.asarray(field, dtype=np.float64)
    if field.shape != g.shape:
        raise InputError("field shape does not match pixel graph")
    path = seg.path
    for endpoint in (path[0], path[-1]):
        if not g.mask[endpoint[0], endpoint[1]]:
            raise InputError(f"segment {seg.id}: endpoint not in pixel graph")
    if len(path) <= 2 or seg.closed or tuple(path[0]) == tuple(path[-1]):
        return replace(seg, path=path.copy(), node_ids=list(seg.node_ids))

    r0 = max(int(path[:, 0].min()) - corridor, 0)
    r1 = min(int(path[:, 0].max()) + corridor, field.shape[0] - 1)
    c0 = max(int(path[:, 1].min()) - corridor, 0)
    c1 = min(int(path[:, 1].max()) + corridor, field.shape[1] - 1)
    window = field[r0:r1 + 1, c0:c1 + 1]

    near_path = np.zeros(window.shape, dtype=bool)
    near_path[path[:, 0] - r0, path[:, 1] - c0] = True
    size = 2 * corridor + 1
    near_path = ndimage.maximum_filter(near_path, size=size, mode="constant")
    allowed = near_path & (window > 0)

    start = (int(path[0, 0]) - r0, int(path[0, 1]) - c0)
    goal = (int(path[-1, 0]) - r0, int(path[-1, 1]) - c0)

    def fallback() -> VesselSegment:
        return replace(
            seg, path=path.copy(), node_ids=list(seg.node_ids),
            retrace_fallback=True,
        )

    if not (allowed[start] and allowed[goal]):
        return fallback()

    h, w = window.shape
    best_cost = np.full((h, w), np.inf, dtype=np.float64)
    best_arc = np.full((h, w), np.inf, dtype=np.float64)
    parent = np.full((h, w), -1, dtype=np.int8)
    done = np.zeros((h, w), dtype=bool)
    best_cost[start] = 0.0
    best_arc[start] = 0.0
    frontier = [(0.0, 0.0, start[0], start[1])]
    while frontier:
        cost, arc, r, c = heapq.heappop(frontier)
        if done[r, c]:
            continue
        done[r, c] = True
        if (r, c) == goal:
            break
        fu = window[r, c]
        for k, (dr, dc) in enumerate(OFFSETS8):
            rr, cc = r + dr, c + dc
            if not (0 <= rr < h and 0 <= cc < w) or done[rr, cc] or not allowed[rr, cc]:
                continue
            cand_cost = cost + 1.0 / (epsilon + fu + window[rr, cc])
            cand_arc = arc + (_SQRT2 if dr and dc else 1.0)
            if (cand_cost, cand_arc) < (best_cost[rr, cc], best_arc[rr, cc]):
                best_cost[rr, cc] = cand_cost
                best_arc[rr, cc] = cand_arc
                parent[rr, cc] = k
                heapq.heappush(frontier, (cand_cost, cand_arc, rr, cc))

    if not done[goal]:
        return fallback()

    rev = [goal]
    while rev[-1] != start:
        r, c = rev[-1]
        dr, dc = OFFSETS8[parent[r, c]]
        rev.append((r - dr, c - dc))
    new_path = np.array(
        [(r + r0, c + c0) for r, c in reversed(rev)], dtype=np.int64
    )
    arc, chord = polyline_lengths(new_path)
    return replace(
        seg, path=new_path, node_ids=list(seg.node_ids),
        arc=arc, chord=chord, retraced=True,
    )


def retrace_graph(
    vg: VesselGraph,
    field: np.ndarray,
    g: PixelGraph,
    corridor: int = 5,
    epsilon: float = 1e-3,
    spacing: int = 10,
) -> tuple[VesselGraph, int]:
    """Retrace every segment and rebuild anchors on the new paths.

    Returns the rebuilt graph and the number of segments that fell
    back to their original path.
    """
    endpoint_ids = set()
    for s in vg.segments:
        endpoint_ids.add(s.node_ids[0])
        endpoint_ids.add(s.node_ids[-1])
    by_id = vg.node_by_id()

    builder = _GraphBuilder(vg.shape)
    # Preserve terminal nodes (and bare isolated nodes) with their kinds.
    for n in vg.nodes:
        if n.kind != "anchor":
            builder.node(n.rc, n.kind)
    fallbacks = 0
    for s in vg.segments:
        new = retrace(s, field, g, corridor=corridor, epsilon=epsilon)
        fallbacks += new.retrace_fallback
        first = by_id[s.node_ids[0]]
        last = by_id[s.node_ids[-1]]
        path = [tuple(p) for p in new.path]
        node_ids = [builder.node(first.rc, first.kind)]
        for i in _anchor_indices(len(path), spacing):
            node_ids.append(builder.node(path[i], "anchor"))
        node_ids.append(builder.node(last.rc, last.kind))
        builder.segments.append(
            replace(new, id=len(builder.segments), node_ids=node_ids)
        )
    out = builder.build()
    return out, fallbacks


def to_json(vg: VesselGraph) -> dict:
    """Serialize a vessel graph to a JSON-compatible dict (x = col, y = row)."""
    nodes = [
        {
            "id": int(n.id),
            "x": int(n.col),
            "y": int(n.row),
            "kind": n.kind,
            "bw": float(n.bw),
            "p_artery": float(n.p_artery),
            "p_vein": float(n.p_vein),
            "label": n.label,
        }
        for n in vg.nodes
    ]
    segments = [
        {
            "id": int(s.id),
            "node_ids": [int(i) for i in s.node_ids],
            "path": [[int(c), int(r)] for r, c in s.path],
            "arc": float(s.arc),
            "chord": float(s.chord),
            "width": None if s.width is None else float(s.width),
            "label": s.label,
            "p_artery": s.p_artery,
            "p_vein": s.p_vein,
            "closed": s.closed,
            "flags": (["retraced"] if s.retraced else [])
            + (["retrace_fallback"] if s.retrace_fallback else []),
        }
        for s in vg.segments
    ]
    return {
        "width": int(vg.shape[1]),
        "height": int(vg.shape[0]),
        "nodes": nodes,
        "segments": segments,
    }


def from_json(doc: dict) -> VesselGraph:
    """Rebuild a vessel graph from its JSON dict; inverse of :func:`to_json`."""
    try:
        shape = (int(doc["height"]), int(doc["width"]))
        nodes = [
            GraphNode(
                id=int(n["id"]),
                row=int(n["y"]),
                col=int(n["x"]),
                kind=str(n["kind"]),
                bw=float(n["bw"]),
                p_artery=float(n["p_artery"]),
                p_vein=float(n["p_vein"]),
                label=str(n["label"]),
            )
            for n in doc["nodes"]
        ]
        segments = []
        for s in doc["segments"]:
            path = np.array([[int(y), int(x)] for x, y in s["path"]], dtype=np.int64)
            flags = s.get("flags", [])
            segments.append(
                VesselSegment(
                    id=int(s["id"]),
                    node_ids=[int(i) for i in s["node_ids"]],
                    path=path,
                    arc=float(s["arc"]),
                    chord=float(s["chord"]),
                    width=None if s["width"] is None else float(s["width"]),
                    label=str(s["label"]),
                    p_artery=float(s.get("p_artery", 0.0)),
                    p_vein=float(s.get("p_vein", 0.0)),
                    closed=bool(s.get("closed", False)),
                    retraced="retraced" in flags,
                    retrace_fallback="retrace_fallback" in flags,
                )
            )
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"malformed vessel graph document: {exc}") from None
    vg = VesselGraph(nodes, segments, shape)
    vg.validate()
    return vg


def save_graph(path: str | Path, vg: VesselGraph) -> None:
    Path(path).write_text(json.dumps(to_json(vg), indent=1, sort_keys=True))


def load_graph(path: str | Path) -> VesselGraph:
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"{path}: cannot read vessel graph: {exc}") from None
    return from_json(doc)
