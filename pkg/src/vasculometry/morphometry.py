"""Vessel caliber and artery-vein ratio.

Widths are measured from the distance transform of the binarized
likelihood map (half width doubled, sampled at quarter points of each
path).  Measurement happens inside an annulus around the optic disc:
segments are clipped at the circle crossings, components that do not
reach both circles are dropped, the clipped graph is routed into whole
vessels, and the six widest arteries and veins feed the Knudtson
pairing that yields CRAE, CRVE, and their ratio.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .errors import InputError
from .topology import (
    GraphNode,
    VesselGraph,
    VesselSegment,
    polyline_lengths,
)

# Branching coefficients of the revised caliber formulas.
ARTERY_SCALE = 0.88
VEIN_SCALE = 0.95

# How many widest vessels per class enter the caliber summary.
TOP_K = 6


@dataclass
class DiscGeometry:
    """Optic disc position and size, in pixels (x = col, y = row)."""

    cx: float
    cy: float
    diameter: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.diameter) and self.diameter > 0):
            raise InputError("disc diameter must be positive")
        if not (math.isfinite(self.cx) and math.isfinite(self.cy)):
            raise InputError("disc center must be finite")


@dataclass
class Annulus:
    """Ring around a center point; radii in pixels."""

    cx: float
    cy: float
    r_inner: float
    r_outer: float

    def __post_init__(self) -> None:
        if not 0 < self.r_inner < self.r_outer:
            raise InputError("annulus requires 0 < r_inner < r_outer")

    def to_json(self) -> dict:
        return {
            "cx": self.cx, "cy": self.cy,
            "r_inner": self.r_inner, "r_outer": self.r_outer,
        }


@dataclass
class WidthSample:
    segment_id: int
    width: float
    label: str

    def __post_init__(self) -> None:
        if not (math.isfinite(self.width) and self.width > 0):
            raise InputError("width sample must be positive")


def load_disc(path: str | Path) -> DiscGeometry:
    """Read disc geometry JSON with keys cx, cy, diameter."""
    try:
        doc = json.loads(Path(path).read_text())
        return DiscGeometry(float(doc["cx"]), float(doc["cy"]), float(doc["diameter"]))
    except FileNotFoundError:
        raise InputError(f"{path}: file not found") from None
    except (KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
        raise InputError(f"{path}: malformed disc geometry: {exc}") from None


def save_disc(path: str | Path, disc: DiscGeometry) -> None:
    doc = {"cx": disc.cx, "cy": disc.cy, "diameter": disc.diameter}
    Path(path).write_text(json.dumps(doc, indent=1, sort_keys=True))


def annulus_from_disc(disc: DiscGeometry, multiples: tuple[float, float]) -> Annulus:
    """Annulus whose radii are the given multiples of the disc diameter."""
    inner, outer = multiples
    return Annulus(disc.cx, disc.cy, inner * disc.diameter, outer * disc.diameter)


def segment_width(seg: VesselSegment, mask_dist: np.ndarray) -> float | None:
    """Caliber of a segment from the mask distance field, in pixels.

    Sampled at the path pixels nearest the 0.25, 0.50, and 0.75
    fractional arc positions; the field holds half widths, so the
    result is twice their mean.  Paths shorter than 4 pixels give no
    sample (returns None).  A path lying off the binary mask reads
    zeros and returns width 0.0, which callers treat as unusable.
    """
    mask_dist = np.asarray(mask_dist)
    path = seg.path
    if len(path) < 4:
        return None
    steps = np.sqrt((np.diff(path, axis=0) ** 2).sum(axis=1))
    cum = np.concatenate([[0.0], np.cumsum(steps)])
    total = cum[-1]
    if total <= 0:
        return None
    halves = []
    for frac in (0.25, 0.50, 0.75):
        idx = int(np.argmin(np.abs(cum - frac * total)))
        r, c = path[idx]
        halves.append(float(mask_dist[r, c]))
    return 2.0 * float(np.mean(halves))


def _clip_to_annulus(vg: VesselGraph, a: Annulus) -> VesselGraph:
    """Keep the parts of each segment whose pixels lie inside the annulus.

    Pieces are cut at circle crossings; a cut endpoint becomes an end
    node with ``on_circle`` recording which circle cut it.  Pieces
    shorter than 2 pixels are dropped.  Junction connectivity survives
    wherever the junction pixel itself is inside the annulus.
    """
    by_id = vg.node_by_id()
    nodes: list[GraphNode] = []
    node_at: dict[tuple[int, int], int] = {}

    def node_for(rc, kind, on_circle=None) -> int:
        nid = node_at.get(rc)
        if nid is None:
            nid = len(nodes)
            nodes.append(GraphNode(nid, rc[0], rc[1], kind, on_circle=on_circle))
            node_at[rc] = nid
        return nid

    segments: list[VesselSegment] = []
    for s in vg.segments:
        d = np.hypot(s.path[:, 1] - a.cx, s.path[:, 0] - a.cy)
        inside = (d >= a.r_inner) & (d <= a.r_outer)
        if not inside.any():
            continue
        # Runs of consecutive inside pixels.
        idx = np.nonzero(inside)[0]
        run_breaks = np.nonzero(np.diff(idx) > 1)[0]
        starts = np.concatenate([[0], run_breaks + 1])
        ends = np.concatenate([run_breaks, [len(idx) - 1]])
        for si, ei in zip(starts, ends):
            i0, i1 = int(idx[si]), int(idx[ei])
            if i1 - i0 < 1:
                continue
            piece = s.path[i0:i1 + 1]
            if i0 == 0:
                first_node = by_id[s.node_ids[0]]
                fid = node_for(tuple(piece[0]), first_node.kind)
            else:
                circle = "inner" if d[i0 - 1] < a.r_inner else "outer"
                fid = node_for(tuple(piece[0]), "end", circle)
            if i1 == len(s.path) - 1:
                last_node = by_id[s.node_ids[-1]]
                lid = node_for(tuple(piece[-1]), last_node.kind)
            else:
                circle = "inner" if d[i1 + 1] < a.r_inner else "outer"
                lid = node_for(tuple(piece[-1]), "end", circle)
            arc, chord = polyline_lengths(piece)
            segments.append(
                VesselSegment(
                    id=len(segments),
                    node_ids=[fid, lid],
                    path=piece.copy(),
                    arc=arc,
                    chord=chord,
                    width=None,
                    label=s.label,
                    p_artery=s.p_artery,
                    p_vein=s.p_vein,
                    closed=s.closed and i0 == 0 and i1 == len(s.path) - 1,
                )
            )
    return VesselGraph(nodes, segments, vg.shape)


def _components(vg: VesselGraph) -> list[list[VesselSegment]]:
    parent = {s.id: s.id for s in vg.segments}

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    touched: dict[int, int] = {}
    for s in vg.segments:
        for nid in s.endpoints():
            if nid in touched:
                ra, rb = find(touched[nid]), find(s.id)
                if ra != rb:
                    parent[rb] = ra
            else:
                touched[nid] = s.id
    groups: dict[int, list[VesselSegment]] = {}
    for s in vg.segments:
        groups.setdefault(find(s.id), []).append(s)
    return [groups[k] for k in sorted(groups)]


def annulus_subgraph(vg: VesselGraph, a: Annulus, require_span: bool = True) -> VesselGraph:
    """Clip the graph to an annulus around the disc.

    Segments are cut at the circle crossings; cut endpoints become end
    nodes that remember which circle cut them.  With ``require_span``
    (the default), connected components that do not touch both circles
    are dropped entirely.  An annulus lying wholly outside the image
    yields an empty graph with a warning; one merely extending past the
    image edge is clipped silently by geometry (paths cannot leave the
    image) but also warned about.
    """
    h, w = vg.shape
    if (a.cx + a.r_outer < 0 or a.cx - a.r_outer > w - 1
            or a.cy + a.r_outer < 0 or a.cy - a.r_outer > h - 1):
        warnings.warn("annulus lies outside the image extent")
        return VesselGraph([], [], vg.shape)
    if (a.cx - a.r_outer < 0 or a.cx + a.r_outer > w - 1
            or a.cy - a.r_outer < 0 or a.cy + a.r_outer > h - 1):
        warnings.warn("annulus extends beyond the image extent")

    clipped = _clip_to_annulus(vg, a)
    if not require_span:
        return clipped

    keep: list[VesselSegment] = []
    by_id = clipped.node_by_id()
    for comp in _components(clipped):
        circles = {
            by_id[nid].on_circle
            for s in comp
            for nid in s.endpoints()
        }
        if "inner" in circles and "outer" in circles:
            keep.extend(comp)

    node_ids = sorted({nid for s in keep for nid in s.node_ids})
    id_map = {old: new for new, old in enumerate(node_ids)}
    nodes = [replace(by_id[old], id=id_map[old]) for old in node_ids]
    segments = [
        replace(
            s,
            id=i,
            node_ids=[id_map[n] for n in s.node_ids],
            path=s.path.copy(),
        )
        for i, s in enumerate(keep)
    ]
    return VesselGraph(nodes, segments, vg.shape)


def _mean_direction(path: np.ndarray, tail: bool, k: int = 5) -> np.ndarray | None:
    # Mean unit step direction over the last (tail) or first k pixels.
    pts = path[-k:] if tail else path[:k]
    if len(pts) < 2:
        return None
    steps = np.diff(np.asarray(pts, dtype=np.float64), axis=0)
    norms = np.sqrt((steps ** 2).sum(axis=1))
    good = norms > 0
    if not good.any():
        return None
    mean = (steps[good] / norms[good, None]).mean(axis=0)
    n = float(np.hypot(*mean))
    return None if n == 0 else mean / n


def _turning_angle(direction: np.ndarray | None, outgoing: np.ndarray | None) -> float:
    if direction is None or outgoing is None:
        return 0.0
    return float(math.acos(np.clip(np.dot(direction, outgoing), -1.0, 1.0)))


def route_vessels(sub: VesselGraph) -> list[VesselSegment]:
    """Assemble clipped annulus segments into whole crossing vessels.

    Greedy two-pass sweep.  First, from every end node cut by the inner
    circle (widest incident segment first), walk outward: at each
    junction take the unvisited continuation with the smallest turning
    angle between the mean direction of the last five path pixels and
    the candidate's first five.  A walk succeeds when it reaches an
    outer-circle cut or any node already on an emitted vessel; it fails
    on a dead end, a loop, or falling back to the start circle.  Only
    successful walks consume their segments.  The second sweep repeats
    from outer-circle cuts inward over what is left.  Emitted vessels
    are edge-disjoint and oriented inner to outer.

    Segment widths (see :func:`segment_width`) drive the sweep order;
    segments without a width rank last.  Vessels carry an arc-weighted
    majority label of their parts.
    """
    by_id = sub.node_by_id()
    incident: dict[int, list[VesselSegment]] = {}
    for s in sub.segments:
        for nid in set(s.endpoints()):
            incident.setdefault(nid, []).append(s)

    def seg_width(s: VesselSegment) -> float:
        return -1.0 if s.width is None else s.width

    def start_order(circle: str) -> list[GraphNode]:
        ends = [n for n in sub.nodes if n.on_circle == circle and n.id in incident]
        return sorted(
            ends,
            key=lambda n: (-max(seg_width(s) for s in incident[n.id]), n.row, n.col),
        )

    visited: set[int] = set()
    emitted_nodes: set[int] = set()
    vessels: list[VesselSegment] = []

    def walk(start: GraphNode, target: str, origin: str) -> None:
        pixels: list[np.ndarray] = []
        used: list[VesselSegment] = []
        seen_nodes = {start.id}
        node = start
        while True:
            candidates = [
                s for s in incident.get(node.id, [])
                if s.id not in visited and s not in used
            ]
            if not candidates:
                success = node.id in emitted_nodes and bool(used)
                break
            if pixels:
                direction = _mean_direction(np.vstack(pixels), tail=True)
                chosen = min(
                    candidates,
                    key=lambda s: (
                        _turning_angle(direction, _outgoing(s, node)),
                        s.id,
                    ),
                )
            else:
                chosen = max(candidates, key=lambda s: (seg_width(s), -s.id))
            path = chosen.path
            if chosen.node_ids[-1] == node.id and chosen.node_ids[0] != node.id:
                path = path[::-1]
            if pixels and tuple(path[0]) == tuple(pixels[-1][-1]):
                path = path[1:]
            pixels.append(path)
            used.append(chosen)
            other = (
                chosen.node_ids[0]
                if chosen.node_ids[-1] == node.id and chosen.node_ids[0] != node.id
                else chosen.node_ids[-1]
            )
            node = by_id[other]
            if node.on_circle == target:
                success = True
                break
            if node.id in emitted_nodes:
                success = True
                break
            if node.on_circle == origin or node.id in seen_nodes:
                success = False
                break
            seen_nodes.add(node.id)
        if not success or not used:
            return
        full = np.vstack(pixels)
        arc, chord = polyline_lengths(full)
        label = _majority_label(used)
        visited.update(s.id for s in used)
        for s in used:
            emitted_nodes.update(s.node_ids)
        vessels.append(
            VesselSegment(
                id=len(vessels),
                node_ids=[start.id, node.id],
                path=full,
                arc=arc,
                chord=chord,
                label=label,
            )
        )

    def _outgoing(s: VesselSegment, node: GraphNode) -> np.ndarray | None:
        path = s.path
        if s.node_ids[-1] == node.id and s.node_ids[0] != node.id:
            path = path[::-1]
        return _mean_direction(path, tail=False)

    def _majority_label(parts: list[VesselSegment]) -> str:
        score = {"artery": 0.0, "vein": 0.0}
        for s in parts:
            if s.label in score:
                score[s.label] += s.arc
        if score["artery"] > score["vein"]:
            return "artery"
        if score["vein"] > score["artery"]:
            return "vein"
        return "unknown"

    for start in start_order("inner"):
        walk(start, target="outer", origin="inner")
    for start in start_order("outer"):
        walk(start, target="inner", origin="outer")

    # Normalize orientation: vessels run from the center outward.
    center_nodes = [n for n in sub.nodes if n.on_circle == "inner"]
    for v in vessels:
        if float(np.hypot(*(v.path[0] - v.path[-1]))) == 0.0:
            continue
        if center_nodes:
            cx = np.mean([n.col for n in center_nodes])
            cy = np.mean([n.row for n in center_nodes])
            d0 = math.hypot(v.path[0][1] - cx, v.path[0][0] - cy)
            d1 = math.hypot(v.path[-1][1] - cx, v.path[-1][0] - cy)
            if d0 > d1:
                v.path = v.path[::-1].copy()
                v.node_ids = list(reversed(v.node_ids))
    return vessels


def top_k_by_label(
    paths: list[VesselSegment],
    widths: list[WidthSample],
    k: int = TOP_K,
) -> tuple[list[float], list[float]]:
    """The k largest artery and vein widths, each list descending.

    Unknown labels and unusable widths never make it in: WidthSample
    construction already requires width > 0.  Fewer than k per class is
    fine; zero on either side makes the ratio not computable, which the
    caller reports.
    """
    if k < 1:
        raise InputError("k must be >= 1")
    known_ids = {p.id for p in paths}
    arteries: list[float] = []
    veins: list[float] = []
    for sample in widths:
        if sample.segment_id not in known_ids:
            raise InputError(f"width sample for unknown path id {sample.segment_id}")
        if sample.label == "artery":
            arteries.append(sample.width)
        elif sample.label == "vein":
            veins.append(sample.width)
    arteries.sort(reverse=True)
    veins.sort(reverse=True)
    return arteries[:k], veins[:k]


def knudtson_equivalent(widths, scale: float) -> float:
    """Summary caliber by iterative widest-narrowest pairing.

    Sort descending, then per round repeatedly pop the widest f and the
    narrowest l and append ``scale * sqrt(f**2 + l**2)``; an unpaired
    middle value carries over; merge, re-sort, and repeat until one
    value remains.  A single input width is returned unchanged.  The
    scale is 0.88 for arteries and 0.95 for veins.
    """
    ws = [float(w) for w in widths]
    if not ws:
        raise InputError("width list is empty")
    if any(not math.isfinite(w) or w <= 0 for w in ws):
        raise InputError("widths must be finite and positive")
    if not (math.isfinite(scale) and scale > 0):
        raise InputError("branching coefficient must be positive")
    ws.sort(reverse=True)
    while len(ws) > 1:
        combined = []
        while len(ws) >= 2:
            f = ws.pop(0)
            l = ws.pop()
            combined.append(scale * math.hypot(f, l))
        ws = sorted(ws + combined, reverse=True)
    return ws[0]


def avr(arteries, veins) -> float:
    """CRAE/CRVE ratio over the widest min(len(A), len(V), 6) per side."""
    arteries = list(arteries)
    veins = list(veins)
    if not arteries or not veins:
        raise InputError("AVR needs at least one artery and one vein width")
    k = min(len(arteries), len(veins), TOP_K)
    a = sorted((float(w) for w in arteries), reverse=True)[:k]
    v = sorted((float(w) for w in veins), reverse=True)[:k]
    return knudtson_equivalent(a, ARTERY_SCALE) / knudtson_equivalent(v, VEIN_SCALE)
