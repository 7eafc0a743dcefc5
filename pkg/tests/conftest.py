from __future__ import annotations

import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20260816)


def random_blob_mask(rng: np.random.Generator, h: int, w: int, p: float = 0.45) -> np.ndarray:
    return rng.random((h, w)) < p


def build_graph(paths, labels=None, shape=(128, 128)):
    """Graph from explicit pixel paths; shared endpoints become one node."""
    from vasculometry.topology import (
        GraphNode,
        VesselGraph,
        VesselSegment,
        polyline_lengths,
    )

    nodes = []
    node_at = {}
    segs = []

    def node_for(rc):
        if rc not in node_at:
            node_at[rc] = len(nodes)
            nodes.append(GraphNode(id=len(nodes), row=rc[0], col=rc[1], kind="end"))
        return node_at[rc]

    for i, pix in enumerate(paths):
        arr = np.asarray(pix)
        arc, chord = polyline_lengths(arr)
        segs.append(VesselSegment(
            id=i,
            node_ids=[node_for(tuple(arr[0]))], path=arr, arc=arc, chord=chord,
            label="unknown" if labels is None else labels[i],
        ))
        segs[-1].node_ids.append(node_for(tuple(arr[-1])))
    for n in nodes:
        deg = sum(n.id in s.node_ids for s in segs)
        if deg > 1:
            n.kind = "branch"
    return VesselGraph(nodes=nodes, segments=segs, shape=shape)


def random_vessel_tree(rng: np.random.Generator, n_segments: int = 12,
                       tau: float = 0.05):
    """Random tree-shaped vessel graph with probability-derived labels.

    Segments attach to a uniformly chosen existing node, so the
    segment adjacency is a tree.  Each segment gets independent
    artery/vein probabilities; its label follows the same decision
    rule the pipeline uses (unknown below tau or on ties).
    """
    from vasculometry.topology import GraphNode, VesselGraph, VesselSegment

    nodes = [GraphNode(id=0, row=0, col=0, kind="branch")]
    segments = []
    for i in range(n_segments):
        origin = nodes[int(rng.integers(len(nodes)))]
        new = GraphNode(id=len(nodes), row=0, col=len(nodes), kind="end")
        nodes.append(new)
        pa, pv = float(rng.random()), float(rng.random())
        peak = max(pa, pv)
        if peak < tau or pa == pv:
            label = "unknown"
        else:
            label = "artery" if pa > pv else "vein"
        path = np.array([[origin.row, origin.col], [new.row, new.col]])
        segments.append(VesselSegment(
            id=i, node_ids=[origin.id, new.id], path=path,
            arc=float(rng.uniform(3.0, 60.0)), chord=1.0,
            label=label, p_artery=pa, p_vein=pv,
        ))
    return VesselGraph(nodes=nodes, segments=segments, shape=(64, 64))


def random_pixel_tree(rng: np.random.Generator, n_target: int = 60,
                      size: int = 64) -> np.ndarray:
    """Grow a pixel set that is a tree under 8-adjacency.

    Each new pixel must touch exactly one existing pixel, so no cycles
    and no redundant diagonal shortcuts ever appear.
    """
    mask = np.zeros((size, size), dtype=bool)
    start = (size // 2, size // 2)
    mask[start] = True
    frontier = [start]
    offsets = [(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)]
    placed = 1
    attempts = 0
    while placed < n_target and attempts < n_target * 60:
        attempts += 1
        r, c = frontier[rng.integers(len(frontier))]
        dr, dc = offsets[rng.integers(8)]
        rr, cc = r + dr, c + dc
        if not (1 <= rr < size - 1 and 1 <= cc < size - 1) or mask[rr, cc]:
            continue
        touches = sum(
            mask[rr + a, cc + b] for a, b in offsets
        )
        if touches != 1:
            continue
        mask[rr, cc] = True
        frontier.append((rr, cc))
        placed += 1
    return mask
