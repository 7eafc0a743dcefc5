"""Artery/vein labeling.

Per-pixel artery and vein probability grids are sampled onto the
vessel graph: nodes take the value at their pixel, segments the mean
over their path.  A segment is labeled by whichever probability is
larger; the margin between the two means is its confidence.  Labels
then spread along the graph: segments that are unknown or weakly
labeled adopt the weighted majority of their neighbors, so confident
stretches decide ambiguous ones across junctions.
"""

from __future__ import annotations

import numpy as np

from .errors import InputError
from .raster import load_likelihood
from .topology import VesselGraph


def load_av_maps(
    artery_path=None,
    vein_path=None,
    combined_path=None,
    channel_artery: str = "red",
    channel_vein: str = "green",
) -> tuple[np.ndarray, np.ndarray]:
    """Load artery/vein probability grids scaled to [0, 1].

    Either two single-band files (one per class) or one multi-band
    file.  For a combined file the artery and vein bands default to
    red and green.  Values are uint8 intensities divided by 255.
    """
    if combined_path is not None:
        if artery_path is not None or vein_path is not None:
            raise InputError("pass either separate artery/vein files or one combined file")
        pa = load_likelihood(combined_path, channel=channel_artery)
        pv = load_likelihood(combined_path, channel=channel_vein)
    else:
        if artery_path is None or vein_path is None:
            raise InputError("both artery and vein probability files are required")
        pa = load_likelihood(artery_path)
        pv = load_likelihood(vein_path)
    if pa.shape != pv.shape:
        raise InputError("artery and vein grids differ in shape")
    return pa.astype(np.float64) / 255.0, pv.astype(np.float64) / 255.0


def _check_grid(name: str, grid: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    grid = np.asarray(grid, dtype=np.float64)
    if grid.shape != tuple(shape):
        raise InputError(f"{name} grid shape {grid.shape} does not match graph {shape}")
    if grid.min() < 0.0 or grid.max() > 1.0:
        raise InputError(f"{name} grid values outside [0, 1]")
    return grid


def _decide(pa: float, pv: float, tau_av: float) -> str:
    if max(pa, pv) < tau_av or pa == pv:
        return "unknown"
    return "artery" if pa > pv else "vein"


def label_nodes(
    vg: VesselGraph,
    pa: np.ndarray,
    pv: np.ndarray,
    tau_av: float = 0.05,
) -> VesselGraph:
    """Sample probability grids onto the graph and assign initial labels.

    Nodes take the grid values at their pixel; segments take the mean
    over their path pixels.  The larger probability wins; when both
    fall below ``tau_av`` (or tie exactly) the element stays unknown.
    Labeling depends only on which mean is larger, so any order
    preserving rescale of both grids yields the same labels.
    """
    if not 0.0 <= tau_av <= 1.0:
        raise InputError("tau_av must be in [0, 1]")
    pa = _check_grid("artery", pa, vg.shape)
    pv = _check_grid("vein", pv, vg.shape)
    for n in vg.nodes:
        n.p_artery = float(pa[n.row, n.col])
        n.p_vein = float(pv[n.row, n.col])
        n.label = _decide(n.p_artery, n.p_vein, tau_av)
    for s in vg.segments:
        rows, cols = s.path[:, 0], s.path[:, 1]
        s.p_artery = float(pa[rows, cols].mean())
        s.p_vein = float(pv[rows, cols].mean())
        s.label = _decide(s.p_artery, s.p_vein, tau_av)
    return vg


def propagate(
    vg: VesselGraph,
    delta: float = 0.1,
    max_rounds: int = 10,
) -> VesselGraph:
    """Spread labels from confident segments to weak or unknown ones.

    A segment's confidence is the margin between its mean artery and
    vein probabilities.  Segments at or above ``delta`` are immutable
    sources; this holds for any configuration, so a confident label
    can never be overwritten.  Every segment below ``delta`` repeatedly
    adopts the majority label of the segments sharing one of its
    endpoints, each neighbor voting with weight arc length times its
    own confidence; ties (including no labeled neighbor at all) leave
    the label as is.  Updates are
    applied one segment at a time in id order, which keeps adjacent
    weak segments from swapping labels forever, and rounds stop at a
    fixpoint or after ``max_rounds``.  Re-running on converged output
    changes nothing.
    """
    if not 0.0 <= delta <= 1.0:
        raise InputError("delta must be in [0, 1]")
    if max_rounds < 1:
        raise InputError("max_rounds must be >= 1")

    confidence = {s.id: abs(s.p_artery - s.p_vein) for s in vg.segments}
    incident: dict[int, set[int]] = {}
    for s in vg.segments:
        for nid in s.endpoints():
            incident.setdefault(nid, set()).add(s.id)
    neighbors: dict[int, list] = {}
    by_id = {s.id: s for s in vg.segments}
    for s in vg.segments:
        ids = set()
        for nid in s.endpoints():
            ids |= incident[nid]
        ids.discard(s.id)
        neighbors[s.id] = [by_id[i] for i in sorted(ids)]

    eligible = [s for s in vg.segments if confidence[s.id] < delta]
    for _ in range(max_rounds):
        changed = False
        for s in eligible:
            score_artery = 0.0
            score_vein = 0.0
            for t in neighbors[s.id]:
                weight = t.arc * confidence[t.id]
                if t.label == "artery":
                    score_artery += weight
                elif t.label == "vein":
                    score_vein += weight
            if score_artery > score_vein:
                winner = "artery"
            elif score_vein > score_artery:
                winner = "vein"
            else:
                continue
            if s.label != winner:
                s.label = winner
                changed = True
        if not changed:
            break
    return vg
