"""Curvature-partitioned tortuosity.

A vessel path is split wherever its signed curvature changes sign and
stays flipped; each resulting sub-path contributes its arc-to-chord
excess, and the Grisan-style figure is

    T_g = (n - 1) / L_c * sum_i (arc_i / chord_i - 1)

with n the number of sub-paths and L_c the length of the whole
segment (its chord by default; an arc-length mode is available since
both conventions circulate).  Values are additionally normalized to
[0, 1) via T_norm = T_g / (T_g + c) with a per-run constant c.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from statistics import median

import numpy as np
from scipy.ndimage import uniform_filter1d

from .errors import InputError
from .morphometry import Annulus, DiscGeometry, _clip_to_annulus
from .topology import VesselGraph, polyline_lengths

LC_MODES = ("chord", "arc")

# Curvature smaller than this is treated as zero when scanning for
# sign changes; it absorbs atan2 rounding jitter on straight runs so
# rigid motions cannot flip a sign that is numerically zero.
_CURVATURE_TOL = 1e-9


@dataclass
class TortuosityRecord:
    segment_id: int
    label: str
    n_subsegments: int
    t_g: float
    t_norm: float


@dataclass
class TortuosityReport:
    records: list[TortuosityRecord]
    c: float
    lc_mode: str
    zone: Annulus | None
    exclusions: list[tuple[int, str]]

    def to_json(self) -> dict:
        return {
            "segments": [
                {
                    "id": r.segment_id,
                    "label": r.label,
                    "n": r.n_subsegments,
                    "t_g": r.t_g,
                    "t_norm": r.t_norm,
                }
                for r in self.records
            ],
            "zone": None if self.zone is None else self.zone.to_json(),
            "lc_mode": self.lc_mode,
            "c": self.c,
            "exclusions": [
                {"id": sid, "reason": reason} for sid, reason in self.exclusions
            ],
        }


def curvature_split(path: np.ndarray, smooth_window: int = 5) -> list[np.ndarray]:
    """Partition a path at persistent curvature sign changes.

    Coordinates are smoothed by a centered moving average of width
    ``smooth_window``; the signed curvature is the wrapped difference
    of consecutive tangent angles of the smoothed path, itself smoothed
    by the same window so the alternating jitter of rasterized
    staircase steps cancels instead of masking the true bends.  A split
    is placed where the sign flips and the new sign holds for at least
    ``smooth_window`` consecutive samples.  Consecutive sub-paths share
    their boundary point, so the pieces cover the path exactly and
    their arcs sum to the whole.

    Paths shorter than ``2 * smooth_window`` are returned whole.
    """
    path = np.asarray(path, dtype=np.float64)
    if path.ndim != 2 or path.shape[1] != 2:
        raise InputError("path must be an (N, 2) array")
    if smooth_window < 2:
        raise InputError("smooth_window must be >= 2")
    n = len(path)
    if n < 2 * smooth_window:
        return [path.copy()]

    smooth = uniform_filter1d(path, size=smooth_window, axis=0, mode="nearest")
    steps = np.diff(smooth, axis=0)
    angles = np.arctan2(steps[:, 0], steps[:, 1])
    curvature = np.diff(angles)
    curvature = (curvature + np.pi) % (2.0 * np.pi) - np.pi
    curvature = uniform_filter1d(curvature, size=smooth_window, mode="nearest")

    signs = np.zeros(len(curvature), dtype=np.int8)
    signs[curvature > _CURVATURE_TOL] = 1
    signs[curvature < -_CURVATURE_TOL] = -1

    boundaries: list[int] = []
    run_sign = 0
    j = 0
    while j < len(signs):
        s = int(signs[j])
        if s != 0 and run_sign == 0:
            run_sign = s
        elif s != 0 and s != run_sign:
            window = signs[j:j + smooth_window]
            if len(window) == smooth_window and (window == s).all():
                # Curvature sample j sits at smoothed point j + 1.
                boundary = j + 1
                if boundaries and boundary <= boundaries[-1]:
                    boundary = boundaries[-1] + 1
                if 0 < boundary < n - 1:
                    boundaries.append(boundary)
                    run_sign = s
        j += 1

    pieces = []
    prev = 0
    for b in boundaries:
        pieces.append(path[prev:b + 1].copy())
        prev = b
    pieces.append(path[prev:].copy())
    return pieces


def grisan_tortuosity(
    path: np.ndarray,
    subpaths: list[np.ndarray],
    lc_mode: str = "chord",
) -> float:
    """Evaluate the curvature-partitioned tortuosity of a path.

    ``subpaths`` is the partition from :func:`curvature_split`.  Each
    sub-path contributes ``arc/chord - 1``; the sum is scaled by
    ``(n - 1) / L_c`` where L_c is the whole path's chord
    (``lc_mode="chord"``) or arc length (``"arc"``).  Sub-paths with a
    zero chord (degenerate loops) are excluded from both the sum and
    the count.  One sub-path means zero by construction.  Scaling the
    coordinates by s > 0 leaves every ratio term unchanged and scales
    L_c by s, so the result scales by 1/s.
    """
    if lc_mode not in LC_MODES:
        raise InputError(f"lc_mode must be one of {LC_MODES}")
    if not subpaths:
        raise InputError("empty partition")
    arc, chord = polyline_lengths(np.asarray(path, dtype=np.float64))
    lc = chord if lc_mode == "chord" else arc
    if lc <= 0:
        raise InputError("zero-length reference; cannot normalize tortuosity")
    terms = []
    for sp in subpaths:
        sp_arc, sp_chord = polyline_lengths(np.asarray(sp, dtype=np.float64))
        if sp_chord <= 0:
            continue
        terms.append(sp_arc / sp_chord - 1.0)
    n = len(terms)
    if n <= 1:
        return 0.0
    return (n - 1) / lc * float(math.fsum(terms))


def tortuosity_report(
    vg: VesselGraph,
    disc: DiscGeometry | None,
    zone: Annulus | None,
    l_min: int = 10,
    smooth_window: int = 5,
    lc_mode: str = "chord",
    c: float | None = None,
) -> TortuosityReport:
    """Tortuosity records for the measurable segments of a graph.

    With a ``zone`` the graph is first clipped to that annulus (no
    spanning requirement; every piece inside the ring counts).  Then,
    with reasons recorded per exclusion: closed cycles are dropped,
    terminal twigs shorter than ``l_min`` pixels are dropped, any
    segment shorter than ``2 * l_min`` is skipped, and zero-chord
    segments cannot be normalized in chord mode.  Survivors get
    curvature-split tortuosity plus T_norm = T_g / (T_g + c); when no
    ``c`` override is given, c is this run's median positive T_g
    (1.0 if every segment is straight) and is recorded in the report.
    """
    if l_min < 1:
        raise InputError("l_min must be >= 1")
    if zone is not None and disc is not None:
        if math.hypot(zone.cx - disc.cx, zone.cy - disc.cy) > 1e-6:
            raise InputError("tortuosity zone is not centered on the disc")
    if c is not None and not (math.isfinite(c) and c > 0):
        raise InputError("normalization constant c must be positive")

    if zone is not None:
        working = _clip_to_annulus(vg, zone)
    else:
        working = vg

    by_id = working.node_by_id()
    exclusions: list[tuple[int, str]] = []
    survivors = []
    for s in working.segments:
        if s.closed:
            exclusions.append((s.id, "closed cycle"))
            continue
        n_pixels = len(s.path)
        is_twig = any(by_id[nid].kind == "end" for nid in s.endpoints())
        if is_twig and n_pixels < l_min:
            exclusions.append((s.id, f"terminal twig shorter than {l_min} pixels"))
            continue
        if n_pixels < 2 * l_min:
            exclusions.append((s.id, f"shorter than {2 * l_min} pixels"))
            continue
        if lc_mode == "chord" and s.chord <= 0:
            exclusions.append((s.id, "zero chord"))
            continue
        survivors.append(s)

    measured = []
    for s in survivors:
        pieces = curvature_split(s.path, smooth_window=smooth_window)
        t_g = grisan_tortuosity(s.path, pieces, lc_mode=lc_mode)
        measured.append((s, len(pieces), t_g))

    if c is None:
        positives = [t for _, _, t in measured if t > 0]
        c_used = median(positives) if positives else 1.0
        if c_used <= 0:
            c_used = 1.0
    else:
        c_used = c

    records = [
        TortuosityRecord(
            segment_id=s.id,
            label=s.label,
            n_subsegments=n_sub,
            t_g=t_g,
            t_norm=t_g / (t_g + c_used),
        )
        for s, n_sub, t_g in measured
    ]
    return TortuosityReport(records, c_used, lc_mode, zone, exclusions)
