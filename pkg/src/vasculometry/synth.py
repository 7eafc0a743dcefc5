"""Synthetic vasculature with analytic ground truth.

Scenes are lists of parametric curves (lines, circular arcs, sine
waves, cubic Beziers) with half widths and artery/vein labels.  Each
vessel is rasterized with a Gaussian cross profile,

    likelihood(p) = 255 * exp(-d(p)^2 / (2 * (half_width / 2)^2)),

where d is the exact distance to the centerline, composited by maximum
over vessels.  The Gaussian makes validation analytic: the radius at
which the stored (rounded) profile crosses a binarization threshold
has the closed form implemented by :func:`threshold_crossing_radius`,
so expected mask widths and distance-transform values can be computed
without running the pipeline.

Coordinates in scene specs and vessel polylines are (x, y) = (col,
row) sub-pixel floats; rasterization maps them onto [row, col] grids.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InputError
from .morphometry import DiscGeometry

_DS = 0.5  # polyline sampling step, px
_JUNCTION_TOL = 0.75  # endpoint-on-vessel distance that counts as a junction


@dataclass
class SyntheticVessel:
    points: np.ndarray  # (N, 2) float64 centerline, (x, y)
    half_width: float
    label: str
    kind: str
    arc_length: float
    chord_length: float

    def __post_init__(self) -> None:
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 2:
            raise InputError("vessel centerline needs at least 2 points")
        self.points = pts
        if not self.half_width > 0.5:
            raise InputError("half_width must exceed 0.5 px")
        if self.label not in ("artery", "vein"):
            raise InputError(f"bad vessel label {self.label!r}")

    @property
    def true_tortuosity(self) -> float:
        """Arc-over-chord excess of the exact centerline."""
        if self.chord_length <= 0:
            return math.inf
        return self.arc_length / self.chord_length - 1.0


def threshold_crossing_radius(half_width: float, threshold: float) -> float:
    """Distance from the centerline at which the stored profile
    crosses a binarization threshold.

    Accounts for uint8 rounding: a stored pixel reaches ``threshold``
    exactly when the continuous profile reaches ``threshold - 0.5``.
    """
    if not 1 <= threshold <= 255:
        raise InputError("threshold must be in [1, 255]")
    if half_width <= 0:
        raise InputError("half_width must be positive")
    sigma = half_width / 2.0
    return sigma * math.sqrt(2.0 * math.log(255.0 / (threshold - 0.5)))


def _polyline(points: np.ndarray) -> tuple[float, float]:
    steps = np.diff(points, axis=0)
    arc = float(np.sqrt((steps ** 2).sum(axis=1)).sum())
    chord = float(math.dist(points[0], points[-1]))
    return arc, chord


def _sample_line(p: dict, ds: float) -> np.ndarray:
    a = np.array([p["x0"], p["y0"]], dtype=np.float64)
    b = np.array([p["x1"], p["y1"]], dtype=np.float64)
    n = max(2, int(math.ceil(math.dist(a, b) / ds)) + 1)
    t = np.linspace(0.0, 1.0, n)[:, None]
    return a + t * (b - a)


def _sample_arc(p: dict, ds: float) -> np.ndarray:
    r = float(p["radius"])
    if r <= 0:
        raise InputError("arc radius must be positive")
    a0, a1 = float(p["theta0"]), float(p["theta1"])
    length = abs(a1 - a0) * r
    n = max(2, int(math.ceil(length / ds)) + 1)
    theta = np.linspace(a0, a1, n)
    return np.column_stack(
        [p["cx"] + r * np.cos(theta), p["cy"] + r * np.sin(theta)]
    )


def _sample_sine(p: dict, ds: float) -> np.ndarray:
    length = float(p["length"])
    if length <= 0:
        raise InputError("sine length must be positive")
    wavelength = float(p["wavelength"])
    if wavelength <= 0:
        raise InputError("sine wavelength must be positive")
    angle = float(p["angle"])
    amplitude = float(p["amplitude"])
    phase = float(p.get("phase", 0.0))
    n = max(2, int(math.ceil(length / ds)) + 1)
    s = np.linspace(0.0, length, n)
    u = np.array([math.cos(angle), math.sin(angle)])
    nv = np.array([-math.sin(angle), math.cos(angle)])
    offset = amplitude * np.sin(2.0 * math.pi * s / wavelength + phase)
    origin = np.array([p["x0"], p["y0"]], dtype=np.float64)
    return origin + s[:, None] * u + offset[:, None] * nv


def _sample_bezier(p: dict, ds: float) -> np.ndarray:
    ctrl = np.asarray(p["points"], dtype=np.float64)
    if ctrl.shape != (4, 2):
        raise InputError("bezier needs exactly 4 control points")

    def evaluate(t: np.ndarray) -> np.ndarray:
        t = t[:, None]
        mt = 1.0 - t
        return (
            mt ** 3 * ctrl[0]
            + 3 * mt ** 2 * t * ctrl[1]
            + 3 * mt * t ** 2 * ctrl[2]
            + t ** 3 * ctrl[3]
        )

    coarse = evaluate(np.linspace(0.0, 1.0, 65))
    length, _ = _polyline(coarse)
    n = max(2, int(math.ceil(length / ds)) + 1)
    return evaluate(np.linspace(0.0, 1.0, n))


_SAMPLERS = {
    "line": _sample_line,
    "arc": _sample_arc,
    "sine": _sample_sine,
    "bezier": _sample_bezier,
}


def _clip_to_canvas(points: np.ndarray, w: int, h: int) -> np.ndarray:
    inside = (
        (points[:, 0] >= 0) & (points[:, 0] <= w - 1)
        & (points[:, 1] >= 0) & (points[:, 1] <= h - 1)
    )
    if inside.all():
        return points
    if not inside.any():
        return points[:0]
    # Keep the longest contiguous in-canvas run.
    idx = np.nonzero(inside)[0]
    breaks = np.nonzero(np.diff(idx) > 1)[0]
    starts = np.concatenate([[0], breaks + 1])
    ends = np.concatenate([breaks, [len(idx) - 1]])
    spans = ends - starts
    k = int(np.argmax(spans))
    return points[idx[starts[k]]:idx[ends[k]] + 1]


def _reject_self_intersection(points: np.ndarray, half_width: float, kind: str) -> None:
    # Points far apart along the curve must not come close in the
    # plane.  The guard skips neighbors within a couple of widths of
    # arc separation, where proximity is inherent.
    n = len(points)
    guard = int(math.ceil((2.0 * half_width + 2.0) / _DS))
    if n <= guard + 1:
        return
    d = np.sqrt(((points[:, None, :] - points[None, :, :]) ** 2).sum(-1))
    far = np.abs(np.arange(n)[:, None] - np.arange(n)[None, :]) > guard
    if (d[far] < 1.0).any():
        raise InputError(f"self-intersecting {kind} centerline")


def generate_scene(spec: dict) -> tuple[list[SyntheticVessel], DiscGeometry | None]:
    """Build vessels and disc geometry from a scene description.

    The scene spec is a dict: ``canvas: {w, h}``, optional ``disc: {cx, cy,
    d}``, and ``vessels``, each with ``kind`` (line, arc, sine,
    bezier), kind-specific parameters, ``half_width``, and ``label``.
    Construction is deterministic.  Vessels are clipped to the canvas
    (longest surviving run kept).  Scenes are rejected when a
    centerline self-intersects or two centerlines pass closer than the
    sum of their half widths anywhere away from a junction (an endpoint
    of one lying on the other).
    """
    try:
        w = int(spec["canvas"]["w"])
        h = int(spec["canvas"]["h"])
        vessel_specs = list(spec["vessels"])
    except (KeyError, TypeError) as exc:
        raise InputError(f"malformed scene spec: {exc}") from None
    if w < 8 or h < 8:
        raise InputError("canvas too small")

    disc = None
    if spec.get("disc") is not None:
        d = spec["disc"]
        try:
            disc = DiscGeometry(float(d["cx"]), float(d["cy"]), float(d["d"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise InputError(f"malformed disc spec: {exc}") from None

    vessels: list[SyntheticVessel] = []
    for i, v in enumerate(vessel_specs):
        try:
            kind = v["kind"]
            sampler = _SAMPLERS[kind]
            half_width = float(v["half_width"])
            label = v["label"]
        except (KeyError, TypeError) as exc:
            raise InputError(f"vessel {i}: malformed spec: {exc}") from None
        points = sampler(v, _DS)
        points = _clip_to_canvas(points, w, h)
        if len(points) < 2:
            raise InputError(f"vessel {i}: centerline leaves the canvas entirely")
        _reject_self_intersection(points, half_width, kind)
        arc, chord = _polyline(points)
        vessels.append(
            SyntheticVessel(points, half_width, label, kind, arc, chord)
        )

    _reject_overlaps(vessels)
    return vessels, disc


def _reject_overlaps(vessels: list[SyntheticVessel]) -> None:
    for i in range(len(vessels)):
        for j in range(i + 1, len(vessels)):
            vi, vj = vessels[i], vessels[j]
            limit = vi.half_width + vj.half_width
            d = np.sqrt(
                ((vi.points[:, None, :] - vj.points[None, :, :]) ** 2).sum(-1)
            )
            close = d < limit
            if not close.any():
                continue
            # Junctions are allowed: where an endpoint of one vessel
            # touches the other, proximity within the joint footprint
            # is inherent, not an overlap.
            for pts_a, pts_b, arr in (
                (vi.points, vj.points, d),
                (vj.points, vi.points, d.T),
            ):
                for endpoint in (pts_a[0], pts_a[-1]):
                    gap = np.sqrt(((pts_b - endpoint) ** 2).sum(-1))
                    if gap.min() > _JUNCTION_TOL:
                        continue
                    ea = np.sqrt(((pts_a - endpoint) ** 2).sum(-1)) < limit + 1.0
                    eb = gap < limit + 1.0
                    close &= ~(
                        (ea[:, None] & eb[None, :])
                        if arr is d else (eb[:, None] & ea[None, :])
                    )
            if close.any():
                raise InputError(
                    f"vessels {i} and {j} overlap (centerlines within {limit:.2f} px)"
                )


def _distance_window(
    points: np.ndarray, shape: tuple[int, int], radius: float
) -> tuple[tuple[int, int, int, int], np.ndarray] | None:
    """Exact distance to a polyline on the pixel grid near it.

    Returns the window bounds (r0, r1, c0, c1), end-exclusive, and the
    distance array for that window; None when the window is empty.
    Far-away pixels in the window hold +inf (only pixels within
    ``radius`` of some polyline chunk are evaluated).
    """
    h, w = shape
    pad = radius + 1.0
    r0 = max(int(math.floor(points[:, 1].min() - pad)), 0)
    r1 = min(int(math.ceil(points[:, 1].max() + pad)) + 1, h)
    c0 = max(int(math.floor(points[:, 0].min() - pad)), 0)
    c1 = min(int(math.ceil(points[:, 0].max() + pad)) + 1, w)
    if r0 >= r1 or c0 >= c1:
        return None
    dist = np.full((r1 - r0, c1 - c0), np.inf)

    chunk = 64
    for k in range(0, max(len(points) - 1, 1), chunk):
        seg_a = points[k:k + chunk]
        seg_b = points[k + 1:k + chunk + 1]
        if len(seg_b) == 0:
            seg_b = seg_a
        m = min(len(seg_a), len(seg_b))
        a, b = seg_a[:m], seg_b[:m]
        all_pts = np.vstack([a, b])
        cr0 = max(int(math.floor(all_pts[:, 1].min() - pad)), r0)
        cr1 = min(int(math.ceil(all_pts[:, 1].max() + pad)) + 1, r1)
        cc0 = max(int(math.floor(all_pts[:, 0].min() - pad)), c0)
        cc1 = min(int(math.ceil(all_pts[:, 0].max() + pad)) + 1, c1)
        if cr0 >= cr1 or cc0 >= cc1:
            continue
        rows, cols = np.mgrid[cr0:cr1, cc0:cc1]
        grid = np.column_stack([cols.ravel(), rows.ravel()]).astype(np.float64)
        ab = b - a
        ab2 = (ab ** 2).sum(axis=1)
        ab2[ab2 == 0] = 1.0
        ap = grid[:, None, :] - a[None, :, :]
        t = np.clip((ap * ab[None, :, :]).sum(-1) / ab2[None, :], 0.0, 1.0)
        proj = a[None, :, :] + t[:, :, None] * ab[None, :, :]
        dmin = np.sqrt(((grid[:, None, :] - proj) ** 2).sum(-1)).min(axis=1)
        sub = dist[cr0 - r0:cr1 - r0, cc0 - c0:cc1 - c0]
        np.minimum(sub, dmin.reshape(sub.shape), out=sub)
    return (r0, r1, c0, c1), dist


def rasterize(
    vessels: list[SyntheticVessel],
    shape: tuple[int, int],
    noise_sigma: float = 0.0,
    seed: int = 0,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Render vessels into a likelihood map plus A/V probability grids.

    Returns ``(likelihood uint8, p_artery, p_vein)`` over ``shape`` =
    (height, width).  Likelihoods take the maximum Gaussian profile
    over vessels; each pixel within a vessel's half width of the
    nearest centerline gets probability 0.9 for its class and 0.1 for
    the other.  Optional Gaussian noise (likelihood units) is seeded
    and applied before rounding; with ``noise_sigma=0`` the output is a
    pure function of the vessels.
    """
    h, w = shape
    if h < 1 or w < 1:
        raise InputError("empty raster shape")
    if noise_sigma < 0:
        raise InputError("noise sigma must be >= 0")
    like = np.zeros((h, w), dtype=np.float64)
    best_d = np.full((h, w), np.inf)
    best_i = np.full((h, w), -1, dtype=np.int32)
    for i, v in enumerate(vessels):
        sigma = v.half_width / 2.0
        support = max(sigma * math.sqrt(2.0 * math.log(510.0)), v.half_width) + 1.0
        out = _distance_window(v.points, shape, support)
        if out is None:
            continue
        (r0, r1, c0, c1), d = out
        profile = np.zeros_like(d)
        finite = np.isfinite(d)
        profile[finite] = 255.0 * np.exp(-d[finite] ** 2 / (2.0 * sigma * sigma))
        region = like[r0:r1, c0:c1]
        np.maximum(region, profile, out=region)
        claim = d < best_d[r0:r1, c0:c1]
        best_d[r0:r1, c0:c1][claim] = d[claim]
        best_i[r0:r1, c0:c1][claim] = i
    p_artery = np.zeros((h, w), dtype=np.float64)
    p_vein = np.zeros((h, w), dtype=np.float64)
    for i, v in enumerate(vessels):
        inside = (best_i == i) & (best_d <= v.half_width)
        if v.label == "artery":
            p_artery[inside], p_vein[inside] = 0.9, 0.1
        else:
            p_artery[inside], p_vein[inside] = 0.1, 0.9
    if noise_sigma > 0:
        rng = np.random.default_rng(seed)
        like = like + rng.normal(0.0, noise_sigma, size=like.shape)
    img = np.clip(np.rint(like), 0, 255).astype(np.uint8)
    return img, p_artery, p_vein


def fan_scene(
    artery_widths: list[float],
    vein_widths: list[float],
    canvas: int = 896,
    disc_diameter: float = 160.0,
    noise_sigma: float = 0.0,
    seed: int = 0,
) -> dict:
    """Radial fan of straight vessels crossing the measurement annulus.

    Widths are full calibers in pixels; half widths are drawn at half
    that.  Arteries and veins alternate around the disc at evenly
    spaced angles, running from 0.7 to 1.95 disc diameters of radius so
    every vessel spans the 1.0D-1.5D ring with margin on both sides.
    """
    n = len(artery_widths) + len(vein_widths)
    if n < 2:
        raise InputError("fan needs at least two vessels")
    cx = cy = canvas / 2.0
    r_in, r_out = 0.7 * disc_diameter, 1.95 * disc_diameter
    if r_out > canvas / 2.0 - 4:
        raise InputError("fan does not fit the canvas")
    vessels = []
    order: list[tuple[str, float]] = []
    for a, v in zip(artery_widths, vein_widths):
        order.append(("artery", a))
        order.append(("vein", v))
    longer = artery_widths[len(vein_widths):] or vein_widths[len(artery_widths):]
    label = "artery" if len(artery_widths) > len(vein_widths) else "vein"
    order.extend((label, w) for w in longer)
    for k, (lab, width) in enumerate(order):
        angle = 2.0 * math.pi * k / n + 0.13
        vessels.append(
            {
                "kind": "line",
                "label": lab,
                "half_width": width / 2.0,
                "x0": cx + r_in * math.cos(angle),
                "y0": cy + r_in * math.sin(angle),
                "x1": cx + r_out * math.cos(angle),
                "y1": cy + r_out * math.sin(angle),
            }
        )
    return {
        "canvas": {"w": canvas, "h": canvas},
        "disc": {"cx": cx, "cy": cy, "d": disc_diameter},
        "vessels": vessels,
        "noise_sigma": noise_sigma,
        "seed": seed,
    }


def random_scene(
    seed: int,
    n_vessels: int = 8,
    canvas: int = 448,
    disc_diameter: float = 90.0,
) -> dict:
    """Seeded random radial scene; identical spec for identical seeds.

    Vessels leave the disc neighborhood at evenly spaced base angles
    with seeded jitter, as straight lines or gentle sines, with seeded
    widths and alternating labels.  Spacing keeps centerlines farther
    apart than any sum of half widths, so generation never rejects.
    """
    if n_vessels < 2:
        raise InputError("need at least two vessels")
    rng = np.random.default_rng(seed)
    cx = cy = canvas / 2.0
    r_in = 0.7 * disc_diameter
    r_out = min(1.95 * disc_diameter, canvas / 2.0 - 6.0)
    vessels = []
    for k in range(n_vessels):
        base = 2.0 * math.pi * k / n_vessels
        angle = base + rng.uniform(-0.25, 0.25) * 2.0 * math.pi / n_vessels / 4.0
        half_width = rng.uniform(1.2, 3.0)
        label = "artery" if k % 2 == 0 else "vein"
        x0, y0 = cx + r_in * math.cos(angle), cy + r_in * math.sin(angle)
        if rng.uniform() < 0.5:
            vessels.append(
                {
                    "kind": "line", "label": label, "half_width": half_width,
                    "x0": x0, "y0": y0,
                    "x1": cx + r_out * math.cos(angle),
                    "y1": cy + r_out * math.sin(angle),
                }
            )
        else:
            vessels.append(
                {
                    "kind": "sine", "label": label, "half_width": half_width,
                    "x0": x0, "y0": y0, "angle": angle,
                    "length": r_out - r_in,
                    "amplitude": float(rng.uniform(1.0, 3.0)),
                    "wavelength": float(rng.uniform(80.0, 140.0)),
                    "phase": float(rng.uniform(0.0, 2.0 * math.pi)),
                }
            )
    return {
        "canvas": {"w": canvas, "h": canvas},
        "disc": {"cx": cx, "cy": cy, "d": disc_diameter},
        "vessels": vessels,
        "noise_sigma": 0.0,
        "seed": seed,
    }
