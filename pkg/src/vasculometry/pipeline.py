"""End-to-end measurement pipeline.

One likelihood map in; a measurement report, a vessel graph JSON, and
an overlay PNG out.  The stages: accumulate the background distance
field, build the union skeleton graph, contract it to segments,
retrace each segment along the field ridge, sample artery/vein
probabilities and propagate labels, then measure AVR inside the disc
annulus and tortuosity in the outer zone.  Reports embed the full
config and input digests; identical inputs and config produce byte
identical outputs.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from . import labeling, morphometry, raster, topology, tortuosity
from .config import PipelineConfig
from .errors import InputError
from .morphometry import WidthSample, annulus_from_disc, load_disc
from .stats import PairedSeries, summarize

ARTERY_COLOR = (230, 60, 50)
VEIN_COLOR = (70, 110, 230)
UNKNOWN_COLOR = (170, 170, 170)
CIRCLE_COLOR = (250, 220, 90)
DISC_COLOR = (255, 255, 255)


@dataclass
class MeasurementReport:
    inputs: dict
    config: dict
    graph_summary: dict
    avr: dict
    tortuosity: dict
    warnings: list[str]

    def to_json(self) -> dict:
        return {
            "schema": 1,
            "inputs": self.inputs,
            "config": self.config,
            "graph_summary": self.graph_summary,
            "avr": self.avr,
            "tortuosity": self.tortuosity,
            "warnings": self.warnings,
        }


def _digest(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _resize_float(grid: np.ndarray, size: tuple[int, int]) -> np.ndarray:
    img = Image.fromarray(grid.astype(np.float32), mode="F")
    return np.asarray(img.resize(size, Image.Resampling.BILINEAR), dtype=np.float64)


def render_overlay(
    vg: topology.VesselGraph,
    disc: morphometry.DiscGeometry | None,
    annuli: list[morphometry.Annulus],
    image: np.ndarray,
) -> np.ndarray:
    """Paint labeled segments and measurement circles over an image.

    Arteries, veins, and unknown segments each get a fixed color; each
    annulus contributes its two circles; the disc center gets a small
    cross.  Pure array painting, so the result is deterministic.
    """
    image = np.asarray(image)
    if image.ndim == 2:
        canvas = np.stack([image] * 3, axis=-1).astype(np.uint8)
    elif image.ndim == 3 and image.shape[2] == 3:
        canvas = image.astype(np.uint8).copy()
    else:
        raise InputError("overlay backdrop must be grayscale or RGB")
    h, w = canvas.shape[:2]
    if (h, w) != tuple(vg.shape):
        raise InputError("overlay backdrop does not match graph extent")

    colors = {"artery": ARTERY_COLOR, "vein": VEIN_COLOR, "unknown": UNKNOWN_COLOR}
    for seg in vg.segments:
        canvas[seg.path[:, 0], seg.path[:, 1]] = colors[seg.label]

    for a in annuli:
        for radius in (a.r_inner, a.r_outer):
            n = max(int(2.0 * math.pi * radius * 4.0), 16)
            theta = np.linspace(0.0, 2.0 * math.pi, n, endpoint=False)
            rows = np.rint(a.cy + radius * np.sin(theta)).astype(int)
            cols = np.rint(a.cx + radius * np.cos(theta)).astype(int)
            keep = (rows >= 0) & (rows < h) & (cols >= 0) & (cols < w)
            canvas[rows[keep], cols[keep]] = CIRCLE_COLOR
    if disc is not None:
        r0, c0 = int(round(disc.cy)), int(round(disc.cx))
        for dr, dc in ((0, 0), (-1, 0), (1, 0), (0, -1), (0, 1)):
            rr, cc = r0 + dr, c0 + dc
            if 0 <= rr < h and 0 <= cc < w:
                canvas[rr, cc] = DISC_COLOR
    return canvas


def _load_inputs(
    likelihood: Path,
    disc_path: Path,
    image: Path | None,
    av_artery: Path | None,
    av_vein: Path | None,
    av_combined: Path | None,
    channel: str | None,
    config: PipelineConfig,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, morphometry.DiscGeometry, np.ndarray | None, dict]:
    lik = raster.load_likelihood(likelihood, channel=channel)
    pa, pv = labeling.load_av_maps(av_artery, av_vein, av_combined)
    disc = load_disc(disc_path)
    backdrop = None
    if image is not None:
        try:
            with Image.open(image) as img:
                backdrop = np.asarray(img.convert("RGB"), dtype=np.uint8)
        except (OSError, ValueError) as exc:
            raise InputError(f"{image}: cannot read image: {exc}") from None

    shapes = {("likelihood",): lik.shape, ("av",): pa.shape}
    if backdrop is not None:
        shapes[("image",)] = backdrop.shape[:2]
    if len(set(shapes.values())) != 1:
        detail = ", ".join(f"{k[0]}={v}" for k, v in shapes.items())
        raise InputError(f"input dimensions disagree: {detail}")

    if config.max_dim is not None:
        h, w = lik.shape
        factor = config.max_dim / max(h, w)
        if factor != 1.0:
            size = (int(round(w * factor)), int(round(h * factor)))
            lik = np.asarray(
                Image.fromarray(lik).resize(size, Image.Resampling.BILINEAR),
                dtype=np.uint8,
            )
            pa = np.clip(_resize_float(pa, size), 0.0, 1.0)
            pv = np.clip(_resize_float(pv, size), 0.0, 1.0)
            if backdrop is not None:
                backdrop = np.asarray(
                    Image.fromarray(backdrop).resize(size, Image.Resampling.BILINEAR),
                    dtype=np.uint8,
                )
            disc = morphometry.DiscGeometry(
                disc.cx * factor, disc.cy * factor, disc.diameter * factor
            )

    h, w = lik.shape
    if not (0 <= disc.cx <= w - 1 and 0 <= disc.cy <= h - 1):
        raise InputError("disc center lies outside the image")

    digests = {"likelihood": {"path": str(likelihood), "sha256": _digest(likelihood)}}
    for name, p in (
        ("av_artery", av_artery), ("av_vein", av_vein),
        ("av_combined", av_combined), ("image", image), ("disc", disc_path),
    ):
        if p is not None:
            digests[name] = {"path": str(p), "sha256": _digest(Path(p))}
    digests["height"], digests["width"] = int(h), int(w)
    return lik, pa, pv, disc, backdrop, digests


def _avr_fragment(
    vg: topology.VesselGraph,
    disc: morphometry.DiscGeometry,
    mask_dist: np.ndarray,
    config: PipelineConfig,
    warn: list[str],
) -> dict:
    annulus = annulus_from_disc(disc, config.avr_annulus)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        sub = morphometry.annulus_subgraph(vg, annulus)
    warn.extend(str(c.message) for c in caught)

    for s in sub.segments:
        s.width = morphometry.segment_width(s, mask_dist)
    vessels = morphometry.route_vessels(sub)

    samples: list[WidthSample] = []
    flags: list[str] = []
    n_unusable = 0
    for v in vessels:
        width = morphometry.segment_width(v, mask_dist)
        if width is not None and width > 0 and v.label in ("artery", "vein"):
            v.width = width
            samples.append(WidthSample(v.id, width, v.label))
        else:
            n_unusable += 1
    if n_unusable:
        flags.append(f"{n_unusable} routed vessels unusable (width or label)")

    arteries, veins = morphometry.top_k_by_label(vessels, samples, morphometry.TOP_K)
    by_label: dict[str, list[WidthSample]] = {"artery": [], "vein": []}
    for s in samples:
        by_label[s.label].append(s)
    for lst in by_label.values():
        lst.sort(key=lambda s: (-s.width, s.segment_id))

    fragment: dict = {
        "annulus": annulus.to_json(),
        "n_vessels_routed": len(vessels),
        "arteries": [
            {"id": s.segment_id, "width": s.width}
            for s in by_label["artery"][:morphometry.TOP_K]
        ],
        "veins": [
            {"id": s.segment_id, "width": s.width}
            for s in by_label["vein"][:morphometry.TOP_K]
        ],
        "crae": None,
        "crve": None,
        "avr": None,
        "flags": flags,
    }
    if arteries and veins:
        k = min(len(arteries), len(veins), morphometry.TOP_K)
        if k == 1:
            flags.append("single-width caliber estimate")
        fragment["crae"] = morphometry.knudtson_equivalent(
            arteries[:k], morphometry.ARTERY_SCALE
        )
        fragment["crve"] = morphometry.knudtson_equivalent(
            veins[:k], morphometry.VEIN_SCALE
        )
        fragment["avr"] = fragment["crae"] / fragment["crve"]
    else:
        missing = [name for name, lst in (("arteries", arteries), ("veins", veins)) if not lst]
        warn.append(f"AVR not computable: no usable {' or '.join(missing)}")
    return fragment


def run_single(
    likelihood: str | Path,
    disc: str | Path,
    out_dir: str | Path,
    config: PipelineConfig | None = None,
    image: str | Path | None = None,
    av_artery: str | Path | None = None,
    av_vein: str | Path | None = None,
    av_combined: str | Path | None = None,
    channel: str | None = None,
) -> MeasurementReport:
    """Measure one image; write report.json, graph.json, overlay.png.

    Inputs are fully loaded and validated before anything is written,
    so contract violations leave no partial output.  An empty graph or
    a non-computable AVR is a warning in the report, not a failure.
    """
    config = config or PipelineConfig()
    out_dir = Path(out_dir)
    warn: list[str] = []

    lik, pa, pv, disc_geom, backdrop, inputs = _load_inputs(
        Path(likelihood), Path(disc), None if image is None else Path(image),
        None if av_artery is None else Path(av_artery),
        None if av_vein is None else Path(av_vein),
        None if av_combined is None else Path(av_combined),
        channel, config,
    )

    field = raster.background_distance_field(
        lik, config.thresholds, index_offset=config.boost_index_base
    )
    g = topology.union_graph(lik, config.thresholds)
    vg = topology.contract(g, spacing=config.spacing)
    if not vg.segments and not vg.nodes:
        warn.append("empty vessel graph (no pixels above the lowest threshold)")
    vg, n_fallback = topology.retrace_graph(
        vg, field, g,
        corridor=config.corridor, epsilon=config.epsilon, spacing=config.spacing,
    )
    if n_fallback:
        warn.append(f"{n_fallback} segments kept their raw skeleton path (no field route)")
    topology.annotate_bw(vg, field)
    labeling.label_nodes(vg, pa, pv, tau_av=config.tau_av)
    labeling.propagate(vg, delta=config.delta)

    mask_dist = raster.distance_transform(raster.binarize(lik, config.width_threshold))
    avr_fragment = _avr_fragment(vg, disc_geom, mask_dist, config, warn)

    zone = annulus_from_disc(disc_geom, config.tort_zone)
    tort_report = tortuosity.tortuosity_report(
        vg, disc_geom, zone,
        l_min=config.l_min,
        smooth_window=config.smooth_window,
        lc_mode=config.lc_mode,
        c=config.norm_c,
    )

    kinds = {"end": 0, "branch": 0, "anchor": 0}
    for n in vg.nodes:
        kinds[n.kind] += 1
    graph_summary = {
        "nodes": len(vg.nodes),
        "segments": len(vg.segments),
        "ends": kinds["end"],
        "branches": kinds["branch"],
        "anchors": kinds["anchor"],
        "retrace_fallbacks": n_fallback,
    }

    report = MeasurementReport(
        inputs=inputs,
        config=config.to_json(),
        graph_summary=graph_summary,
        avr=avr_fragment,
        tortuosity=tort_report.to_json(),
        warnings=warn,
    )

    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "report.json").write_text(
        json.dumps(report.to_json(), indent=1, sort_keys=True)
    )
    topology.save_graph(out_dir / "graph.json", vg)
    backdrop_img = backdrop if backdrop is not None else lik
    annuli = [annulus_from_disc(disc_geom, config.avr_annulus), zone]
    overlay = render_overlay(vg, disc_geom, annuli, backdrop_img)
    Image.fromarray(overlay).save(out_dir / "overlay.png", format="PNG")
    return report


_MANIFEST_COLUMNS = (
    "id", "likelihood", "disc", "image",
    "av_artery", "av_vein", "av_combined", "channel", "reference",
)


def _batch_row(row: dict, base: str, out_root: str, config: PipelineConfig) -> dict:
    def resolve(key):
        value = row.get(key) or None
        return None if value is None else str(Path(base) / value)

    result: dict = {"id": row["id"]}
    try:
        report = run_single(
            likelihood=resolve("likelihood"),
            disc=resolve("disc"),
            out_dir=Path(out_root) / row["id"],
            config=config,
            image=resolve("image"),
            av_artery=resolve("av_artery"),
            av_vein=resolve("av_vein"),
            av_combined=resolve("av_combined"),
            channel=row.get("channel") or None,
        )
        result["status"] = "ok"
        result["avr"] = report.avr["avr"]
        result["warnings"] = len(report.warnings)
        result["report"] = str(Path(out_root) / row["id"] / "report.json")
    except Exception as exc:  # isolate rows: one bad input must not stop the batch
        result["status"] = "error"
        result["error"] = f"{type(exc).__name__}: {exc}"
    return result


def run_batch(
    manifest: str | Path,
    out_root: str | Path,
    config: PipelineConfig | None = None,
    jobs: int = 1,
) -> dict:
    """Process every manifest row; aggregate stats when references exist.

    The manifest is CSV with header columns ``id, likelihood, disc``
    and optionally ``image, av_artery, av_vein, av_combined, channel,
    reference``.  Paths are resolved relative to the manifest file.
    Each row gets its own output directory named by id; a failing row
    is recorded and skipped, never aborting the batch.  When at least
    two successful rows carry a reference AVR, an agreement summary
    over (reference, measured) pairs is included.  The batch report is
    written to ``<out_root>/batch.json`` and returned.
    """
    config = config or PipelineConfig()
    manifest = Path(manifest)
    out_root = Path(out_root)
    try:
        with manifest.open(newline="") as fh:
            reader = csv.DictReader(fh)
            header = reader.fieldnames or []
            rows = list(reader)
    except OSError as exc:
        raise InputError(f"{manifest}: cannot read manifest: {exc}") from None
    for required in ("id", "likelihood", "disc"):
        if required not in header:
            raise InputError(f"manifest missing required column {required!r}")
    unknown = set(header) - set(_MANIFEST_COLUMNS)
    if unknown:
        raise InputError(f"manifest has unknown columns: {sorted(unknown)}")
    if not rows:
        raise InputError("manifest has no data rows")
    ids = [r["id"] for r in rows]
    if len(set(ids)) != len(ids):
        raise InputError("manifest ids must be unique")

    base = str(manifest.parent)
    out_root.mkdir(parents=True, exist_ok=True)
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [
                pool.submit(_batch_row, row, base, str(out_root), config)
                for row in rows
            ]
            results = [f.result() for f in futures]
    else:
        results = [_batch_row(row, base, str(out_root), config) for row in rows]

    summary = None
    if "reference" in header:
        ids, refs, cands = [], [], []
        for row, res in zip(rows, results):
            if res["status"] != "ok" or res.get("avr") is None:
                continue
            if not row.get("reference"):
                continue
            ids.append(row["id"])
            refs.append(float(row["reference"]))
            cands.append(res["avr"])
        if len(ids) >= 2:
            series = PairedSeries(ids, np.asarray(refs), np.asarray(cands))
            summary = summarize(series).to_json()

    doc = {
        "rows": results,
        "n_ok": sum(r["status"] == "ok" for r in results),
        "n_failed": sum(r["status"] == "error" for r in results),
        "summary": summary,
    }
    (out_root / "batch.json").write_text(json.dumps(doc, indent=1, sort_keys=True))
    return doc
