"""Command line interface.

Four subcommands: ``measure`` runs the pipeline on one image,
``batch`` runs it over a manifest, ``synth`` renders a synthetic
scene with ground truth, and ``stats`` summarizes agreement between
paired measurements.  Exit codes: 0 on success, 2 for input errors,
3 for config errors.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np
from PIL import Image

from . import synth
from .config import PipelineConfig, load_config
from .errors import ConfigError, InputError
from .morphometry import save_disc
from .pipeline import run_batch, run_single
from .stats import read_pairs_csv, save_bland_altman, save_summary, summarize


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vasculometry",
        description="Retinal vessel morphometry from likelihood maps.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    measure = sub.add_parser("measure", help="measure one image")
    measure.add_argument("--likelihood", required=True, help="vessel likelihood map PNG")
    measure.add_argument("--disc", required=True, help="optic disc geometry JSON")
    measure.add_argument("--out", required=True, help="output directory")
    measure.add_argument("--image", help="original fundus image for the overlay")
    measure.add_argument("--av-artery", help="artery probability map PNG")
    measure.add_argument("--av-vein", help="vein probability map PNG")
    measure.add_argument("--av-combined", help="combined AV map (artery red, vein green)")
    measure.add_argument("--channel", help="channel to read from an RGB likelihood map")
    measure.add_argument("--config", help="pipeline config JSON")
    measure.add_argument(
        "--max-dim", type=int, default=None,
        help="resize inputs so the longest side equals this many pixels",
    )

    batch = sub.add_parser("batch", help="measure every row of a manifest")
    batch.add_argument("--manifest", required=True, help="CSV manifest of inputs")
    batch.add_argument("--out", required=True, help="output root directory")
    batch.add_argument("--config", help="pipeline config JSON")
    batch.add_argument("--jobs", type=int, default=1, help="parallel worker count")
    batch.add_argument(
        "--max-dim", type=int, default=None,
        help="resize inputs so the longest side equals this many pixels",
    )

    synth_cmd = sub.add_parser("synth", help="render a synthetic scene")
    synth_cmd.add_argument("--spec", required=True, help="scene description JSON")
    synth_cmd.add_argument("--out", required=True, help="output directory")

    stats_cmd = sub.add_parser("stats", help="summarize paired-measurement agreement")
    stats_cmd.add_argument("--pairs", required=True, help="CSV with id,reference,candidate")
    stats_cmd.add_argument("--out", help="directory for summary.json and bland_altman.csv")
    return parser


def _load_pipeline_config(args: argparse.Namespace) -> PipelineConfig:
    config = load_config(args.config) if args.config else PipelineConfig()
    if getattr(args, "max_dim", None) is not None:
        config = dataclasses.replace(config, max_dim=args.max_dim)
    return config


def _cmd_measure(args: argparse.Namespace) -> int:
    config = _load_pipeline_config(args)
    report = run_single(
        likelihood=args.likelihood,
        disc=args.disc,
        out_dir=args.out,
        config=config,
        image=args.image,
        av_artery=args.av_artery,
        av_vein=args.av_vein,
        av_combined=args.av_combined,
        channel=args.channel,
    )
    for message in report.warnings:
        print(f"warning: {message}", file=sys.stderr)
    doc = report.to_json()
    print(json.dumps({"avr": doc["avr"]["avr"], "out": str(args.out)}))
    return 0


def _cmd_batch(args: argparse.Namespace) -> int:
    config = _load_pipeline_config(args)
    if args.jobs < 1:
        raise InputError("--jobs must be at least 1")
    doc = run_batch(args.manifest, args.out, config=config, jobs=args.jobs)
    print(json.dumps({"n_ok": doc["n_ok"], "n_failed": doc["n_failed"]}))
    return 0


def _cmd_synth(args: argparse.Namespace) -> int:
    spec_path = Path(args.spec)
    try:
        spec = json.loads(spec_path.read_text())
    except OSError as exc:
        raise InputError(f"{spec_path}: cannot read scene spec: {exc}") from None
    except json.JSONDecodeError as exc:
        raise InputError(f"{spec_path}: invalid JSON: {exc}") from None

    vessels, disc = synth.generate_scene(spec)
    shape = (int(spec["canvas"]["h"]), int(spec["canvas"]["w"]))
    noise_sigma = float(spec.get("noise_sigma", 0.0))
    seed = int(spec.get("seed", 0))
    likelihood, p_artery, p_vein = synth.rasterize(
        vessels, shape, noise_sigma=noise_sigma, seed=seed
    )

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    Image.fromarray(likelihood).save(out / "likelihood.png", format="PNG")
    for name, grid in (("av_artery", p_artery), ("av_vein", p_vein)):
        u8 = np.clip(np.rint(grid * 255.0), 0, 255).astype(np.uint8)
        Image.fromarray(u8).save(out / f"{name}.png", format="PNG")
    if disc is not None:
        save_disc(out / "disc.json", disc)

    truth = {
        "vessels": [
            {
                "index": i,
                "kind": v.kind,
                "label": v.label,
                "half_width": v.half_width,
                "arc_length": v.arc_length,
                "chord_length": v.chord_length,
                "true_tortuosity": v.true_tortuosity,
            }
            for i, v in enumerate(vessels)
        ],
        "noise_sigma": noise_sigma,
        "seed": seed,
    }
    (out / "truth.json").write_text(json.dumps(truth, indent=1, sort_keys=True))
    print(json.dumps({"n_vessels": len(vessels), "out": str(out)}))
    return 0


def _cmd_stats(args: argparse.Namespace) -> int:
    series = read_pairs_csv(args.pairs)
    summary = summarize(series)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        save_summary(out / "summary.json", summary)
        save_bland_altman(out / "bland_altman.csv", series)
    print(json.dumps(summary.to_json(), indent=1, sort_keys=True))
    return 0


_COMMANDS = {
    "measure": _cmd_measure,
    "batch": _cmd_batch,
    "synth": _cmd_synth,
    "stats": _cmd_stats,
}


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    raise SystemExit(main())
