"""Pipeline configuration.

One dataclass holds every tunable the measurement pipeline uses, with
the documented defaults.  Configs serialize to a versioned JSON
document (``schema: 1``) and are embedded verbatim in every
measurement report so results carry their provenance.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields
from pathlib import Path

from .errors import ConfigError
from .raster import DEFAULT_THRESHOLDS

SCHEMA_VERSION = 1

LC_MODES = ("chord", "arc")


@dataclass
class PipelineConfig:
    """Measurement pipeline settings.

    thresholds:       binarization levels for the union graph and the
                      background distance field, strictly increasing,
                      in [0, 255].
    spacing:          anchor node spacing along segments, px.
    corridor:         Chebyshev radius of the retrace search corridor.
    epsilon:          retrace edge-cost regularizer.
    boost_index_base: global index of thresholds[0] in the distance
                      field's boost schedule (0 = full list; the
                      quadratic boost starts after index 5).
    delta:            confidence margin below which labels may be
                      overwritten by propagation.
    tau_av:           minimum class probability for an initial label.
    width_threshold:  binarization level for the width mask.
    avr_annulus:      AVR ring radii as multiples of disc diameter.
    tort_zone:        tortuosity ring radii as multiples of diameter.
    l_min:            minimum pixels for a terminal twig to count;
                      segments under 2*l_min are skipped.
    smooth_window:    moving-average width for curvature splitting.
    lc_mode:          tortuosity normalization length: "chord" or "arc"
                      of the full segment.
    norm_c:           fixed tortuosity normalization constant; None
                      derives the run median.
    seed:             RNG seed recorded for synthetic workflows.
    max_dim:          optional input resize so max(height, width) ==
                      max_dim; None processes native resolution.
    """

    thresholds: tuple[int, ...] = DEFAULT_THRESHOLDS
    spacing: int = 10
    corridor: int = 5
    epsilon: float = 1e-3
    boost_index_base: int = 0
    delta: float = 0.1
    tau_av: float = 0.05
    width_threshold: int = 100
    avr_annulus: tuple[float, float] = (1.0, 1.5)
    tort_zone: tuple[float, float] = (1.5, 2.5)
    l_min: int = 10
    smooth_window: int = 5
    lc_mode: str = "chord"
    norm_c: float | None = None
    seed: int = 0
    max_dim: int | None = None

    def __post_init__(self) -> None:
        self.thresholds = tuple(int(t) for t in self.thresholds)
        self.avr_annulus = tuple(float(x) for x in self.avr_annulus)
        self.tort_zone = tuple(float(x) for x in self.tort_zone)
        self.validate()

    def validate(self) -> None:
        t = self.thresholds
        if not t:
            raise ConfigError("thresholds must be nonempty")
        if any(not 0 <= x <= 255 for x in t):
            raise ConfigError("thresholds must lie in [0, 255]")
        if any(b <= a for a, b in zip(t, t[1:])):
            raise ConfigError("thresholds must be strictly increasing")
        if self.spacing < 2:
            raise ConfigError("spacing must be >= 2")
        if self.corridor < 1:
            raise ConfigError("corridor must be >= 1")
        if not self.epsilon > 0:
            raise ConfigError("epsilon must be positive")
        if self.boost_index_base < 0:
            raise ConfigError("boost_index_base must be >= 0")
        if not 0 <= self.delta <= 1:
            raise ConfigError("delta must be in [0, 1]")
        if not 0 <= self.tau_av <= 1:
            raise ConfigError("tau_av must be in [0, 1]")
        if not 1 <= self.width_threshold <= 255:
            raise ConfigError("width_threshold must be in [1, 255]")
        for name, pair in (("avr_annulus", self.avr_annulus),
                           ("tort_zone", self.tort_zone)):
            if len(pair) != 2 or not 0 < pair[0] < pair[1]:
                raise ConfigError(f"{name} must satisfy 0 < inner < outer")
        if self.l_min < 1:
            raise ConfigError("l_min must be >= 1")
        if self.smooth_window < 2:
            raise ConfigError("smooth_window must be >= 2")
        if self.lc_mode not in LC_MODES:
            raise ConfigError(f"lc_mode must be one of {LC_MODES}")
        if self.norm_c is not None and not self.norm_c > 0:
            raise ConfigError("norm_c must be positive when set")
        if self.max_dim is not None and self.max_dim < 64:
            raise ConfigError("max_dim must be >= 64 when set")

    def to_json(self) -> dict:
        doc: dict = {"schema": SCHEMA_VERSION}
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, tuple):
                value = list(value)
            doc[f.name] = value
        return doc

    @classmethod
    def from_json(cls, doc: dict) -> "PipelineConfig":
        if not isinstance(doc, dict):
            raise ConfigError("config document must be a JSON object")
        if doc.get("schema") != SCHEMA_VERSION:
            raise ConfigError(
                f"unsupported config schema {doc.get('schema')!r}; expected {SCHEMA_VERSION}"
            )
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known - {"schema"}
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        kwargs = {k: v for k, v in doc.items() if k != "schema"}
        try:
            return cls(**kwargs)
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"malformed config: {exc}") from None


def load_config(path: str | Path) -> PipelineConfig:
    try:
        doc = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError(f"{path}: config file not found") from None
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"{path}: cannot parse config: {exc}") from None
    return PipelineConfig.from_json(doc)


def save_config(path: str | Path, config: PipelineConfig) -> None:
    Path(path).write_text(json.dumps(config.to_json(), indent=1, sort_keys=True))
