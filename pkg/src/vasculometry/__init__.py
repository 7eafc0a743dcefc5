"""Retinal vascular morphometry from vessel likelihood maps.

The package turns a per-pixel vessel likelihood map into a topological
graph of the vasculature (branch points, end points, centerline
segments), then computes clinically used summary numbers on that graph:
the artery-vein ratio from Knudtson revised caliber equivalents, and
per-vessel Grisan tortuosity.  A synthetic generator with known ground
truth and a small agreement-statistics toolkit (Bland-Altman style)
support validation.
"""

from .config import PipelineConfig
from .errors import ConfigError, InputError
from .raster import (
    DEFAULT_THRESHOLDS,
    background_distance_field,
    binarize,
    distance_transform,
    load_likelihood,
    read_field,
    thin,
    write_field,
)
from .topology import (
    GraphNode,
    PixelGraph,
    VesselGraph,
    VesselSegment,
    contract,
    decompose,
    retrace,
    union_graph,
)
from .labeling import label_nodes, load_av_maps, propagate
from .morphometry import (
    ARTERY_SCALE,
    VEIN_SCALE,
    Annulus,
    DiscGeometry,
    WidthSample,
    annulus_from_disc,
    annulus_subgraph,
    avr,
    knudtson_equivalent,
    load_disc,
    route_vessels,
    save_disc,
    segment_width,
    top_k_by_label,
)
from .tortuosity import (
    TortuosityRecord,
    curvature_split,
    grisan_tortuosity,
    tortuosity_report,
)
from .stats import (
    AgreementSummary,
    PairedSeries,
    bland_altman_points,
    read_pairs_csv,
    summarize,
)
from .synth import SyntheticVessel, generate_scene, random_scene, rasterize
from .pipeline import MeasurementReport, run_batch, run_single

__version__ = "0.1.0"

__all__ = [
    "ARTERY_SCALE",
    "VEIN_SCALE",
    "AgreementSummary",
    "Annulus",
    "ConfigError",
    "DEFAULT_THRESHOLDS",
    "DiscGeometry",
    "GraphNode",
    "InputError",
    "MeasurementReport",
    "PairedSeries",
    "PipelineConfig",
    "PixelGraph",
    "SyntheticVessel",
    "TortuosityRecord",
    "VesselGraph",
    "VesselSegment",
    "WidthSample",
    "annulus_from_disc",
    "annulus_subgraph",
    "avr",
    "background_distance_field",
    "binarize",
    "bland_altman_points",
    "contract",
    "curvature_split",
    "decompose",
    "distance_transform",
    "generate_scene",
    "grisan_tortuosity",
    "knudtson_equivalent",
    "label_nodes",
    "load_av_maps",
    "load_disc",
    "load_likelihood",
    "propagate",
    "random_scene",
    "read_field",
    "read_pairs_csv",
    "retrace",
    "route_vessels",
    "run_batch",
    "run_single",
    "save_disc",
    "segment_width",
    "summarize",
    "thin",
    "top_k_by_label",
    "tortuosity_report",
    "union_graph",
    "write_field",
]
