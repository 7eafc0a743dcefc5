"""Agreement statistics for paired measurements.

Compares a candidate measurement series against a reference over the
same subjects: absolute-error summary, mean difference with population
standard deviation, 1.96-sigma limits of agreement, Bland-Altman
points, and counts of errors under fixed thresholds.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InputError

PAIRS_HEADER = ("id", "reference", "candidate")


@dataclass
class PairedSeries:
    """Aligned (reference, candidate) values, one pair per id."""

    ids: list[str]
    reference: np.ndarray
    candidate: np.ndarray

    def __post_init__(self) -> None:
        self.reference = np.asarray(self.reference, dtype=np.float64)
        self.candidate = np.asarray(self.candidate, dtype=np.float64)
        n = len(self.ids)
        if n < 1:
            raise InputError("paired series needs at least one row")
        if self.reference.shape != (n,) or self.candidate.shape != (n,):
            raise InputError("ids, reference, and candidate lengths disagree")
        if len(set(self.ids)) != n:
            raise InputError("paired series ids must be unique")
        for name, values in (("reference", self.reference), ("candidate", self.candidate)):
            if not np.all(np.isfinite(values)):
                raise InputError(f"{name} values must be finite")
            if np.any(values <= 0):
                raise InputError(f"{name} values must be positive")

    def __len__(self) -> int:
        return len(self.ids)


@dataclass
class AgreementSummary:
    n: int
    mean_abs_error: float
    std_abs_error: float
    min_abs_error: float
    max_abs_error: float
    mean_diff: float
    sd_diff: float
    loa_low: float
    loa_high: float
    count_lt: dict[float, int] = field(default_factory=dict)

    def to_json(self) -> dict:
        doc = {
            "n": self.n,
            "mean_abs_error": self.mean_abs_error,
            "std_abs_error": self.std_abs_error,
            "min_abs_error": self.min_abs_error,
            "max_abs_error": self.max_abs_error,
            "mean_diff": self.mean_diff,
            "sd_diff": self.sd_diff,
            "loa_low": self.loa_low,
            "loa_high": self.loa_high,
            "count_lt": {repr(t): c for t, c in self.count_lt.items()},
        }
        return doc


def summarize(
    series: PairedSeries, thresholds: tuple[float, ...] = (0.05, 0.1)
) -> AgreementSummary:
    """Summarize candidate-vs-reference agreement.

    Differences are candidate minus reference.  All spreads are
    population standard deviations (ddof 0); the limits of agreement
    are mean difference plus or minus 1.96 of that spread.  Threshold
    counts are strict: an error exactly equal to a threshold does not
    count as under it.
    """
    if len(series) < 2:
        raise InputError("agreement summary needs at least two pairs")
    thrs = tuple(thresholds)
    if not thrs or any(t <= 0 for t in thrs):
        raise InputError("thresholds must be positive")
    diff = series.candidate - series.reference
    abs_err = np.abs(diff)
    mean_diff = float(np.mean(diff))
    sd_diff = float(np.std(diff, ddof=0))
    return AgreementSummary(
        n=len(series),
        mean_abs_error=float(np.mean(abs_err)),
        std_abs_error=float(np.std(abs_err, ddof=0)),
        min_abs_error=float(np.min(abs_err)),
        max_abs_error=float(np.max(abs_err)),
        mean_diff=mean_diff,
        sd_diff=sd_diff,
        loa_low=mean_diff - 1.96 * sd_diff,
        loa_high=mean_diff + 1.96 * sd_diff,
        count_lt={t: int(np.sum(abs_err < t)) for t in thrs},
    )


def bland_altman_points(series: PairedSeries) -> np.ndarray:
    """Per-pair (mean, difference) points as an (n, 2) array.

    Column 0 is the pair mean, column 1 is candidate minus reference.
    """
    mean = (series.candidate + series.reference) / 2.0
    diff = series.candidate - series.reference
    return np.stack([mean, diff], axis=1)


def read_pairs_csv(path: str | Path) -> PairedSeries:
    """Load a paired series from CSV with header ``id,reference,candidate``."""
    path = Path(path)
    try:
        with path.open(newline="") as fh:
            reader = csv.reader(fh)
            rows = list(reader)
    except OSError as exc:
        raise InputError(f"{path}: cannot read pairs file: {exc}") from None
    if not rows or tuple(rows[0]) != PAIRS_HEADER:
        raise InputError(f"{path}: header must be exactly {','.join(PAIRS_HEADER)}")
    ids: list[str] = []
    ref: list[float] = []
    cand: list[float] = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != 3:
            raise InputError(f"{path}:{lineno}: expected 3 columns, got {len(row)}")
        ids.append(row[0])
        try:
            ref.append(float(row[1]))
            cand.append(float(row[2]))
        except ValueError:
            raise InputError(f"{path}:{lineno}: values must be numeric") from None
    if not ids:
        raise InputError(f"{path}: no data rows")
    return PairedSeries(ids, np.asarray(ref), np.asarray(cand))


def save_summary(path: str | Path, summary: AgreementSummary) -> None:
    Path(path).write_text(json.dumps(summary.to_json(), indent=1, sort_keys=True))


def save_bland_altman(path: str | Path, series: PairedSeries) -> None:
    """Write Bland-Altman points as CSV with header ``id,mean,difference``."""
    points = bland_altman_points(series)
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "mean", "difference"])
        for pid, (m, d) in zip(series.ids, points):
            writer.writerow([pid, repr(float(m)), repr(float(d))])
