"""Cross-view overlap metrics between CC and MLO silhouette masks."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np

from dualview_diff.codec import DualViewPair
from dualview_diff.errors import DataError, DimensionMismatchError
from dualview_diff.segmentation import otsu_pair

log = logging.getLogger(__name__)

CSV_HEADER = ["subject_id", "source", "iou", "dsc", "degenerate"]
SOURCES = ("real", "synthetic")


@dataclass(frozen=True)
class MetricSample:
    subject_id: str
    iou: float
    dsc: float
    source: str
    degenerate: bool = False


def _counts(a, b) -> tuple[int, int, int]:
    a = np.asarray(a, dtype=bool)
    b = np.asarray(b, dtype=bool)
    if a.shape != b.shape:
        raise DimensionMismatchError(f"mask shapes differ: {a.shape} vs {b.shape}")
    inter = int(np.count_nonzero(a & b))
    return inter, int(np.count_nonzero(a)), int(np.count_nonzero(b))


def iou(a, b) -> float:
    """|a & b| / |a | b|; two empty masks score 1.0."""
    inter, na, nb = _counts(a, b)
    union = na + nb - inter
    return 1.0 if union == 0 else inter / union


def dsc(a, b) -> float:
    """2 |a & b| / (|a| + |b|); two empty masks score 1.0."""
    inter, na, nb = _counts(a, b)
    return 1.0 if na + nb == 0 else 2 * inter / (na + nb)


def evaluate_pair(pair: DualViewPair, source: str) -> MetricSample:
    r_cc, r_mlo = otsu_pair(pair)
    inter, na, nb = _counts(r_cc.mask, r_mlo.mask)
    degenerate = (na + nb == 0) or r_cc.degenerate or r_mlo.degenerate
    return MetricSample(pair.subject_id, iou(r_cc.mask, r_mlo.mask), dsc(r_cc.mask, r_mlo.mask), source, degenerate)


def evaluate_dataset(pairs: Iterable[DualViewPair], source: str) -> list[MetricSample]:
    """One sample per pair, sorted by subject id. Failing pairs are logged and skipped."""
    if source not in SOURCES:
        raise DataError(f"source must be one of {SOURCES}")
    pairs = list(pairs)
    if not pairs:
        raise DataError("no pairs to evaluate")
    out = []
    for pair in pairs:
        try:
            out.append(evaluate_pair(pair, source))
        except DataError as exc:
            log.warning("skipping %s: %s", pair.subject_id, exc)
    return sorted(out, key=lambda s: s.subject_id)


def write_metrics_csv(samples: Iterable[MetricSample], path) -> None:
    with open(Path(path), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_HEADER)
        for s in samples:
            w.writerow([s.subject_id, s.source, repr(s.iou), repr(s.dsc), int(s.degenerate)])


def read_metrics_csv(path) -> list[MetricSample]:
    with open(Path(path), newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or list(reader.fieldnames) != CSV_HEADER:
            raise DataError(f"{path}: expected header {','.join(CSV_HEADER)}")
        try:
            return [
                MetricSample(r["subject_id"], float(r["iou"]), float(r["dsc"]), r["source"],
                             r["degenerate"].strip().lower() in ("1", "true"))
                for r in reader
            ]
        except ValueError as exc:
            raise DataError(f"{path}: {exc}") from exc
