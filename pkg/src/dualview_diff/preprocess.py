"""Preprocessing chain: normalize -> orient -> histogram match -> resize."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence, Union

import numpy as np

from dualview_diff.codec import DualViewPair
from dualview_diff.errors import DataError, DegenerateReferenceError
from dualview_diff.imagecore import UINT16_MAX, as_gray, hflip

N_BINS = UINT16_MAX + 1
FIRST_IMAGE = "first-image"

ReferenceSpec = Union[np.ndarray, str]


@dataclass(frozen=True)
class PreprocessConfig:
    target_size: int = 256
    reference_histogram: ReferenceSpec = FIRST_IMAGE
    flip_left: bool = True
    # None: integer inputs use their dtype maximum, float inputs are taken as already unit-scaled
    max_value: float | None = None

    def __post_init__(self):
        if self.target_size < 8:
            raise DataError("target_size must be >= 8")
        if isinstance(self.reference_histogram, str):
            if self.reference_histogram != FIRST_IMAGE:
                raise DataError(f"unknown reference sentinel {self.reference_histogram!r}")
        else:
            object.__setattr__(self, "reference_histogram", validate_cdf(self.reference_histogram))


def normalize_unit(raw, max_value) -> np.ndarray:
    raw = np.asarray(raw)
    if raw.ndim != 2:
        raise DataError(f"expected a 2-D image, got shape {raw.shape}")
    if max_value <= 0:
        raise DataError("max_value must be positive")
    if raw.size and (raw.max() > max_value or raw.min() < 0):
        raise DataError(f"raw values outside [0, {max_value}]")
    return raw.astype(np.float64) / float(max_value)


def orient(pair: DualViewPair) -> DualViewPair:
    if pair.laterality is None:
        raise DataError(f"pair {pair.subject_id!r} has no laterality")
    if pair.laterality == "left":
        return pair.with_views(hflip(pair.cc), hflip(pair.mlo), laterality="right-oriented")
    return pair


def _levels(img: np.ndarray) -> np.ndarray:
    return np.floor(np.clip(img, 0.0, 1.0) * UINT16_MAX + 0.5).astype(np.int64)


def image_cdf(img) -> np.ndarray:
    """Cumulative distribution of ``img`` over the 65536 uint16 levels."""
    img = as_gray(img)
    counts = np.bincount(_levels(img).ravel(), minlength=N_BINS)
    cdf = np.cumsum(counts) / img.size
    cdf[-1] = 1.0
    return cdf


def validate_cdf(cdf) -> np.ndarray:
    cdf = np.asarray(cdf, dtype=np.float64)
    if cdf.shape != (N_BINS,):
        raise DataError(f"reference CDF must have {N_BINS} entries, got {cdf.shape}")
    if np.any(np.diff(cdf) < 0) or cdf[0] < 0:
        raise DataError("reference CDF must be nondecreasing and nonnegative")
    if cdf[-1] != 1.0:
        raise DataError("reference CDF must end at 1.0")
    return cdf


def histogram_match(img, reference_cdf) -> np.ndarray:
    img = as_gray(img)
    ref = validate_cdf(reference_cdf)
    if np.count_nonzero(np.diff(ref, prepend=0.0)) <= 1:
        raise DegenerateReferenceError("reference distribution has all mass in a single bin")
    levels = _levels(img)
    src_cdf = image_cdf(img)
    # smallest reference level whose CDF reaches the source CDF value
    lut = np.minimum(np.searchsorted(ref, src_cdf, side="left"), UINT16_MAX)
    return lut[levels] / UINT16_MAX


def resize(img, target: int) -> np.ndarray:
    """Bilinear resize to ``target x target`` sampling at pixel centers."""
    if target < 1:
        raise DataError("target size must be >= 1")
    img = as_gray(img)
    h, w = img.shape
    r0, r1, fr = _bilinear_axis(h, target)
    c0, c1, fc = _bilinear_axis(w, target)
    top = img[r0][:, c0] * (1 - fc) + img[r0][:, c1] * fc
    bottom = img[r1][:, c0] * (1 - fc) + img[r1][:, c1] * fc
    return top * (1 - fr[:, None]) + bottom * fr[:, None]


def _bilinear_axis(n_in: int, n_out: int):
    src = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
    src = np.clip(src, 0.0, n_in - 1)
    lo = np.floor(src).astype(np.int64)
    hi = np.minimum(lo + 1, n_in - 1)
    return lo, hi, src - lo


def _unit_scale(view, max_value) -> np.ndarray:
    view = np.asarray(view)
    if max_value is None:
        max_value = np.iinfo(view.dtype).max if view.dtype.kind in "iu" else 1.0
    return normalize_unit(view, max_value)


def preprocess_pair(
    pair: DualViewPair,
    cfg: PreprocessConfig,
    trace: Callable[[str, DualViewPair], None] | None = None,
) -> DualViewPair:
    """Run the four stages in order. ``trace`` is called after each stage."""

    def emit(stage, p):
        if trace is not None:
            trace(stage, p)
        return p

    p = emit("normalize", pair.with_views(_unit_scale(pair.cc, cfg.max_value), _unit_scale(pair.mlo, cfg.max_value)))
    if cfg.flip_left:
        p = orient(p)
    elif p.laterality is None:
        raise DataError(f"pair {p.subject_id!r} has no laterality")
    p = emit("orient", p)
    ref = cfg.reference_histogram
    if isinstance(ref, str):
        ref = image_cdf(p.cc)
    p = emit("match", p.with_views(histogram_match(p.cc, ref), histogram_match(p.mlo, ref)))
    p = emit("resize", p.with_views(resize(p.cc, cfg.target_size), resize(p.mlo, cfg.target_size)))
    return p


def preprocess_dataset(pairs: Sequence[DualViewPair], cfg: PreprocessConfig) -> list[DualViewPair]:
    """Preprocess every pair against one shared reference.

    With the first-image sentinel the reference is the normalized, oriented
    CC view of the first pair.
    """
    if not pairs:
        return []
    if isinstance(cfg.reference_histogram, str):
        first = pairs[0].with_views(_unit_scale(pairs[0].cc, cfg.max_value), pairs[0].mlo)
        if cfg.flip_left:
            first = orient(first)
        cfg = PreprocessConfig(cfg.target_size, image_cdf(first.cc), cfg.flip_left, cfg.max_value)
    return [preprocess_pair(p, cfg) for p in pairs]


def load_reference_cdf(path) -> np.ndarray:
    values = np.loadtxt(Path(path), dtype=np.float64, ndmin=1)
    return validate_cdf(values)


def save_reference_cdf(cdf, path) -> None:
    cdf = validate_cdf(cdf)
    Path(path).write_text("\n".join(repr(float(v)) for v in cdf) + "\n")
