"""Percentile clipping of generated images."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from dualview_diff.errors import DataError


class DegenerateRangeWarning(UserWarning):
    """Raised through :mod:`warnings` when a channel's clip range collapses to a point."""


@dataclass(frozen=True)
class ClipConfig:
    lo_percentile: float = 0.5
    hi_percentile: float = 99.5
    rescale: bool = True

    def __post_init__(self):
        if not (0 <= self.lo_percentile < self.hi_percentile <= 100):
            raise DataError("need 0 <= lo < hi <= 100")


def percentile(values, p: float) -> float:
    """Linear-interpolation percentile: rank p/100 * (n - 1) into the sorted values."""
    x = np.sort(np.asarray(values, dtype=np.float64).ravel())
    if x.size == 0:
        raise DataError("percentile of an empty collection")
    if not 0 <= p <= 100:
        raise DataError("p must lie in [0, 100]")
    rank = p / 100.0 * (x.size - 1)
    lo = math.floor(rank)
    hi = math.ceil(rank)
    frac = rank - lo
    return float(x[lo] + (x[hi] - x[lo]) * frac)


def _clip_plane(plane: np.ndarray, cfg: ClipConfig) -> np.ndarray:
    lo = percentile(plane, cfg.lo_percentile)
    hi = percentile(plane, cfg.hi_percentile)
    clipped = np.clip(plane, lo, hi)
    if not cfg.rescale:
        return clipped
    if hi <= lo:
        warnings.warn(f"degenerate clip range [{lo}, {hi}]; output set to 0", DegenerateRangeWarning, stacklevel=3)
        return np.zeros_like(plane)
    return (clipped - lo) / (hi - lo)


def percentile_clip(img, cfg: ClipConfig = ClipConfig()) -> np.ndarray:
    """Clip (and by default rescale to [0, 1]) a 2-D image or each plane of a (C, H, W) stack."""
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim == 2:
        return _clip_plane(arr, cfg)
    if arr.ndim == 3:
        return np.stack([_clip_plane(plane, cfg) for plane in arr])
    raise DataError(f"expected a 2-D image or (C, H, W) stack, got {arr.shape}")
