"""Global Otsu thresholding for breast-silhouette masks."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from dualview_diff.codec import DualViewPair
from dualview_diff.imagecore import as_gray, check_same_shape


@dataclass(frozen=True, eq=False)
class OtsuResult:
    threshold: float
    between_class_variance: float
    mask: np.ndarray
    degenerate: bool = False


def bin_index(img: np.ndarray, bins: int) -> np.ndarray:
    """Right-closed bins: bin k holds values in (k/bins, (k+1)/bins], bin 0 also holds 0.

    With this convention "bin >= k" is exactly "value > k/bins", so the mask
    and the histogram split agree on every pixel.
    """
    return np.clip(np.ceil(np.clip(img, 0.0, 1.0) * bins).astype(np.int64) - 1, 0, bins - 1)


def between_class_variance(n0, s0, n1, s1) -> float:
    """w0 * w1 * (mu0 - mu1)^2 from class counts and sums of bin indices."""
    if n0 == 0 or n1 == 0:
        return 0.0
    n = n0 + n1
    num = n1 * s0 - n0 * s1
    return float(num * num) / float(n0 * n1 * n * n)


def otsu_threshold(img, bins: int = 256) -> OtsuResult:
    """Threshold at the bin boundary k/bins maximizing between-class variance.

    Class statistics use integer bin indices, so the score is evaluated from
    exact integer counts and sums. Ties go to the lowest boundary.
    """
    img = as_gray(img)
    if img.min() == img.max():
        return OtsuResult(float(img.flat[0]), 0.0, np.zeros(img.shape, dtype=bool), degenerate=True)
    idx = bin_index(img, bins)
    counts = np.bincount(idx.ravel(), minlength=bins).astype(np.int64)
    sums = counts * np.arange(bins, dtype=np.int64)
    c_counts = np.concatenate([[0], np.cumsum(counts)])
    c_sums = np.concatenate([[0], np.cumsum(sums)])
    n_total, s_total = int(c_counts[-1]), int(c_sums[-1])
    best_k, best = 0, -1.0
    for k in range(bins):
        n0, s0 = int(c_counts[k]), int(c_sums[k])
        score = between_class_variance(n0, s0, n_total - n0, s_total - s0)
        if score > best:
            best_k, best = k, score
    threshold = best_k / bins
    return OtsuResult(threshold, best / bins ** 2, img > threshold)


def mask_pair(pair: DualViewPair) -> tuple[np.ndarray, np.ndarray]:
    check_same_shape(pair.cc, pair.mlo)
    return otsu_threshold(pair.cc).mask, otsu_threshold(pair.mlo).mask


def otsu_pair(pair: DualViewPair) -> tuple[OtsuResult, OtsuResult]:
    check_same_shape(pair.cc, pair.mlo)
    return otsu_threshold(pair.cc), otsu_threshold(pair.mlo)
