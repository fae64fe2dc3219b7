"""Pack a CC/MLO pair into a three-plane image and back.

Plane 0 holds the CC view, plane 1 the MLO view and plane 2 their absolute
pixel-wise difference. Generated triples are decoded from planes 0 and 1
only; the difference plane is diagnostic.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from dualview_diff.errors import DataError
from dualview_diff.imagecore import abs_diff, as_gray, check_same_shape

LATERALITIES = ("left", "right", "right-oriented")


@dataclass(frozen=True, eq=False)
class DualViewPair:
    cc: np.ndarray
    mlo: np.ndarray
    laterality: str | None = "right-oriented"
    subject_id: str = ""

    def __post_init__(self):
        cc = as_gray(self.cc) if np.asarray(self.cc).dtype.kind == "f" else np.asarray(self.cc)
        mlo = as_gray(self.mlo) if np.asarray(self.mlo).dtype.kind == "f" else np.asarray(self.mlo)
        check_same_shape(cc, mlo)
        if self.laterality is not None and self.laterality not in LATERALITIES:
            raise DataError(f"unknown laterality {self.laterality!r}")
        object.__setattr__(self, "cc", cc)
        object.__setattr__(self, "mlo", mlo)

    @property
    def shape(self) -> tuple[int, int]:
        return self.cc.shape

    def with_views(self, cc, mlo, **changes) -> "DualViewPair":
        return replace(self, cc=cc, mlo=mlo, **changes)

    def __eq__(self, other):
        if not isinstance(other, DualViewPair):
            return NotImplemented
        return (
            self.laterality == other.laterality
            and self.subject_id == other.subject_id
            and np.array_equal(self.cc, other.cc)
            and np.array_equal(self.mlo, other.mlo)
        )

    __hash__ = None


@dataclass(frozen=True)
class Decoded:
    pair: DualViewPair
    diff: np.ndarray


def encode(pair: DualViewPair) -> np.ndarray:
    cc = as_gray(pair.cc)
    mlo = as_gray(pair.mlo)
    return np.stack([cc, mlo, abs_diff(cc, mlo)])


def decode(triple, laterality: str = "right-oriented", subject_id: str = "") -> Decoded:
    """Split a triple into clipped views. The third plane is passed through untouched."""
    triple = _as_triple(triple)
    pair = DualViewPair(
        cc=np.clip(triple[0], 0.0, 1.0),
        mlo=np.clip(triple[1], 0.0, 1.0),
        laterality=laterality,
        subject_id=subject_id,
    )
    return Decoded(pair=pair, diff=triple[2].copy())


def consistency_residual(triple) -> float:
    triple = _as_triple(triple)
    return float(np.mean(np.abs(triple[2] - np.abs(triple[0] - triple[1]))))


def _as_triple(triple) -> np.ndarray:
    arr = np.asarray(triple, dtype=np.float64)
    if arr.ndim != 3 or arr.shape[0] != 3:
        raise DataError(f"expected a (3, H, W) triple, got {arr.shape}")
    return arr
