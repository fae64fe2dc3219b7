"""Image primitives and 16-bit PNG I/O.

Images are plain numpy arrays: a gray image is a 2-D float64 array in [0, 1]
(row-major, top-left origin), an encoded triple is a ``(3, H, W)`` float
array (planes CC, MLO, |CC - MLO|) and a binary mask is a 2-D bool array.
uint16 only exists at the file boundary.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from dualview_diff.errors import (
    BitDepthError,
    ChannelCountError,
    DataError,
    DimensionMismatchError,
    UnreadableImageError,
)

UINT16_MAX = 65535

_GRAY16_MODES = {"I;16", "I;16L", "I;16B"}
_MULTICHANNEL_MODES = {"RGB", "RGBA", "LA", "CMYK", "YCbCr", "LAB", "HSV", "PA", "RGBX"}


def as_gray(img) -> np.ndarray:
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim != 2 or arr.size == 0:
        raise DataError(f"expected a non-empty 2-D image, got shape {arr.shape}")
    return arr


def check_same_shape(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise DimensionMismatchError(f"shape mismatch: {a.shape} vs {b.shape}")


def quantize16(img: np.ndarray) -> np.ndarray:
    """Map [0, 1] floats to uint16 with round-half-away-from-zero."""
    img = np.asarray(img, dtype=np.float64)
    if img.size and (np.nanmin(img) < 0.0 or np.nanmax(img) > 1.0 or np.isnan(img).any()):
        raise DataError("pixel values must lie in [0, 1]; clip before saving")
    return np.floor(img * UINT16_MAX + 0.5).astype(np.uint16)


def load_gray16(path) -> np.ndarray:
    return load_raw16(path).astype(np.float64) / UINT16_MAX


def load_raw16(path) -> np.ndarray:
    """Stored uint16 values of a single-channel 16-bit PNG."""
    path = Path(path)
    try:
        with Image.open(path) as im:
            im.load()
            mode = im.mode
            if mode in _MULTICHANNEL_MODES:
                raise ChannelCountError(f"{path}: expected one channel, got mode {mode}")
            if mode in _GRAY16_MODES:
                raw = np.array(im, dtype=np.uint16)
            elif mode == "I":
                raw = np.array(im)
                if raw.min() < 0 or raw.max() > UINT16_MAX:
                    raise BitDepthError(f"{path}: values exceed the 16-bit range")
            else:
                raise BitDepthError(f"{path}: expected 16-bit grayscale, got mode {mode}")
    except (FileNotFoundError, IsADirectoryError, PermissionError, UnidentifiedImageError, OSError) as exc:
        if isinstance(exc, DataError):
            raise
        raise UnreadableImageError(f"{path}: {exc}") from exc
    return raw.astype(np.uint16)


def save_gray16(img, path) -> None:
    data = quantize16(as_gray(img))
    try:
        Image.fromarray(data).save(Path(path), format="PNG")
    except OSError as exc:
        raise DataError(f"cannot write {path}: {exc}") from exc


def save_mask8(mask, path) -> None:
    data = np.where(np.asarray(mask, dtype=bool), 255, 0).astype(np.uint8)
    Image.fromarray(data).save(Path(path), format="PNG")


def load_mask8(path) -> np.ndarray:
    with Image.open(path) as im:
        return np.array(im.convert("L")) > 127


def save_preview_rgb(triple, path) -> None:
    """Write an 8-bit RGB preview. Lossy; never read back for analysis."""
    arr = np.clip(np.asarray(triple, dtype=np.float64), 0.0, 1.0)
    rgb = np.floor(np.moveaxis(arr, 0, -1) * 255 + 0.5).astype(np.uint8)
    Image.fromarray(rgb, mode="RGB").save(Path(path), format="PNG")


def abs_diff(a, b) -> np.ndarray:
    a = as_gray(a)
    b = as_gray(b)
    check_same_shape(a, b)
    return np.abs(a - b)


def hflip(img) -> np.ndarray:
    return np.ascontiguousarray(as_gray(img)[:, ::-1])


def triple_paths(stem) -> tuple[Path, Path, Path]:
    stem = str(stem)
    return Path(stem + "_cc.png"), Path(stem + "_mlo.png"), Path(stem + "_diff.png")


def save_triple16(triple, stem) -> None:
    """Lossless triple container: three linked 16-bit PNGs sharing ``stem``."""
    triple = np.asarray(triple, dtype=np.float64)
    if triple.ndim != 3 or triple.shape[0] != 3:
        raise DataError(f"expected a (3, H, W) triple, got {triple.shape}")
    for plane, path in zip(triple, triple_paths(stem)):
        save_gray16(plane, path)


def load_triple16(stem) -> np.ndarray:
    planes = [load_gray16(p) for p in triple_paths(stem)]
    for p in planes[1:]:
        check_same_shape(planes[0], p)
    return np.stack(planes)
