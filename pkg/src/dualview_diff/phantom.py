"""Procedural dual-view phantoms.

Each pair shares a half-ellipse silhouette anchored at the left (chest-wall)
edge. The CC and MLO outlines are perturbed by low-order radial harmonics
whose coefficients are correlated across views; the MLO view also carries a
bright triangular pectoral wedge in the top-left corner. Background is 0.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from dualview_diff.codec import DualViewPair, encode
from dualview_diff.errors import DataError

N_HARMONICS = 3
DEFORM_AMPLITUDE = 0.12


@dataclass(frozen=True)
class PhantomConfig:
    size: int = 64
    n_pairs: int = 64
    seed: int = 0
    shape_correlation: float = 0.8
    texture_scale: float = 4.0
    # 0 disables the texture entirely
    texture_strength: float = 0.25
    pectoral_wedge: bool = True

    def __post_init__(self):
        if self.size < 16:
            raise DataError("phantom size must be >= 16")
        if not 0.0 <= self.shape_correlation <= 1.0:
            raise DataError("shape_correlation must lie in [0, 1]")
        if self.n_pairs < 0 or self.texture_strength < 0 or self.texture_scale <= 0:
            raise DataError("invalid phantom config")


def _texture(rng: np.random.Generator, yy, xx, cfg: PhantomConfig) -> np.ndarray:
    if cfg.texture_strength == 0:
        return np.ones_like(xx)
    field = np.zeros_like(xx)
    for _ in range(4):
        angle = rng.uniform(0, np.pi)
        freq = cfg.texture_scale * rng.uniform(0.5, 1.5)
        phase = rng.uniform(0, 2 * np.pi)
        field += np.cos(2 * np.pi * freq * (np.cos(angle) * xx + np.sin(angle) * yy) + phase)
    return 1.0 + cfg.texture_strength * field / 4.0


def _view(shape: dict, coeffs: np.ndarray, yy, xx) -> tuple[np.ndarray, np.ndarray]:
    u = xx
    v = yy - 0.5 - shape["offset"]
    theta = np.arctan2(v, u)
    rho = np.hypot(u, v)
    r_ellipse = 1.0 / np.sqrt((np.cos(theta) / shape["a_u"]) ** 2 + (np.sin(theta) / shape["a_v"]) ** 2)
    k = np.arange(1, N_HARMONICS + 1)[:, None, None]
    # theta in [-pi/2, pi/2] mapped onto one period so harmonics stay smooth at the chest wall
    phi = (theta[None] + np.pi / 2) * 2
    deform = (coeffs[:N_HARMONICS, None, None] * np.cos(k * phi)
              + coeffs[N_HARMONICS:, None, None] * np.sin(k * phi)).sum(axis=0)
    radius = r_ellipse * np.clip(1.0 + DEFORM_AMPLITUDE * deform / np.sqrt(N_HARMONICS), 0.4, None)
    inside = rho <= radius
    profile = 0.55 + 0.3 * np.clip(1.0 - rho / radius, 0.0, 1.0)
    return inside, profile


def _pair(rng: np.random.Generator, cfg: PhantomConfig, index: int) -> DualViewPair:
    s = cfg.size
    yy, xx = np.meshgrid((np.arange(s) + 0.5) / s, (np.arange(s) + 0.5) / s, indexing="ij")
    shape = {
        "a_u": rng.uniform(0.5, 0.8),
        "a_v": rng.uniform(0.3, 0.42),
        "offset": rng.uniform(-0.05, 0.05),
    }
    z_cc = rng.standard_normal(2 * N_HARMONICS)
    z_ind = rng.standard_normal(2 * N_HARMONICS)
    rho = cfg.shape_correlation
    z_mlo = rho * z_cc + np.sqrt(1.0 - rho * rho) * z_ind
    wedge_u, wedge_v = rng.uniform(0.12, 0.25), rng.uniform(0.3, 0.5)

    views = []
    for coeffs, is_mlo in ((z_cc, False), (z_mlo, True)):
        inside, profile = _view(shape, coeffs, yy, xx)
        img = np.where(inside, profile, 0.0)
        if is_mlo and cfg.pectoral_wedge:
            wedge = xx / wedge_u + yy / wedge_v < 1.0
            img = np.where(wedge, 0.9, img)
            inside = inside | wedge
        img = np.where(inside, np.clip(img * _texture(rng, yy, xx, cfg), 0.3, 1.0), 0.0)
        views.append(img)
    return DualViewPair(views[0], views[1], laterality="right-oriented", subject_id=f"phantom_{index:05d}")


def generate(cfg: PhantomConfig) -> list[DualViewPair]:
    """Deterministic in ``cfg.seed``; pair i uses its own spawned stream."""
    streams = np.random.SeedSequence(cfg.seed).spawn(cfg.n_pairs)
    return [_pair(np.random.default_rng(ss), cfg, i) for i, ss in enumerate(streams)]


def generate_encoded(cfg: PhantomConfig) -> list[np.ndarray]:
    return [encode(p) for p in generate(cfg)]
