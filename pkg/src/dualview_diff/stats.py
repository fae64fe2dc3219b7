"""Descriptive statistics, two-sample KS, 1-D EMD and violin-plot data."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from dualview_diff.errors import DataError
from dualview_diff.postprocess import percentile

GRID_POINTS = 200
METRICS = ("iou", "dsc")


@dataclass(frozen=True)
class DescriptiveStats:
    n: int
    mean: float
    std: float
    min: float
    q1: float
    median: float
    q3: float
    max: float
    iqr: float
    std_kind: str = "sample"
    single_value: bool = False

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class DistTestResult:
    ks_d: float
    ks_pvalue: float
    emd: float


def _values(samples, name="samples") -> np.ndarray:
    x = np.asarray(samples, dtype=np.float64).ravel()
    if x.size == 0:
        raise DataError(f"{name} is empty")
    return x


def describe(samples) -> DescriptiveStats:
    x = _values(samples)
    q1, med, q3 = (percentile(x, p) for p in (25, 50, 75))
    std = float(np.std(x, ddof=1)) if x.size > 1 else 0.0
    return DescriptiveStats(
        n=int(x.size), mean=float(np.mean(x)), std=std, min=float(x.min()),
        q1=q1, median=med, q3=q3, max=float(x.max()), iqr=q3 - q1, single_value=x.size == 1,
    )


def ecdf_at(sorted_x: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Right-continuous empirical CDF: fraction of samples <= point."""
    return np.searchsorted(sorted_x, points, side="right") / sorted_x.size


def kolmogorov_sf(lam: float, tol: float = 1e-12) -> float:
    """2 * sum_{k>=1} (-1)^(k-1) exp(-2 k^2 lam^2), stopping once a term drops below ``tol``."""
    if lam <= 0:
        return 1.0
    total, k = 0.0, 1
    while True:
        term = math.exp(-2.0 * k * k * lam * lam)
        if term < tol:
            break
        total += term if k % 2 else -term
        k += 1
    return min(1.0, max(0.0, 2.0 * total))


def ks_two_sample(a, b) -> tuple[float, float]:
    a = np.sort(_values(a, "a"))
    b = np.sort(_values(b, "b"))
    pooled = np.concatenate([a, b])
    d = float(np.max(np.abs(ecdf_at(a, pooled) - ecdf_at(b, pooled))))
    n_eff = a.size * b.size / (a.size + b.size)
    root = math.sqrt(n_eff)
    lam = (root + 0.12 + 0.11 / root) * d
    return d, kolmogorov_sf(lam)


def emd_1d(a, b) -> float:
    """Area between the two empirical CDFs, integrated exactly between pooled breakpoints."""
    a = np.sort(_values(a, "a"))
    b = np.sort(_values(b, "b"))
    pts = np.unique(np.concatenate([a, b]))
    if pts.size < 2:
        return 0.0
    gap = np.abs(ecdf_at(a, pts[:-1]) - ecdf_at(b, pts[:-1]))
    return float(np.sum(gap * np.diff(pts)))


def compare(a, b) -> DistTestResult:
    d, p = ks_two_sample(a, b)
    return DistTestResult(ks_d=d, ks_pvalue=p, emd=emd_1d(a, b))


def silverman_bandwidth(x: np.ndarray) -> float:
    """0.9 * min(std, IQR / 1.34) * n^(-1/5), falling back to the grid spacing for zero spread."""
    std = float(np.std(x, ddof=1)) if x.size > 1 else 0.0
    iqr = percentile(x, 75) - percentile(x, 25)
    spread = min(std, iqr / 1.34) if iqr > 0 else std
    h = 0.9 * spread * x.size ** (-0.2)
    return h if h > 0 else 1.0 / (GRID_POINTS - 1)


def kde_on_grid(samples, grid: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray, float]:
    x = _values(samples)
    grid = np.linspace(0.0, 1.0, GRID_POINTS) if grid is None else grid
    h = silverman_bandwidth(x)
    z = (grid[:, None] - x[None, :]) / h
    dens = np.exp(-0.5 * z * z).sum(axis=1) / (x.size * h * math.sqrt(2 * math.pi))
    return grid, dens, h


def plot_data(real: dict, synthetic: dict) -> dict:
    """Per group and metric: descriptive stats plus a Gaussian KDE on a fixed [0, 1] grid.

    ``real`` / ``synthetic`` map metric names ("iou", "dsc") to value collections.
    """
    out = {}
    for group, data in (("real", real), ("synthetic", synthetic)):
        out[group] = {}
        for metric in METRICS:
            values = _values(data.get(metric, []), f"{group}/{metric}")
            grid, dens, h = kde_on_grid(values)
            out[group][metric] = {
                "stats": describe(values).to_dict(),
                "grid": grid.tolist(),
                "density": dens.tolist(),
                "bandwidth": h,
            }
    return out


def build_report(real: dict, synthetic: dict) -> dict:
    """Descriptive statistics, two-sample tests and density plot data in one JSON-ready dict."""
    descriptive = {}
    distribution_tests = {}
    for metric in METRICS:
        r = describe(real[metric])
        s = describe(synthetic[metric])
        descriptive[metric] = {
            "real": {**r.to_dict(), "mean_difference": None},
            "synthetic": {**s.to_dict(), "mean_difference": s.mean - r.mean},
        }
        distribution_tests[metric] = asdict(compare(real[metric], synthetic[metric]))
    return {
        "descriptive": descriptive,
        "distribution_tests": distribution_tests,
        "plot_data": plot_data(real, synthetic),
        "meta": {
            "std": "sample (n-1)",
            "percentile_rule": "linear interpolation, rank = p/100*(n-1)",
            "ks_pvalue": "asymptotic Kolmogorov, n_eff = na*nb/(na+nb), Stephens correction",
            "emd": "1-Wasserstein on the line (CDF area)",
            "mean_difference": "synthetic_mean - real_mean",
        },
    }
