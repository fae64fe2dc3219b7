"""DDPM core: linear schedule, forward noising, eps-prediction loss, ancestral sampling.

Timesteps are 1-based (``1 <= t <= T``) everywhere in the public API.
Triples live in [0, 1]; the model works on [-1, 1] via :func:`to_model_space`.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from dualview_diff.errors import DataError


@dataclass(frozen=True, eq=False)
class NoiseSchedule:
    beta: np.ndarray
    alpha: np.ndarray
    alpha_bar: np.ndarray

    @property
    def T(self) -> int:
        return len(self.beta)

    def at(self, t: int) -> tuple[float, float, float]:
        """(beta_t, alpha_t, alpha_bar_t) for a 1-based step."""
        check_timestep(t, self.T)
        i = int(t) - 1
        return float(self.beta[i]), float(self.alpha[i]), float(self.alpha_bar[i])

    def to_dict(self) -> dict:
        return {"kind": "linear", "T": self.T, "beta_start": float(self.beta[0]), "beta_end": float(self.beta[-1])}

    @classmethod
    def from_dict(cls, d: dict) -> "NoiseSchedule":
        return linear_schedule(int(d["T"]), float(d["beta_start"]), float(d["beta_end"]))


def linear_schedule(T: int = 1000, beta_start: float = 1e-4, beta_end: float = 0.02) -> NoiseSchedule:
    if T < 1:
        raise DataError("T must be >= 1")
    if not (0.0 < beta_start <= beta_end < 1.0):
        raise DataError("need 0 < beta_start <= beta_end < 1")
    if T == 1:
        beta = np.array([beta_start], dtype=np.float64)
    else:
        beta = np.linspace(beta_start, beta_end, T, dtype=np.float64)
    alpha = 1.0 - beta
    return NoiseSchedule(beta=beta, alpha=alpha, alpha_bar=np.cumprod(alpha))


def scaled_linear_schedule(T: int) -> NoiseSchedule:
    """Linear schedule with the default 1000-step beta range stretched by 1000 / T.

    Keeps the terminal alpha_bar close to pure noise for short desk-scale chains.
    """
    scale = 1000.0 / T
    return linear_schedule(T, 1e-4 * scale, min(0.02 * scale, 0.999))


def check_timestep(t, T: int) -> None:
    tt = np.asarray(t.cpu() if isinstance(t, torch.Tensor) else t)
    if tt.size == 0 or tt.min() < 1 or tt.max() > T:
        raise DataError(f"timestep out of range [1, {T}]")


def to_model_space(x):
    return x * 2.0 - 1.0


def from_model_space(x):
    return (x + 1.0) / 2.0


def forward_noise(x0, t, eps, sched: NoiseSchedule):
    """sqrt(abar_t) * x0 + sqrt(1 - abar_t) * eps.

    ``t`` is an int, or a 1-D tensor/array with one step per leading batch element.
    """
    if tuple(x0.shape) != tuple(eps.shape):
        raise DataError(f"eps shape {tuple(eps.shape)} != x0 shape {tuple(x0.shape)}")
    check_timestep(t, sched.T)
    if np.ndim(t.cpu() if isinstance(t, torch.Tensor) else t) == 0:
        ab = float(sched.alpha_bar[int(t) - 1])
        return np.sqrt(ab) * x0 + np.sqrt(1.0 - ab) * eps
    ab = _gather(sched.alpha_bar, t, x0)
    sqrt = torch.sqrt if isinstance(x0, torch.Tensor) else np.sqrt
    return sqrt(ab) * x0 + sqrt(1.0 - ab) * eps


def _gather(values: np.ndarray, t, like):
    idx = np.asarray(t.cpu() if isinstance(t, torch.Tensor) else t, dtype=np.int64) - 1
    picked = values[idx].reshape((-1,) + (1,) * (like.ndim - 1))
    if isinstance(like, torch.Tensor):
        return torch.as_tensor(picked, dtype=like.dtype, device=like.device)
    return picked


def mse_at(model, x0: torch.Tensor, t: torch.Tensor, eps: torch.Tensor, sched: NoiseSchedule) -> torch.Tensor:
    x_t = forward_noise(x0, t, eps, sched)
    return torch.mean((model(x_t, t) - eps) ** 2)


def training_loss(model, x0: torch.Tensor, generator: torch.Generator, sched: NoiseSchedule) -> torch.Tensor:
    """Draw t ~ U{1..T} per batch element and eps ~ N(0, I); return the eps MSE."""
    n = x0.shape[0]
    t = torch.randint(1, sched.T + 1, (n,), generator=generator)
    eps = torch.randn(x0.shape, generator=generator, dtype=x0.dtype)
    return mse_at(model, x0, t, eps, sched)


@torch.no_grad()
def reverse_step(model, x_t: torch.Tensor, t: int, sched: NoiseSchedule, z: torch.Tensor | None,
                 clip_denoised: bool = False) -> torch.Tensor:
    """One ancestral step t -> t-1.

    With ``clip_denoised`` the implied x0 estimate is clamped to [-1, 1] and the
    mean is taken from the Gaussian posterior q(x_{t-1} | x_t, x0). Without
    clamping both forms give the same mean.
    """
    beta, alpha, alpha_bar = sched.at(t)
    steps = torch.full((x_t.shape[0],), t, dtype=torch.long)
    eps_hat = model(x_t, steps)
    if clip_denoised:
        prev_bar = sched.alpha_bar[t - 2] if t > 1 else 1.0
        x0_hat = ((x_t - np.sqrt(1.0 - alpha_bar) * eps_hat) / np.sqrt(alpha_bar)).clamp(-1.0, 1.0)
        mean = (np.sqrt(prev_bar) * beta * x0_hat + np.sqrt(alpha) * (1.0 - prev_bar) * x_t) / (1.0 - alpha_bar)
    else:
        mean = (x_t - (beta / np.sqrt(1.0 - alpha_bar)) * eps_hat) / np.sqrt(alpha)
    if t == 1 or z is None:
        return mean
    return mean + np.sqrt(beta) * z


def noise_generators(seed: int, n: int) -> list[torch.Generator]:
    """One independent stream per batch element, derived from ``seed`` and the index."""
    seq = np.random.SeedSequence(seed)
    return [torch.Generator().manual_seed(int(s.generate_state(1, np.uint64)[0] >> 1)) for s in seq.spawn(n)]


def _draw(gens: list[torch.Generator], shape, dtype) -> torch.Tensor:
    return torch.stack([torch.randn(shape, generator=g, dtype=dtype) for g in gens])


@torch.no_grad()
def p_sample_loop(model, x_T: torch.Tensor, sched: NoiseSchedule, gens: list[torch.Generator] | None,
                  clip_denoised: bool = False) -> torch.Tensor:
    """Ancestral sampling from ``x_T`` down to ``x_0`` in model space (sigma_t^2 = beta_t)."""
    x = x_T
    for t in range(sched.T, 0, -1):
        z = _draw(gens, x.shape[1:], x.dtype) if (gens is not None and t > 1) else None
        x = reverse_step(model, x, t, sched, z, clip_denoised)
    return x


@torch.no_grad()
def sample(model, shape, sched: NoiseSchedule, seed: int, batch_size: int | None = None,
           dtype=torch.float32, clip_denoised: bool = False) -> np.ndarray:
    """Generate ``shape[0]`` triples of size ``shape[1:]``, mapped back to the [0, 1] scale.

    Values are not clipped; that is the post-processing step's job. Sample i
    depends only on (seed, i), so batching does not change the noise drawn.
    """
    n = shape[0]
    if tuple(shape[1:2]) != (3,):
        raise DataError(f"expected (n, 3, H, W) sample shape, got {tuple(shape)}")
    cfg = getattr(model, "config", None)
    if cfg is not None:
        cfg.check_input(shape[1:])
    gens = noise_generators(seed, n)
    batch_size = batch_size or n
    out = []
    for start in range(0, n, batch_size):
        g = gens[start:start + batch_size]
        x_T = _draw(g, shape[1:], dtype)
        out.append(p_sample_loop(model, x_T, sched, g, clip_denoised))
    return from_model_space(torch.cat(out).double().numpy())


def dump_schedule_csv(sched: NoiseSchedule, path) -> None:
    with open(Path(path), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "beta", "alpha", "alpha_bar"])
        for i in range(sched.T):
            w.writerow([i + 1, repr(float(sched.beta[i])), repr(float(sched.alpha[i])), repr(float(sched.alpha_bar[i]))])
