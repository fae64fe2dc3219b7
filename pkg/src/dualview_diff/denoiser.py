"""Small convolutional encoder-decoder for eps prediction.

Residual blocks of two 3x3 convs with GroupNorm and SiLU, the timestep
embedding projected and added once per block, skip connections between mirrored
levels, and a zero-initialized output conv. No attention.

With ``sigma_data`` set, the raw network output F is preconditioned as
eps_hat = c_skip(t) x_t + c_out(t) F, where c_skip x_t is the exact posterior
mean of eps for N(0, sigma_data^2) data and c_out the matching residual std.
The objective is unchanged; the network target becomes unit scale at every t,
and x0 estimates stop amplifying output errors by sqrt((1 - abar) / abar).
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
import torch
from torch import nn
import torch.nn.functional as F

from dualview_diff.diffusion import NoiseSchedule, mse_at
from dualview_diff.errors import DataError


@dataclass(frozen=True)
class DenoiserConfig:
    in_channels: int = 3
    base_width: int = 32
    depth: int = 3
    time_embed_dim: int = 128
    sigma_data: float | None = None

    def __post_init__(self):
        if min(self.in_channels, self.base_width, self.time_embed_dim) < 1 or self.depth < 0:
            raise DataError("all widths must be >= 1 and depth >= 0")
        if self.sigma_data is not None and not self.sigma_data > 0:
            raise DataError("sigma_data must be positive")
        if self.time_embed_dim % 2:
            raise DataError("time_embed_dim must be even")

    def check_input(self, chw) -> None:
        c, h, w = (int(v) for v in chw)
        if c != self.in_channels:
            raise DataError(f"expected {self.in_channels} channels, got {c}")
        k = 2 ** self.depth
        if h % k or w % k:
            raise DataError(f"spatial size {h}x{w} not divisible by 2^depth = {k}")
        if h < 2 * k or w < 2 * k:
            # GroupNorm needs more than one value per group at the bottleneck
            raise DataError(f"spatial size {h}x{w} too small for depth {self.depth}")

    def to_dict(self) -> dict:
        return asdict(self)


def time_embedding(t, dim: int) -> np.ndarray:
    """[sin(t w_0..w_{k-1}), cos(t w_0..w_{k-1})] with w_k = 10000^(-k/half)."""
    if dim % 2:
        raise DataError("embedding dim must be even")
    half = dim // 2
    freqs = np.exp(-math.log(10000.0) * np.arange(half) / half)
    args = np.asarray(t, dtype=np.float64)[..., None] * freqs
    return np.concatenate([np.sin(args), np.cos(args)], axis=-1)


def _time_embedding_torch(t: torch.Tensor, dim: int, dtype) -> torch.Tensor:
    half = dim // 2
    freqs = torch.exp(-math.log(10000.0) * torch.arange(half, dtype=torch.float64) / half)
    args = t.to(torch.float64)[:, None] * freqs[None, :]
    return torch.cat([torch.sin(args), torch.cos(args)], dim=1).to(dtype)


def _groups(channels: int) -> int:
    for g in (8, 4, 2):
        if channels % g == 0 and channels // g >= 4:
            return g
    return 1


class Block(nn.Module):
    """Residual block: GN -> SiLU -> conv -> GN, + time, SiLU -> conv, + shortcut.

    The time projection is added after the second norm; added before it, a
    per-channel constant would be normalized away.
    """

    def __init__(self, c_in: int, c_out: int, t_dim: int):
        super().__init__()
        self.norm1 = nn.GroupNorm(_groups(c_in), c_in)
        self.conv1 = nn.Conv2d(c_in, c_out, 3, padding=1)
        self.time = nn.Linear(t_dim, c_out)
        self.norm2 = nn.GroupNorm(_groups(c_out), c_out)
        self.conv2 = nn.Conv2d(c_out, c_out, 3, padding=1)
        self.shortcut = nn.Conv2d(c_in, c_out, 1) if c_in != c_out else nn.Identity()

    def forward(self, x, temb):
        h = self.conv1(F.silu(self.norm1(x)))
        h = self.norm2(h) + self.time(F.silu(temb))[:, :, None, None]
        h = self.conv2(F.silu(h))
        return h + self.shortcut(x)


class Denoiser(nn.Module):
    def __init__(self, config: DenoiserConfig = DenoiserConfig(), alpha_bar=None):
        super().__init__()
        self.config = config
        if config.sigma_data is not None:
            if alpha_bar is None:
                raise DataError("a preconditioned denoiser needs the schedule's alpha_bar")
            self.register_buffer("alpha_bar", torch.as_tensor(np.asarray(alpha_bar, dtype=np.float64)))
        else:
            self.alpha_bar = None
        c, d, td = config.base_width, config.depth, config.time_embed_dim
        widths = [c * 2 ** i for i in range(d + 1)]
        self.time_mlp = nn.Sequential(nn.Linear(td, td), nn.SiLU(), nn.Linear(td, td))
        self.stem = nn.Conv2d(config.in_channels, c, 3, padding=1)
        self.down = nn.ModuleList()
        self.pool = nn.ModuleList()
        for i in range(d):
            self.down.append(Block(widths[i] if i else c, widths[i], td))
            self.pool.append(nn.Conv2d(widths[i], widths[i + 1], 3, stride=2, padding=1))
        self.mid = Block(widths[d], widths[d], td)
        self.up = nn.ModuleList()
        self.unpool = nn.ModuleList()
        for i in reversed(range(d)):
            self.unpool.append(nn.Conv2d(widths[i + 1], widths[i], 3, padding=1))
            self.up.append(Block(2 * widths[i], widths[i], td))
        self.head_norm = nn.GroupNorm(_groups(c), c)
        self.head = nn.Conv2d(c, config.in_channels, 3, padding=1)
        nn.init.zeros_(self.head.weight)
        nn.init.zeros_(self.head.bias)

    def forward(self, x: torch.Tensor, t) -> torch.Tensor:
        if x.ndim != 4:
            raise DataError(f"expected (N, C, H, W) input, got {tuple(x.shape)}")
        self.config.check_input(x.shape[1:])
        t = torch.as_tensor(t, dtype=torch.long)
        if t.ndim == 0:
            t = t.expand(x.shape[0])
        if t.min() < 0:
            raise DataError("timestep must be nonnegative")
        temb = self.time_mlp(_time_embedding_torch(t, self.config.time_embed_dim, x.dtype))
        h = self.stem(x)
        skips = []
        for block, pool in zip(self.down, self.pool):
            h = block(h, temb)
            skips.append(h)
            h = pool(h)
        h = self.mid(h, temb)
        for unpool, block in zip(self.unpool, self.up):
            h = unpool(F.interpolate(h, scale_factor=2.0, mode="nearest"))
            h = block(torch.cat([h, skips.pop()], dim=1), temb)
        out = self.head(F.silu(self.head_norm(h)))
        if self.alpha_bar is None:
            return out
        c_skip, c_out = self._precondition(t, x.dtype)
        return c_skip * x + c_out * out

    def _precondition(self, t: torch.Tensor, dtype) -> tuple[torch.Tensor, torch.Tensor]:
        if t.min() < 1 or t.max() > self.alpha_bar.numel():
            raise DataError(f"timestep outside 1..{self.alpha_bar.numel()}")
        ab = self.alpha_bar.to(torch.float64)[t - 1].view(-1, 1, 1, 1)
        var_data = self.config.sigma_data ** 2
        total = ab * var_data + (1.0 - ab)
        c_skip = torch.sqrt(1.0 - ab) / total
        c_out = torch.sqrt(ab * var_data / total)
        return c_skip.to(dtype), c_out.to(dtype)

    def predict(self, x_t, t):
        with torch.no_grad():
            return self(x_t, t)


def build_denoiser(config: DenoiserConfig = DenoiserConfig(), seed: int = 0, dtype=torch.float32,
                   sched: NoiseSchedule | None = None) -> Denoiser:
    """Construct a model with parameters drawn from a private seeded stream.

    ``sched`` is required when ``config.sigma_data`` is set.
    """
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(seed)
        model = Denoiser(config, None if sched is None else sched.alpha_bar)
    return model.to(dtype)


def param_grads(model: Denoiser, x0: torch.Tensor, t, eps: torch.Tensor, sched: NoiseSchedule) -> dict[str, torch.Tensor]:
    """Gradient of the eps-MSE at fixed (t, eps) for every named parameter."""
    model.zero_grad(set_to_none=True)
    t = torch.as_tensor(t, dtype=torch.long).expand(x0.shape[0])
    loss = mse_at(model, x0, t, eps, sched)
    names, params = zip(*model.named_parameters())
    grads = torch.autograd.grad(loss, params, allow_unused=True)
    return {n: (g if g is not None else torch.zeros_like(p)).detach() for n, p, g in zip(names, params, grads)}
