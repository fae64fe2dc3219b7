"""Training loop: AdamW with a per-epoch LambdaLR multiplier and the eps-MSE loss."""

from __future__ import annotations

import csv
import json
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import torch

from dualview_diff.checkpoint import save_checkpoint
from dualview_diff.denoiser import Denoiser
from dualview_diff.diffusion import NoiseSchedule, to_model_space, training_loss
from dualview_diff.errors import DataError


@dataclass
class TrainConfig:
    learning_rate: float = 1e-5
    batch_size: int = 16
    epochs: int = 100
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    weight_decay: float = 0.01
    adam_eps: float = 1e-8
    lr_lambda: dict = field(default_factory=lambda: {"kind": "constant"})
    seed: int = 0
    checkpoint_every: int | None = None

    def __post_init__(self):
        if not self.learning_rate >= 0:
            raise DataError("learning_rate must be >= 0")
        if not (0 <= self.adam_beta1 < 1 and 0 <= self.adam_beta2 < 1):
            raise DataError("Adam betas must lie in [0, 1)")
        if self.batch_size < 1 or self.epochs < 0:
            raise DataError("batch_size must be >= 1 and epochs >= 0")
        make_lr_lambda(self.lr_lambda)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {k: v for k, v in d.items() if k in cls.__dataclass_fields__}
        return cls(**known)


@dataclass
class TrainReport:
    epoch_losses: list[float]
    wall_time: float
    checkpoint: str | None
    seed: int
    steps: int

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2)


def adamw_step(params, grads, state, lr, beta1=0.9, beta2=0.999, weight_decay=0.01, eps_num=1e-8):
    """One decoupled-weight-decay Adam update, applied in place.

    ``params`` and ``grads`` map names to tensors; ``state`` holds ``step``
    and the first/second moments ``m`` and ``v`` (created on first use).
    """
    if set(params) != set(grads):
        raise DataError("params and grads have different keys")
    m = state.setdefault("m", {})
    v = state.setdefault("v", {})
    if m and set(m) != set(params):
        raise DataError("optimizer state does not match params")
    k = state.get("step", 0) + 1
    c1 = 1.0 - beta1 ** k
    c2 = 1.0 - beta2 ** k
    with torch.no_grad():
        for name, p in params.items():
            g = grads[name]
            if g.shape != p.shape:
                raise DataError(f"grad shape mismatch for {name}")
            if name not in m:
                m[name] = torch.zeros_like(p)
                v[name] = torch.zeros_like(p)
            p.mul_(1.0 - lr * weight_decay)
            m[name].mul_(beta1).add_(g, alpha=1.0 - beta1)
            v[name].mul_(beta2).addcmul_(g, g, value=1.0 - beta2)
            p.sub_(lr * (m[name] / c1) / (torch.sqrt(v[name] / c2) + eps_num))
    state["step"] = k
    return params, state


def adam_step(params, grads, state, lr, beta1=0.9, beta2=0.999, eps_num=1e-8):
    """Plain Adam, written out separately as a cross-check for ``adamw_step``."""
    state.setdefault("m", {})
    state.setdefault("v", {})
    k = state.get("step", 0) + 1
    with torch.no_grad():
        for name, p in params.items():
            g = grads[name]
            m = state["m"].get(name, torch.zeros_like(p)) * beta1 + (1 - beta1) * g
            v = state["v"].get(name, torch.zeros_like(p)) * beta2 + (1 - beta2) * g * g
            state["m"][name], state["v"][name] = m, v
            m_hat = m / (1 - beta1 ** k)
            v_hat = v / (1 - beta2 ** k)
            p.copy_(p - lr * m_hat / (torch.sqrt(v_hat) + eps_num))
    state["step"] = k
    return params, state


def make_lr_lambda(spec) -> Callable[[int], float]:
    """Build an epoch -> multiplier function.

    Accepted specs: ``{"kind": "constant"}``, ``{"kind": "linear", "total_epochs": E}``
    (1 - e/E, floored at 0) and ``{"kind": "step", "step_size": s, "gamma": g}``
    (g ** (e // s)). A bare string names the kind.
    """
    if spec is None:
        spec = {"kind": "constant"}
    if isinstance(spec, str):
        spec = {"kind": spec}
    kind = spec.get("kind", "constant")
    if kind == "constant":
        value = float(spec.get("value", 1.0))
        return lambda e: value
    if kind == "linear":
        total = float(spec["total_epochs"])
        return lambda e: max(0.0, 1.0 - e / total)
    if kind == "step":
        size, gamma = int(spec["step_size"]), float(spec["gamma"])
        return lambda e: gamma ** (e // size)
    raise DataError(f"unknown lr_lambda kind {kind!r}")


def lambda_lr(epoch: int, base_lr: float, lr_lambda=None) -> float:
    if epoch < 0:
        raise DataError("epoch must be >= 0")
    fn = lr_lambda if callable(lr_lambda) else make_lr_lambda(lr_lambda)
    mult = fn(epoch)
    if mult < 0:
        raise DataError(f"lr multiplier {mult} at epoch {epoch} is negative")
    return base_lr * mult


def _as_batch(dataset, dtype) -> torch.Tensor:
    data = np.stack([np.asarray(x, dtype=np.float64) for x in dataset]) if not isinstance(dataset, np.ndarray) else dataset
    if data.ndim != 4 or data.shape[1] != 3:
        raise DataError(f"expected a collection of (3, H, W) triples, got {data.shape}")
    return to_model_space(torch.as_tensor(data, dtype=dtype))


def train(dataset: Sequence, cfg: TrainConfig, model: Denoiser, sched: NoiseSchedule,
          checkpoint_path=None, log: Callable[[str], None] | None = None) -> TrainReport:
    if len(dataset) == 0:
        raise DataError("dataset is empty")
    dtype = next(model.parameters()).dtype
    x = _as_batch(dataset, dtype)
    model.config.check_input(x.shape[1:])
    n = x.shape[0]
    lr_fn = make_lr_lambda(cfg.lr_lambda)
    order_rng = np.random.default_rng(cfg.seed)
    gen = torch.Generator().manual_seed(cfg.seed)
    params = dict(model.named_parameters())
    state: dict = {}
    losses = []
    steps = 0
    started = time.perf_counter()
    model.train()
    for epoch in range(cfg.epochs):
        lr = lambda_lr(epoch, cfg.learning_rate, lr_fn)
        perm = torch.from_numpy(order_rng.permutation(n))
        total = 0.0
        for start in range(0, n, cfg.batch_size):
            batch = x[perm[start:start + cfg.batch_size]]
            loss = training_loss(model, batch, gen, sched)
            grads = torch.autograd.grad(loss, list(params.values()))
            adamw_step(params, dict(zip(params, grads)), state, lr,
                       cfg.adam_beta1, cfg.adam_beta2, cfg.weight_decay, cfg.adam_eps)
            total += loss.item() * batch.shape[0]
            steps += 1
        losses.append(total / n)
        if log is not None:
            log(f"epoch {epoch + 1}/{cfg.epochs} loss {losses[-1]:.5f} lr {lr:.3g}")
        if checkpoint_path is not None and cfg.checkpoint_every and (epoch + 1) % cfg.checkpoint_every == 0:
            save_checkpoint(checkpoint_path, model, sched, steps,
                            {"epoch": epoch + 1, "image_size": int(x.shape[-1])})
    model.eval()
    if checkpoint_path is not None:
        save_checkpoint(checkpoint_path, model, sched, steps,
                        {"epoch": cfg.epochs, "image_size": int(x.shape[-1]), "train_config": asdict(cfg)})
    return TrainReport(
        epoch_losses=losses,
        wall_time=time.perf_counter() - started,
        checkpoint=str(checkpoint_path) if checkpoint_path is not None else None,
        seed=cfg.seed,
        steps=steps,
    )


def write_loss_csv(report: TrainReport, path) -> None:
    with open(Path(path), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["epoch", "mean_loss"])
        for i, loss in enumerate(report.epoch_losses, start=1):
            w.writerow([i, repr(loss)])


def expected_steps(n: int, cfg: TrainConfig) -> int:
    return cfg.epochs * math.ceil(n / cfg.batch_size)
