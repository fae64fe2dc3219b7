"""Checkpoint container: a numpy ``.npz`` holding a JSON header plus named tensors."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import torch

from dualview_diff.denoiser import Denoiser, DenoiserConfig
from dualview_diff.diffusion import NoiseSchedule
from dualview_diff.errors import CheckpointError

FORMAT = "dualview-diff/ckpt/v1"


def save_checkpoint(path, model: Denoiser, sched: NoiseSchedule, step: int, extra: dict | None = None) -> Path:
    path = Path(path)
    header = {
        "format": FORMAT,
        "config": model.config.to_dict(),
        "schedule": sched.to_dict(),
        "step": int(step),
        "dtype": str(next(model.parameters()).dtype).replace("torch.", ""),
        "extra": extra or {},
    }
    arrays = {f"param/{k}": v.detach().cpu().numpy() for k, v in model.state_dict().items()}
    arrays["header"] = np.array(json.dumps(header, sort_keys=True))
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "wb") as fh:
            np.savez(fh, **arrays)
    except OSError as exc:
        raise CheckpointError(f"cannot write checkpoint {path}: {exc}") from exc
    return path


def load_checkpoint(path) -> tuple[Denoiser, NoiseSchedule, dict]:
    path = Path(path)
    try:
        with np.load(path, allow_pickle=False) as data:
            header = json.loads(str(data["header"]))
            params = {k[len("param/"):]: data[k] for k in data.files if k.startswith("param/")}
    except (OSError, KeyError, ValueError) as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if header.get("format") != FORMAT:
        raise CheckpointError(f"{path}: unsupported checkpoint format {header.get('format')!r}, expected {FORMAT}")
    sched = NoiseSchedule.from_dict(header["schedule"])
    config = DenoiserConfig(**header["config"])
    model = Denoiser(config, sched.alpha_bar if config.sigma_data is not None else None)
    model = model.to(getattr(torch, header["dtype"]))
    model.load_state_dict({k: torch.from_numpy(v) for k, v in params.items()})
    model.eval()
    return model, sched, header
