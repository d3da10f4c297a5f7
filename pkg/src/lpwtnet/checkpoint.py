"""Checkpoint files.

A checkpoint is a directory::

    checkpoint.json   model config, parameter names/shapes in blob order,
                      iteration, training config, normalization stats
    params.bin        little-endian float32 parameters, concatenated in order
    optimizer.bin     optional Adam moments (exp_avg then exp_avg_sq per parameter)
"""
from __future__ import annotations

import json
import os
import shutil
from pathlib import Path
from typing import Optional

import numpy as np
import torch

from .network import LPWTNet, ModelConfig

BLOB_DTYPE = np.dtype("<f4")


def _flatten(tensors) -> bytes:
    parts = [t.detach().cpu().to(torch.float32).numpy().astype(BLOB_DTYPE).ravel() for t in tensors]
    return (np.concatenate(parts) if parts else np.empty(0, BLOB_DTYPE)).tobytes()


def _unflatten(blob: bytes, shapes) -> list:
    flat = np.frombuffer(blob, dtype=BLOB_DTYPE)
    total = sum(int(np.prod(s)) for s in shapes)
    if flat.size != total:
        raise ValueError(f"blob holds {flat.size} values, layout expects {total}")
    out, pos = [], 0
    for shape in shapes:
        n = int(np.prod(shape))
        out.append(torch.from_numpy(flat[pos:pos + n].copy()).reshape(shape))
        pos += n
    return out


def save_checkpoint(path, model: LPWTNet, iteration: int = 0,
                    optimizer: Optional[torch.optim.Optimizer] = None,
                    train_config: Optional[dict] = None,
                    normalization: Optional[tuple] = None, extra: Optional[dict] = None) -> Path:
    path = Path(path)
    tmp = path.with_name(path.name + ".partial")
    if tmp.exists():
        shutil.rmtree(tmp)
    tmp.mkdir(parents=True)

    named = list(model.named_parameters())
    meta = {
        "format": "lpwtnet-checkpoint",
        "version": 1,
        "model_config": model.config.to_dict(),
        "parameters": [{"name": n, "shape": list(p.shape)} for n, p in named],
        "iteration": int(iteration),
        "train_config": train_config,
        "normalization": list(normalization) if normalization is not None else None,
        "extra": extra or {},
    }
    (tmp / "params.bin").write_bytes(_flatten(p for _, p in named))

    if optimizer is not None:
        moments, steps = [], []
        for _, p in named:
            state = optimizer.state.get(p, {})
            if "exp_avg" in state:
                moments += [state["exp_avg"], state["exp_avg_sq"]]
                steps.append(float(state["step"]))
            else:
                moments += [torch.zeros_like(p), torch.zeros_like(p)]
                steps.append(0.0)
        meta["optimizer"] = {"type": "adam", "steps": steps,
                             "hyperparameters": {k: v for k, v in optimizer.defaults.items()
                                                 if isinstance(v, (int, float, bool, list, tuple))}}
        (tmp / "optimizer.bin").write_bytes(_flatten(moments))

    (tmp / "checkpoint.json").write_text(json.dumps(meta, indent=2) + "\n", encoding="utf-8")
    if path.exists():
        shutil.rmtree(path)
    os.replace(tmp, path)
    return path


def read_metadata(path) -> dict:
    return json.loads((Path(path) / "checkpoint.json").read_text(encoding="utf-8"))


def load_checkpoint(path, optimizer_factory=None):
    """Returns ``(model, metadata, optimizer_or_None)``.

    ``optimizer_factory(params)`` builds an Adam optimizer whose state is then
    restored from ``optimizer.bin`` when present.
    """
    path = Path(path)
    meta = read_metadata(path)
    config = ModelConfig(**meta["model_config"])
    model = LPWTNet(config)
    named = list(model.named_parameters())
    layout = [(e["name"], tuple(e["shape"])) for e in meta["parameters"]]
    if [(n, tuple(p.shape)) for n, p in named] != layout:
        raise ValueError("checkpoint parameter layout does not match the model config")
    values = _unflatten((path / "params.bin").read_bytes(), [s for _, s in layout])
    with torch.no_grad():
        for (_, p), v in zip(named, values):
            p.copy_(v)

    optimizer = None
    if optimizer_factory is not None:
        optimizer = optimizer_factory(model.parameters())
        if "optimizer" in meta and (path / "optimizer.bin").exists():
            shapes = [s for _, s in layout for _ in (0, 1)]
            moments = _unflatten((path / "optimizer.bin").read_bytes(), shapes)
            for k, ((_, p), step) in enumerate(zip(named, meta["optimizer"]["steps"])):
                if step > 0:
                    optimizer.state[p] = {"step": torch.tensor(step), "exp_avg": moments[2 * k].clone(),
                                          "exp_avg_sq": moments[2 * k + 1].clone()}
    return model, meta, optimizer
