"""Optimization loop: Adam, linear warm-up then step decay, per-element MSE.

Degraded inputs are regenerated from ``(task spec, sample index)`` so a given
sample always sees the same mask, independent of epoch.
"""
from __future__ import annotations

import csv
import logging
import math
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Callable, Iterator, Optional

import numpy as np
import torch

from .checkpoint import load_checkpoint, save_checkpoint
from .degradation import DegradationSpec, make_mask
from .network import LPWTNet, ModelConfig, build_model
from .scf import Dataset

log = logging.getLogger(__name__)

ADAM_DEFAULTS = {"betas": (0.9, 0.999), "eps": 1e-8, "weight_decay": 0.0}


@dataclass(frozen=True)
class TrainConfig:
    iterations: int = 150_000
    batch_size: int = 64
    base_lr: float = 1e-3
    warmup_iterations: int = 5_000
    warmup_start_lr: float = 2e-5
    decay_factor: float = 0.5
    decay_interval: int = 50_000
    repeat: int = 10
    seed: int = 0
    task: DegradationSpec = field(default_factory=lambda: DegradationSpec(0))
    log_every: int = 1
    checkpoint_every: int = 0

    def __post_init__(self):
        for name in ("iterations", "batch_size", "decay_interval", "repeat", "log_every"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.base_lr <= 0 or self.warmup_start_lr <= 0 or not 0 < self.decay_factor <= 1:
            raise ValueError("learning rates must be positive and decay_factor in (0, 1]")
        if not 0 <= self.warmup_iterations <= self.iterations:
            raise ValueError("warm-up must fit within the iteration budget")
        if self.checkpoint_every < 0:
            raise ValueError("checkpoint_every must be >= 0")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["task"] = self.task.to_dict()
        d["adam"] = {"betas": list(ADAM_DEFAULTS["betas"]), "eps": ADAM_DEFAULTS["eps"]}
        return d

    @classmethod
    def scaled(cls, iterations: int, **overrides) -> "TrainConfig":
        """Shortened run keeping the full schedule's proportions: warm-up over the
        first 1/30 of the iterations, halving every third of the run."""
        base = cls()
        ratio = iterations / base.iterations
        kw = dict(iterations=iterations,
                  warmup_iterations=max(1, round(base.warmup_iterations * ratio)),
                  decay_interval=max(1, round(base.decay_interval * ratio)))
        kw.update(overrides)
        return cls(**kw)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = {k: v for k, v in d.items() if k != "adam"}
        if "task" in d:
            d["task"] = DegradationSpec.from_dict(d["task"])
        return cls(**d)


def lr_at(iteration: int, config: TrainConfig = TrainConfig()) -> float:
    if iteration < 0:
        raise ValueError("iteration must be >= 0")
    if iteration < config.warmup_iterations:
        frac = iteration / config.warmup_iterations
        return config.warmup_start_lr + frac * (config.base_lr - config.warmup_start_lr)
    return config.base_lr * config.decay_factor ** (iteration // config.decay_interval)


def mse_loss(predicted: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    if predicted.shape != target.shape:
        raise ValueError(f"shape mismatch {tuple(predicted.shape)} vs {tuple(target.shape)}")
    return torch.mean((predicted - target) ** 2)


def make_optimizer(params, lr: float = 1e-3) -> torch.optim.Adam:
    return torch.optim.Adam(params, lr=lr, **ADAM_DEFAULTS)


def batch_indices(n_samples: int, batch_size: int, seed: int, repeat: int = 10,
                  start: int = 0) -> Iterator[np.ndarray]:
    """Endless stream of index batches over a ``repeat``-fold cyclic view of
    ``n_samples`` items. Each pass over the view is a fresh permutation drawn
    from ``(seed, pass)``; batch ``start`` onwards is yielded."""
    if n_samples <= 0:
        raise ValueError("empty training set")
    view = n_samples * repeat
    pos = start * batch_size
    perm_pass, perm = -1, None
    while True:
        out = np.empty(batch_size, dtype=np.int64)
        for j in range(batch_size):
            p, offset = divmod(pos + j, view)
            if p != perm_pass:
                perm_pass = p
                perm = np.random.default_rng([seed, p]).permutation(view)
            out[j] = perm[offset] % n_samples
        pos += batch_size
        yield out


def degraded_batch(clean: np.ndarray, sample_ids, spec: DegradationSpec) -> np.ndarray:
    """Masks ``clean`` (B, σ, σ, N) with each sample's deterministic mask."""
    out = np.empty_like(clean)
    for b, idx in enumerate(sample_ids):
        out[b] = clean[b] * make_mask(spec.for_sample(int(idx)), clean.shape[1:]).astype(clean.dtype)
    return out


def to_nchw(x: np.ndarray) -> torch.Tensor:
    return torch.from_numpy(np.ascontiguousarray(np.moveaxis(x, -1, -3)))


def to_channel_last(x: torch.Tensor) -> np.ndarray:
    return np.moveaxis(x.detach().cpu().numpy(), -3, -1)


@dataclass
class LossRecord:
    iteration: int
    lr: float
    loss: float


class Trainer:
    """Holds model, optimizer and position in the batch stream.

    ``dataset`` is a :class:`Dataset`; training draws from its train split.
    """

    def __init__(self, dataset: Dataset, model_config: ModelConfig = ModelConfig(),
                 train_config: TrainConfig = TrainConfig(), model: Optional[LPWTNet] = None,
                 optimizer: Optional[torch.optim.Optimizer] = None, iteration: int = 0):
        self.dataset = dataset
        self.train_config = train_config
        self.model = model if model is not None else build_model(model_config, seed=train_config.seed)
        self.model_config = self.model.config
        self.model_config.check_input((1, dataset.manifest.n_channels,
                                       dataset.manifest.sigma, dataset.manifest.sigma))
        self.optimizer = optimizer if optimizer is not None else make_optimizer(self.model.parameters())
        self.iteration = iteration
        self.train_ids = np.asarray(dataset.manifest.train_indices, dtype=np.int64)
        self._stream = batch_indices(len(self.train_ids), train_config.batch_size, train_config.seed,
                                     train_config.repeat, start=iteration)
        self.history: list[LossRecord] = []

    def next_batch(self):
        ids = self.train_ids[next(self._stream)]
        clean = self.dataset.normalized(ids)
        observed = degraded_batch(clean, ids, self.train_config.task)
        return to_nchw(observed), to_nchw(clean)

    def step(self) -> LossRecord:
        lr = lr_at(self.iteration, self.train_config)
        for group in self.optimizer.param_groups:
            group["lr"] = lr
        observed, clean = self.next_batch()
        self.model.train()
        self.optimizer.zero_grad(set_to_none=False)
        loss = mse_loss(self.model(observed), clean)
        value = float(loss.detach())
        if not math.isfinite(value):
            raise FloatingPointError(f"non-finite loss {value} at iteration {self.iteration} (lr {lr:.3g})")
        loss.backward()
        self.optimizer.step()
        self.iteration += 1
        record = LossRecord(self.iteration, lr, value)
        self.history.append(record)
        return record

    def run(self, out_dir=None, callback: Optional[Callable[[LossRecord], None]] = None) -> list[LossRecord]:
        cfg = self.train_config
        t0 = time.perf_counter()
        while self.iteration < cfg.iterations:
            rec = self.step()
            if callback is not None:
                callback(rec)
            if rec.iteration % max(1, cfg.iterations // 20) == 0:
                log.info("iter %d  lr %.3g  loss %.4g  (%.1fs)", rec.iteration, rec.lr, rec.loss,
                         time.perf_counter() - t0)
            if out_dir is not None and cfg.checkpoint_every and rec.iteration % cfg.checkpoint_every == 0:
                self.save(Path(out_dir) / "checkpoint")
        if out_dir is not None:
            self.save(Path(out_dir) / "checkpoint")
            write_loss_trace(Path(out_dir) / "loss.csv", self.history, cfg.log_every)
        return self.history

    def save(self, path) -> Path:
        m = self.dataset.manifest
        return save_checkpoint(path, self.model, self.iteration, self.optimizer, self.train_config.to_dict(),
                               (m.norm_min, m.norm_max))

    @classmethod
    def resume(cls, path, dataset: Dataset, train_config: Optional[TrainConfig] = None) -> "Trainer":
        model, meta, optimizer = load_checkpoint(path, optimizer_factory=make_optimizer)
        if train_config is None:
            train_config = TrainConfig.from_dict(meta["train_config"])
        return cls(dataset, model.config, train_config, model=model, optimizer=optimizer,
                   iteration=meta["iteration"])


def write_loss_trace(path, history, every: int = 1) -> Path:
    path = Path(path)
    tmp = path.with_name(path.name + ".partial")
    with open(tmp, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iteration", "lr", "loss"])
        for rec in history:
            if rec.iteration % every == 0 or rec.iteration == history[-1].iteration:
                writer.writerow([rec.iteration, f"{rec.lr:.9g}", f"{rec.loss:.9g}"])
    tmp.replace(path)
    return path


def read_loss_trace(path) -> list[LossRecord]:
    with open(path, newline="", encoding="utf-8") as fh:
        return [LossRecord(int(r["iteration"]), float(r["lr"]), float(r["loss"])) for r in csv.DictReader(fh)]


def train(dataset: Dataset, model_config: ModelConfig = ModelConfig(),
          train_config: TrainConfig = TrainConfig(), out_dir=None) -> Trainer:
    trainer = Trainer(dataset, model_config, train_config)
    trainer.run(out_dir)
    return trainer


def with_task(config: TrainConfig, task: DegradationSpec) -> TrainConfig:
    return replace(config, task=task)
