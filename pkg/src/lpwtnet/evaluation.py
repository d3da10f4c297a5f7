"""Restoration metrics and the evaluation / zero-shot harness."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import torch

from .checkpoint import load_checkpoint
from .complexity import model_flops, param_count
from .degradation import TASK_NAMES, DegradationSpec
from .network import LPWTNet
from .scf import Dataset
from .training import degraded_batch, to_channel_last, to_nchw


def _pair(predicted, target):
    p = np.asarray(predicted, dtype=np.float64)
    t = np.asarray(target, dtype=np.float64)
    if p.shape != t.shape:
        raise ValueError(f"shape mismatch {p.shape} vs {t.shape}")
    return p, t


def nmse(predicted, target, per_sample: bool = False) -> float:
    """Residual energy over target energy, summed over everything (ratio of sums).

    With ``per_sample`` the ratio is taken per leading-axis sample and averaged.
    """
    p, t = _pair(predicted, target)
    if per_sample:
        axes = tuple(range(1, t.ndim))
        energy = np.sum(t**2, axis=axes)
        if np.any(energy == 0):
            raise ValueError("nmse undefined: a target sample has zero energy")
        return float(np.mean(np.sum((t - p) ** 2, axis=axes) / energy))
    energy = float(np.sum(t**2))
    if energy == 0:
        raise ValueError("nmse undefined: target has zero energy")
    return float(np.sum((t - p) ** 2) / energy)


def mse(predicted, target) -> float:
    p, t = _pair(predicted, target)
    return float(np.mean((t - p) ** 2))


@dataclass
class TaskMetrics:
    task: str
    nmse: float
    mse: float
    baseline_nmse: float
    baseline_mse: float
    samples: int
    zero_shot: bool = False


@dataclass
class MetricsReport:
    flops: int
    params: int
    trained_task: Optional[str] = None
    denormalized: bool = False
    per_sample_nmse: bool = False
    tasks: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    def table(self) -> str:
        head = f"{'task':<11}{'NMSE':>12}{'MSE':>12}{'base NMSE':>12}{'base MSE':>12}  zero-shot"
        lines = [head, "-" * len(head)]
        for t in self.tasks:
            lines.append(f"{t.task:<11}{t.nmse:>12.4e}{t.mse:>12.4e}{t.baseline_nmse:>12.4e}"
                         f"{t.baseline_mse:>12.4e}  {'yes' if t.zero_shot else 'no'}")
        lines.append(f"params {self.params:,}   FLOPs/sample {self.flops:,}")
        return "\n".join(lines)

    def task(self, name: str) -> TaskMetrics:
        for t in self.tasks:
            if t.task == name:
                return t
        raise KeyError(name)


@torch.no_grad()
def predict(model: LPWTNet, observed: np.ndarray, batch_size: int = 16) -> np.ndarray:
    """Runs ``model`` on channel-last samples (B, σ, σ, N)."""
    model.eval()
    out = np.empty_like(observed)
    for s in range(0, len(observed), batch_size):
        out[s:s + batch_size] = to_channel_last(model(to_nchw(observed[s:s + batch_size])))
    return out


def evaluate(model, dataset: Dataset, specs: Sequence[DegradationSpec], zero_shot: bool = False,
             trained_task: Optional[int] = None, denormalized: bool = False,
             per_sample: bool = False, batch_size: int = 16) -> MetricsReport:
    """NMSE/MSE of ``model`` and of the degraded input itself on the test split.

    ``model`` is an :class:`LPWTNet` or a checkpoint path. In ``zero_shot``
    mode the training task (from the argument or the checkpoint) is skipped.
    """
    if not isinstance(model, LPWTNet):
        model, meta, _ = load_checkpoint(model)
        if trained_task is None and meta.get("train_config"):
            trained_task = meta["train_config"]["task"]["task"]
    if zero_shot and trained_task is None:
        raise ValueError("zero-shot evaluation needs the training task")
    m = dataset.manifest
    model.config.check_input((1, m.n_channels, m.sigma, m.sigma))
    ids = np.asarray(m.test_indices, dtype=np.int64)
    if ids.size == 0:
        raise ValueError("dataset has no test samples")
    clean = dataset.normalized(ids)
    lo, hi = dataset.stats

    def view(x):
        return x * (hi - lo) + lo if denormalized else x

    report = MetricsReport(flops=model_flops(model.config, m.sigma, m.sigma), params=param_count(model),
                           trained_task=TASK_NAMES[trained_task] if trained_task is not None else None,
                           denormalized=denormalized, per_sample_nmse=per_sample)
    for spec in specs:
        if zero_shot and spec.task == trained_task:
            continue
        observed = degraded_batch(clean, ids, spec)
        restored = predict(model, observed, batch_size)
        target = view(clean)
        report.tasks.append(TaskMetrics(
            task=spec.name, nmse=nmse(view(restored), target, per_sample), mse=mse(view(restored), target),
            baseline_nmse=nmse(view(observed), target, per_sample), baseline_mse=mse(view(observed), target),
            samples=int(ids.size), zero_shot=zero_shot))
    return report


def write_report(report: MetricsReport, out_dir) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    tmp = out / "metrics.json.partial"
    tmp.write_text(report.to_json(), encoding="utf-8")
    tmp.replace(out / "metrics.json")
    (out / "metrics.txt").write_text(report.table() + "\n", encoding="utf-8")
    return out / "metrics.json"
