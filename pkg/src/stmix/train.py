"""SGD-with-momentum training loop with a warmup + cosine schedule.

The optimizer family follows the full-scale recipe (momentum 0.9, linear
warmup into a cosine decay); the paper-scale learning rates and batch
sizes are kept as presets, with smaller toy settings used for the
desk-scale runs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .heads import PredictionScores, multitask_loss
from .tensor import Tensor, add, mul

__all__ = ["TrainSpec", "TrainResult", "TrainingDiverged", "ClipDataset",
           "cosine_warmup_lr", "train_toy"]


@dataclass
class ClipDataset:
    """Plain clip/label container; any object with these fields works."""

    videos: list
    labels: list

    def __post_init__(self):
        if len(self.videos) != len(self.labels):
            raise ValueError(f"{len(self.videos)} clips vs {len(self.labels)} labels")

    def __len__(self) -> int:
        return len(self.videos)


class TrainingDiverged(RuntimeError):
    def __init__(self, epoch: int):
        super().__init__(f"loss became non-finite at epoch {epoch}")
        self.epoch = epoch


@dataclass(frozen=True)
class TrainSpec:
    base_lr: float
    batch_size: int
    epochs: int
    momentum: float = 0.9
    warmup_steps: int | None = None   # default: ~5% of total steps

    def __post_init__(self):
        if self.base_lr < 0:
            raise ValueError(f"base_lr must be >= 0, got {self.base_lr}")
        if self.batch_size < 1 or self.epochs < 1:
            raise ValueError("batch_size and epochs must be >= 1")

    @classmethod
    def gsf_paper(cls) -> "TrainSpec":
        """Full-scale preset: lr 0.01 at batch 32, 60 epochs."""
        return cls(base_lr=0.01, batch_size=32, epochs=60)

    @classmethod
    def xvit_paper(cls) -> "TrainSpec":
        """Full-scale preset: lr 0.05 at batch 128, 50 epochs."""
        return cls(base_lr=0.05, batch_size=128, epochs=50)

    @classmethod
    def gsf_toy(cls, epochs: int = 25) -> "TrainSpec":
        return cls(base_lr=0.3, batch_size=18, epochs=epochs)

    @classmethod
    def xvit_toy(cls, epochs: int = 25) -> "TrainSpec":
        return cls(base_lr=0.15, batch_size=18, epochs=epochs)

    def resolve_warmup(self, total_steps: int) -> int:
        warmup = self.warmup_steps
        if warmup is None:
            warmup = max(1, round(0.05 * total_steps))
        if not 0 < warmup < total_steps:
            raise ValueError(f"warmup length {warmup} must lie in (0, {total_steps})")
        return warmup


def cosine_warmup_lr(step: int, total_steps: int, warmup_steps: int, base_lr: float) -> float:
    """Linear ramp to base_lr over the warmup, then cosine decay to 0.

    The trace is non-decreasing through the warmup, equals base_lr exactly
    at its end, and is non-increasing afterwards.
    """
    if step < warmup_steps:
        return base_lr * (step + 1) / warmup_steps
    span = total_steps - warmup_steps
    progress = (step - warmup_steps) / span
    return base_lr * 0.5 * (1.0 + math.cos(math.pi * progress))


@dataclass
class TrainResult:
    params: dict[str, Tensor]
    history: list[dict] = field(default_factory=list)
    lr_trace: list[float] = field(default_factory=list)


def _batch_loss(model, params: dict[str, Tensor], clips, labels) -> tuple[Tensor, int]:
    """Mean multi-task loss over a batch; also counts top-1 action hits."""
    total: Tensor | None = None
    hits = {"verb": 0, "noun": 0, "action": 0}
    for clip, label in zip(clips, labels):
        scores: PredictionScores = model.forward(Tensor(clip), params)
        loss = multitask_loss(scores, label)
        total = loss if total is None else add(total, loss)
        for task, truth in zip(("verb", "noun", "action"), label):
            if int(np.argmax(scores.task(task).data)) == truth:
                hits[task] += 1
    return mul(total, 1.0 / len(clips)), hits


def train_toy(model, data, spec: TrainSpec, seed: int) -> TrainResult:
    """Deterministic toy training run; aborts if the loss goes non-finite.

    Per-epoch history records the mean loss, the final step's learning
    rate, and training top-1 per task accumulated from the batch forward
    passes.
    """
    if len(data) == 0:
        raise ValueError("training set is empty")
    rng = np.random.default_rng(seed)
    params = model.init_params(seed)
    velocity = {name: np.zeros_like(p.data) for name, p in params.items()}
    n = len(data)
    steps_per_epoch = math.ceil(n / spec.batch_size)
    total_steps = steps_per_epoch * spec.epochs
    warmup = spec.resolve_warmup(total_steps)

    result = TrainResult(params=params)
    step = 0
    for epoch in range(spec.epochs):
        order = rng.permutation(n)
        epoch_loss = 0.0
        hits = {"verb": 0, "noun": 0, "action": 0}
        for start in range(0, n, spec.batch_size):
            batch = order[start:start + spec.batch_size]
            clips = [data.videos[i] for i in batch]
            labels = [data.labels[i] for i in batch]
            for p in params.values():
                p.grad = None
            loss, batch_hits = _batch_loss(model, params, clips, labels)
            value = loss.item()
            if not math.isfinite(value):
                raise TrainingDiverged(epoch)
            loss.backward()
            lr = cosine_warmup_lr(step, total_steps, warmup, spec.base_lr)
            result.lr_trace.append(lr)
            new_params = {}
            for name, p in params.items():
                g = p.grad if p.grad is not None else np.zeros_like(p.data)
                velocity[name] = spec.momentum * velocity[name] + g
                new_params[name] = Tensor(p.data - lr * velocity[name], requires_grad=True)
            params = new_params
            epoch_loss += value * len(batch)
            for task in hits:
                hits[task] += batch_hits[task]
            step += 1
        result.history.append({
            "epoch": epoch,
            "loss": epoch_loss / n,
            "lr": result.lr_trace[-1],
            "verb_top1": 100.0 * hits["verb"] / n,
            "noun_top1": 100.0 * hits["noun"] / n,
            "action_top1": 100.0 * hits["action"] / n,
        })
    result.params = params
    return result
