"""Top-k accuracy and the per-task metric report."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .heads import TASKS, PredictionScores
from .tensor import Tensor

__all__ = ["MetricReport", "topk_accuracy", "evaluate_predictions"]


def _rank_classes(scores: np.ndarray) -> np.ndarray:
    """Class indices by descending score; ties broken by lower index."""
    return np.argsort(-scores, kind="stable")


def topk_accuracy(predictions, labels, k: int = 1) -> float:
    """Percentage of samples whose label is among the k top-scored classes.

    ``predictions`` holds one score vector per sample (array or Tensor);
    ``labels`` the true class indices, where None marks samples without a
    ground truth (skipped, e.g. actions whose pair was never observed).
    """
    predictions = list(predictions)
    labels = list(labels)
    if not predictions:
        raise ValueError("cannot score an empty prediction list")
    if len(predictions) != len(labels):
        raise ValueError(f"{len(predictions)} predictions vs {len(labels)} labels")
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    hits = 0
    total = 0
    for scores, label in zip(predictions, labels):
        if label is None:
            continue
        arr = scores.data if isinstance(scores, Tensor) else np.asarray(scores)
        total += 1
        if int(label) in _rank_classes(arr)[:k]:
            hits += 1
    if total == 0:
        raise ValueError("no scorable samples (all labels were None)")
    return 100.0 * hits / total


@dataclass
class MetricReport:
    """Per-task top-1/top-5 accuracies, in percent."""

    verb: tuple[float, float]
    noun: tuple[float, float]
    action: tuple[float, float]

    def __post_init__(self):
        for task in TASKS:
            top1, top5 = getattr(self, task)
            if not (0.0 <= top1 <= top5 <= 100.0):
                raise ValueError(f"{task}: need 0 <= top1 <= top5 <= 100, got {(top1, top5)}")

    def to_text_table(self, title: str = "Results") -> str:
        header = f"{title:<12} | Verb          | Noun          | Action"
        rule = "-" * len(header)
        cells = " | ".join(f"{getattr(self, task)[0]:5.2f} ({getattr(self, task)[1]:5.2f})"
                           for task in TASKS)
        return "\n".join([header, rule, f"{'top-1 (top-5)':<12} | {cells}"])

    def to_csv(self) -> str:
        lines = ["task,top1,top5"]
        for task in TASKS:
            top1, top5 = getattr(self, task)
            lines.append(f"{task},{top1:.9g},{top5:.9g}")
        return "\n".join(lines) + "\n"


def evaluate_predictions(predictions: list[PredictionScores],
                         labels: list[tuple[int, int, int | None]],
                         ks: tuple[int, int] = (1, 5)) -> MetricReport:
    """Score verb/noun/action predictions against labeled triples."""
    if len(predictions) != len(labels):
        raise ValueError(f"{len(predictions)} predictions vs {len(labels)} labels")
    per_task = {}
    for t_i, task in enumerate(TASKS):
        scores = [p.task(task) for p in predictions]
        task_labels = [lab[t_i] for lab in labels]
        k_lo, k_hi = ks
        k_hi = min(k_hi, predictions[0].class_counts[t_i])
        per_task[task] = (topk_accuracy(scores, task_labels, k_lo),
                          topk_accuracy(scores, task_labels, k_hi))
    return MetricReport(**per_task)
