"""Verb/noun/action heads, the action vocabulary, and score ensembling.

A segment is labeled with a verb and a noun; the observed (verb, noun)
pairs form the action vocabulary, id-ordered by first appearance in the
annotation list.  Models emit one logit vector per task; ensembling
averages softmax-normalized scores so that members with different logit
scales mix fairly.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .tensor import Tensor, add, cross_entropy_logits, matmul, reshape

__all__ = [
    "ActionVocab",
    "PredictionScores",
    "build_action_vocab",
    "compose_action",
    "decompose_action",
    "init_head_params",
    "multitask_heads",
    "multitask_loss",
    "ensemble_average",
    "read_annotations",
    "write_score_file",
    "read_score_file",
]

TASKS = ("verb", "noun", "action")


# ---------------------------------------------------------------------------
# Action vocabulary
# ---------------------------------------------------------------------------

@dataclass
class ActionVocab:
    """Bijection between observed (verb, noun) pairs and action ids."""

    verbs: int
    nouns: int
    pairs: list[tuple[int, int]]
    pair_to_action: dict[tuple[int, int], int] = field(default_factory=dict)

    def __post_init__(self):
        if not self.pair_to_action:
            self.pair_to_action = {p: i for i, p in enumerate(self.pairs)}

    @property
    def actions(self) -> int:
        return len(self.pairs)

    @property
    def class_counts(self) -> tuple[int, int, int]:
        return (self.verbs, self.nouns, self.actions)


def build_action_vocab(annotations, verbs: int, nouns: int) -> ActionVocab:
    """Deduplicated (verb, noun) pairs in first-seen order.

    Ids are assigned 0.. in order of first appearance, so the mapping is a
    deterministic function of the annotation list.
    """
    annotations = list(annotations)
    if not annotations:
        raise ValueError("cannot build an action vocabulary from an empty annotation list")
    pairs: list[tuple[int, int]] = []
    seen: set[tuple[int, int]] = set()
    for row, (verb, noun) in enumerate(annotations, start=1):
        if not 0 <= verb < verbs:
            raise ValueError(f"annotation row {row}: verb id {verb} out of range [0, {verbs})")
        if not 0 <= noun < nouns:
            raise ValueError(f"annotation row {row}: noun id {noun} out of range [0, {nouns})")
        pair = (int(verb), int(noun))
        if pair not in seen:
            seen.add(pair)
            pairs.append(pair)
    return ActionVocab(verbs=verbs, nouns=nouns, pairs=pairs)


def compose_action(verb: int, noun: int, vocab: ActionVocab) -> int | None:
    """Action id of a (verb, noun) pair, or None for pairs never observed."""
    if not 0 <= verb < vocab.verbs:
        raise ValueError(f"verb id {verb} out of range [0, {vocab.verbs})")
    if not 0 <= noun < vocab.nouns:
        raise ValueError(f"noun id {noun} out of range [0, {vocab.nouns})")
    return vocab.pair_to_action.get((verb, noun))


def decompose_action(action: int, vocab: ActionVocab) -> tuple[int, int]:
    if not 0 <= action < vocab.actions:
        raise ValueError(f"action id {action} out of range [0, {vocab.actions})")
    return vocab.pairs[action]


# ---------------------------------------------------------------------------
# Prediction scores
# ---------------------------------------------------------------------------

@dataclass
class PredictionScores:
    """Verb/noun/action logits (or normalized scores) for one view or video."""

    verb: Tensor
    noun: Tensor
    action: Tensor

    def __post_init__(self):
        for name in TASKS:
            val = getattr(self, name)
            if not isinstance(val, Tensor):
                object.__setattr__(self, name, Tensor(val))
            if getattr(self, name).ndim != 1:
                raise ValueError(f"{name} scores must be 1-D, got shape {getattr(self, name).shape}")

    @property
    def class_counts(self) -> tuple[int, int, int]:
        return (self.verb.shape[0], self.noun.shape[0], self.action.shape[0])

    def task(self, name: str) -> Tensor:
        return getattr(self, name)


# ---------------------------------------------------------------------------
# Heads and loss
# ---------------------------------------------------------------------------

def init_head_params(feature_dim: int, class_counts: tuple[int, int, int],
                     rng: np.random.Generator) -> dict[str, Tensor]:
    """Three independent affine maps D -> (V, N, A); uniform(+-1/sqrt(D))."""
    bound = 1.0 / np.sqrt(feature_dim)
    params: dict[str, Tensor] = {}
    for task, n in zip(TASKS, class_counts):
        params[f"head.{task}.w"] = Tensor(
            rng.uniform(-bound, bound, size=(feature_dim, n)), requires_grad=True)
        params[f"head.{task}.b"] = Tensor(
            rng.uniform(-bound, bound, size=(n,)), requires_grad=True)
    return params


def multitask_heads(feature: Tensor, params: dict[str, Tensor],
                    prefix: str = "head") -> PredictionScores:
    """Apply the three classification layers to a pooled feature vector."""
    if feature.ndim != 1:
        raise ValueError(f"head input must be a 1-D feature, got shape {feature.shape}")
    d = feature.shape[0]
    logits = {}
    for task in TASKS:
        w = params[f"{prefix}.{task}.w"]
        b = params[f"{prefix}.{task}.b"]
        if w.shape[0] != d:
            raise ValueError(
                f"{task} head expects feature dim {w.shape[0]}, got {d}")
        out = add(matmul(reshape(feature, (1, d)), w), reshape(b, (1, b.shape[0])))
        logits[task] = reshape(out, (w.shape[1],))
    return PredictionScores(**logits)


def multitask_loss(scores: PredictionScores, target: tuple[int, int, int]) -> Tensor:
    """Equal-weight sum of the three softmax cross-entropies."""
    verb, noun, action = target
    counts = scores.class_counts
    for name, t, n in zip(TASKS, (verb, noun, action), counts):
        if not 0 <= int(t) < n:
            raise ValueError(f"{name} target {t} out of range [0, {n})")
    loss = cross_entropy_logits(scores.verb, verb)
    loss = add(loss, cross_entropy_logits(scores.noun, noun))
    loss = add(loss, cross_entropy_logits(scores.action, action))
    return loss


# ---------------------------------------------------------------------------
# Ensemble averaging
# ---------------------------------------------------------------------------

def _softmax_np(x: np.ndarray) -> np.ndarray:
    e = np.exp(x - x.max())
    return e / e.sum()


def _canonical_mean(stack: np.ndarray) -> np.ndarray:
    """Order-independent mean over axis 0, bit-identical under permutation.

    Member values are sorted elementwise first, then reduced with a balanced
    pairwise tree, so any reordering of members sums the exact same floats
    in the exact same sequence.
    """
    ordered = np.sort(stack, axis=0)
    rows = [ordered[i] for i in range(ordered.shape[0])]
    while len(rows) > 1:
        nxt = [rows[i] + rows[i + 1] for i in range(0, len(rows) - 1, 2)]
        if len(rows) % 2:
            nxt.append(rows[-1])
        rows = nxt
    return rows[0] / stack.shape[0]


def ensemble_average(members: list[PredictionScores]) -> PredictionScores:
    """Per-task arithmetic mean of softmax-normalized member scores."""
    if not members:
        raise ValueError("ensemble needs at least one member")
    counts = members[0].class_counts
    for i, m in enumerate(members[1:], start=1):
        if m.class_counts != counts:
            raise ValueError(
                f"member {i} class counts {m.class_counts} differ from {counts}")
    out = {}
    for task in TASKS:
        stack = np.stack([_softmax_np(m.task(task).data) for m in members])
        out[task] = Tensor(_canonical_mean(stack))
    return PredictionScores(**out)


# ---------------------------------------------------------------------------
# Annotation and score files
# ---------------------------------------------------------------------------

def read_annotations(path) -> tuple[list[str], list[tuple[int, int]]]:
    """CSV with header ``segment_id,verb_id,noun_id``."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["segment_id", "verb_id", "noun_id"]:
            raise ValueError(
                f"annotation file must start with 'segment_id,verb_id,noun_id', got {header}")
        segment_ids: list[str] = []
        pairs: list[tuple[int, int]] = []
        for row_num, row in enumerate(reader, start=2):
            if len(row) != 3:
                raise ValueError(f"annotation line {row_num}: expected 3 columns, got {len(row)}")
            segment_ids.append(row[0].strip())
            pairs.append((int(row[1]), int(row[2])))
    return segment_ids, pairs


def write_score_file(path, segment_ids: list[str], scores: list[PredictionScores]) -> None:
    """One row per segment: ``segment_id, v0.., n0.., a0..`` at %.9g."""
    if len(segment_ids) != len(scores):
        raise ValueError("segment id and score counts differ")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        for seg, sc in zip(segment_ids, scores):
            values = np.concatenate([sc.verb.data, sc.noun.data, sc.action.data])
            fh.write(seg + "," + ",".join(f"{v:.9g}" for v in values) + "\n")


def read_score_file(path, class_counts: tuple[int, int, int]
                    ) -> tuple[list[str], list[PredictionScores]]:
    v, n, a = class_counts
    segment_ids: list[str] = []
    scores: list[PredictionScores] = []
    with open(path, newline="", encoding="utf-8") as fh:
        for line_num, row in enumerate(csv.reader(fh), start=1):
            if len(row) != 1 + v + n + a:
                raise ValueError(
                    f"score line {line_num}: expected {1 + v + n + a} columns, got {len(row)}")
            segment_ids.append(row[0])
            vals = np.array([float(x) for x in row[1:]])
            scores.append(PredictionScores(
                verb=Tensor(vals[:v]), noun=Tensor(vals[v:v + n]), action=Tensor(vals[v + n:])))
    return segment_ids, scores
