"""Scikit-learn style estimators wrapping the two toy video models.

``X`` is a sequence of clips, each (T, 3, H, W) float; ``y`` is an (n, 2)
or (n, 3) integer array of (verb, noun[, action]) labels.  Action ids are
derived from the observed verb/noun pairs at fit time, so a 2-column ``y``
is enough.  The estimators follow the fit/predict/get_params contract and
therefore compose with model selection and pipeline tooling.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, clone

from .gsf import ToyBackboneConfig, ToyGsfBackbone
from .heads import PredictionScores, build_action_vocab, ensemble_average
from .tensor import Tensor, no_grad
from .train import ClipDataset, TrainSpec, train_toy
from .vit import VideoTransformer, XViTConfig

__all__ = [
    "GateShiftFuseClassifier",
    "SpaceTimeMixingClassifier",
    "ScoreAveragingEnsemble",
]


def _validate_videos(X) -> list[np.ndarray]:
    clips = [np.asarray(v, dtype=np.float64) for v in X]
    if not clips:
        raise ValueError("X must contain at least one video clip")
    for i, clip in enumerate(clips):
        if clip.ndim != 4 or clip.shape[1] != 3:
            raise ValueError(
                f"clip {i} must be (T, 3, H, W), got shape {clip.shape}")
    return clips


def _validate_labels(y, n: int) -> np.ndarray:
    labels = np.asarray(y, dtype=np.int64)
    if labels.ndim != 2 or labels.shape[1] not in (2, 3):
        raise ValueError(f"y must be (n, 2) or (n, 3) verb/noun[/action] ids, got {labels.shape}")
    if labels.shape[0] != n:
        raise ValueError(f"X has {n} clips but y has {labels.shape[0]} rows")
    if labels.min() < 0:
        raise ValueError("label ids must be non-negative")
    return labels


class _ToyVideoClassifier(BaseEstimator, ClassifierMixin):
    """Shared fit/predict machinery; subclasses provide the model."""

    def _build_model(self, class_counts):
        raise NotImplementedError

    def _train_spec(self) -> TrainSpec:
        return TrainSpec(base_lr=self.base_lr, batch_size=self.batch_size,
                         epochs=self.epochs, momentum=self.momentum)

    def fit(self, X, y):
        clips = _validate_videos(X)
        labels = _validate_labels(y, len(clips))
        verbs = int(labels[:, 0].max()) + 1
        nouns = int(labels[:, 1].max()) + 1
        self.vocab_ = build_action_vocab(
            [(int(v), int(n)) for v, n in labels[:, :2]], verbs, nouns)
        triples = [(int(v), int(n), self.vocab_.pair_to_action[(int(v), int(n))])
                   for v, n in labels[:, :2]]
        self.model_ = self._build_model(self.vocab_.class_counts)
        result = train_toy(self.model_, ClipDataset(clips, triples),
                           self._train_spec(), seed=self.seed)
        self.params_ = result.params
        self.history_ = result.history
        self.classes_ = np.arange(self.vocab_.actions)
        return self

    def predict_scores(self, X) -> list[PredictionScores]:
        """Raw multi-task logits per clip."""
        self._check_fitted()
        clips = _validate_videos(X)
        with no_grad():
            return [self.model_.forward(Tensor(clip), self.params_) for clip in clips]

    def predict(self, X) -> np.ndarray:
        """(n, 3) array of predicted (verb, noun, action) ids."""
        scores = self.predict_scores(X)
        return np.array([[int(np.argmax(s.verb.data)),
                          int(np.argmax(s.noun.data)),
                          int(np.argmax(s.action.data))] for s in scores])

    def score(self, X, y) -> float:
        """Action top-1 accuracy in [0, 1]."""
        labels = _validate_labels(y, len(list(X)))
        if labels.shape[1] == 2:
            self._check_fitted()
            actions = [self.vocab_.pair_to_action.get((int(v), int(n)))
                       for v, n in labels[:, :2]]
        else:
            actions = [int(a) for a in labels[:, 2]]
        preds = self.predict(X)[:, 2]
        pairs = [(p, a) for p, a in zip(preds, actions) if a is not None]
        if not pairs:
            raise ValueError("no rows with a known action label")
        return float(np.mean([p == a for p, a in pairs]))

    def _check_fitted(self):
        if not hasattr(self, "params_"):
            raise RuntimeError(f"{type(self).__name__} is not fitted yet")


class GateShiftFuseClassifier(_ToyVideoClassifier):
    """Gate-shift-fuse CNN over video clips (strong temporal cues)."""

    def __init__(self, stage_channels=(16, 32), fusion="weighted",
                 base_lr=0.3, batch_size=18, epochs=25, momentum=0.9, seed=0):
        self.stage_channels = stage_channels
        self.fusion = fusion
        self.base_lr = base_lr
        self.batch_size = batch_size
        self.epochs = epochs
        self.momentum = momentum
        self.seed = seed

    def _build_model(self, class_counts):
        cfg = ToyBackboneConfig(class_counts=class_counts,
                                stage_channels=tuple(self.stage_channels),
                                fusion=self.fusion)
        return ToyGsfBackbone(cfg)


class SpaceTimeMixingClassifier(_ToyVideoClassifier):
    """Video transformer with space-time mixing attention (strong spatial cues)."""

    def __init__(self, layers=2, heads=4, embed_dim=48, patch=4, t_w=1,
                 frames=8, image_size=16, base_lr=0.15, batch_size=18,
                 epochs=25, momentum=0.9, seed=0):
        self.layers = layers
        self.heads = heads
        self.embed_dim = embed_dim
        self.patch = patch
        self.t_w = t_w
        self.frames = frames
        self.image_size = image_size
        self.base_lr = base_lr
        self.batch_size = batch_size
        self.epochs = epochs
        self.momentum = momentum
        self.seed = seed

    def _build_model(self, class_counts):
        cfg = XViTConfig.toy(class_counts=class_counts, layers=self.layers,
                             heads=self.heads, embed_dim=self.embed_dim,
                             patch=self.patch, t_w=self.t_w, frames=self.frames,
                             image_size=self.image_size)
        return VideoTransformer(cfg)


class ScoreAveragingEnsemble(BaseEstimator, ClassifierMixin):
    """Averages the members' softmax-normalized scores per task."""

    def __init__(self, members=()):
        self.members = members

    def fit(self, X, y):
        if not self.members:
            raise ValueError("ensemble needs at least one member estimator")
        self.members_ = [clone(m).fit(X, y) for m in self.members]
        self.classes_ = self.members_[0].classes_
        return self

    def predict_scores(self, X) -> list[PredictionScores]:
        if not hasattr(self, "members_"):
            raise RuntimeError("ScoreAveragingEnsemble is not fitted yet")
        per_member = [m.predict_scores(X) for m in self.members_]
        return [ensemble_average([scores[i] for scores in per_member])
                for i in range(len(per_member[0]))]

    def predict(self, X) -> np.ndarray:
        scores = self.predict_scores(X)
        return np.array([[int(np.argmax(s.verb.data)),
                          int(np.argmax(s.noun.data)),
                          int(np.argmax(s.action.data))] for s in scores])

    def score(self, X, y) -> float:
        labels = _validate_labels(y, len(list(X)))
        vocab = self.members_[0].vocab_
        if labels.shape[1] == 2:
            actions = [vocab.pair_to_action.get((int(v), int(n))) for v, n in labels[:, :2]]
        else:
            actions = [int(a) for a in labels[:, 2]]
        preds = self.predict(X)[:, 2]
        pairs = [(p, a) for p, a in zip(preds, actions) if a is not None]
        if not pairs:
            raise ValueError("no rows with a known action label")
        return float(np.mean([p == a for p, a in pairs]))
