"""Synthetic motion/appearance videos for desk-scale training runs.

Each video shows one sprite on a noisy background.  The noun is the
sprite's texture (appearance cue: solid, checkerboard, stripes); the verb
is the order in which the sprite visits a fixed set of horizontal
positions (sweep right, sweep left, bounce).  All verbs traverse the same
position multiset, so shuffling the frame order destroys verb information
while leaving noun information intact: temporal models are needed for
verbs, spatial models for nouns.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .heads import ActionVocab, build_action_vocab

__all__ = ["SynthSpec", "SynthDataset", "synth_videos", "shuffle_frames"]

SPRITE = 6


@dataclass(frozen=True)
class SynthSpec:
    verbs: int = 3
    nouns: int = 3
    samples_per_class: int = 8
    frames: int = 8
    image_size: int = 16
    noise: float = 0.05
    seed: int = 0

    def __post_init__(self):
        if not 1 <= self.verbs <= 3 or not 1 <= self.nouns <= 3:
            raise ValueError("at most 3 verb and 3 noun patterns are defined")
        if self.frames < 2:
            raise ValueError("motion needs at least 2 frames")
        if self.image_size < SPRITE + 2:
            raise ValueError(f"image size must be at least {SPRITE + 2}")


@dataclass
class SynthDataset:
    videos: list[np.ndarray]
    labels: list[tuple[int, int, int]]
    vocab: ActionVocab
    spec: SynthSpec = field(repr=False, default=None)

    def __len__(self) -> int:
        return len(self.videos)


def _noun_pattern(noun: int) -> np.ndarray:
    """Sprite texture per noun id (the static appearance cue)."""
    ii, jj = np.meshgrid(np.arange(SPRITE), np.arange(SPRITE), indexing="ij")
    if noun == 0:
        return np.ones((SPRITE, SPRITE))
    if noun == 1:
        return ((ii + jj) % 2).astype(np.float64)
    return (jj % 2).astype(np.float64)


def _verb_order(verb: int, frames: int) -> np.ndarray:
    """Visit order over the shared position set (the temporal cue).

    All verbs are permutations of range(frames): 0 sweeps right, 1 sweeps
    left, 2 bounces between the ends.  Identical position multisets mean a
    frame-order-blind observer cannot separate the verbs.
    """
    forward = np.arange(frames)
    if verb == 0:
        return forward
    if verb == 1:
        return forward[::-1]
    order = np.empty(frames, dtype=np.int64)
    order[0::2] = np.arange((frames + 1) // 2)
    order[1::2] = frames - 1 - np.arange(frames // 2)
    return order


def synth_videos(spec: SynthSpec) -> SynthDataset:
    """Deterministic labeled video set: same seed, bit-identical arrays."""
    rng = np.random.default_rng(spec.seed)
    size = spec.image_size
    pairs = [(v, n) for v in range(spec.verbs) for n in range(spec.nouns)]
    vocab = build_action_vocab(pairs, spec.verbs, spec.nouns)
    anchors = np.round(np.linspace(0, size - SPRITE, spec.frames)).astype(np.int64)
    videos: list[np.ndarray] = []
    labels: list[tuple[int, int, int]] = []
    for verb, noun in pairs:
        order = _verb_order(verb, spec.frames)
        pattern = _noun_pattern(noun)
        for _ in range(spec.samples_per_class):
            row = int(rng.integers(0, size - SPRITE + 1))
            brightness = rng.uniform(0.8, 1.2)
            video = rng.normal(0.0, spec.noise, size=(spec.frames, 3, size, size))
            for t in range(spec.frames):
                x = anchors[order[t]]
                video[t, :, row:row + SPRITE, x:x + SPRITE] += brightness * pattern
            videos.append(video)
            labels.append((verb, noun, vocab.pair_to_action[(verb, noun)]))
    return SynthDataset(videos=videos, labels=labels, vocab=vocab, spec=spec)


def shuffle_frames(dataset: SynthDataset, seed: int) -> SynthDataset:
    """Frame-order-shuffled copy (the order-blind control condition)."""
    rng = np.random.default_rng(seed)
    videos = [video[rng.permutation(video.shape[0])] for video in dataset.videos]
    return SynthDataset(videos=videos, labels=list(dataset.labels),
                        vocab=dataset.vocab, spec=dataset.spec)
