"""Frame sampling and the multi-clip / multi-crop test protocol.

Test protocol: 2 temporal clips (16 frames uniformly sampled from each
half of the video) times 3 spatial crops = 6 views per video, whose
prediction scores are averaged into the video prediction.  Training-time
sampling adds per-segment temporal jitter.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .heads import PredictionScores, ensemble_average

__all__ = [
    "SamplingSpec",
    "ViewSpec",
    "uniform_sample",
    "temporal_jitter",
    "three_crops",
    "generate_views",
    "aggregate_views",
]


@dataclass(frozen=True)
class SamplingSpec:
    frames: int = 16
    mode: str = "uniform_center"
    seed: int = 0

    def __post_init__(self):
        if self.frames < 1:
            raise ValueError(f"frame count must be >= 1, got {self.frames}")
        if self.mode not in ("uniform_center", "jittered"):
            raise ValueError(f"unknown sampling mode {self.mode!r}")


@dataclass(frozen=True)
class ViewSpec:
    clips_per_video: int = 2
    crops_per_frame: int = 3

    @property
    def total(self) -> int:
        return self.clips_per_video * self.crops_per_frame


def uniform_sample(video_length: int, n: int) -> np.ndarray:
    """Segment-center indices floor((i+0.5)*L/n), clamped to [0, L-1]."""
    if video_length < 1:
        raise ValueError(f"video length must be >= 1, got {video_length}")
    if n < 1:
        raise ValueError(f"sample count must be >= 1, got {n}")
    idx = ((np.arange(n) + 0.5) * video_length / n).astype(np.int64)
    return np.clip(idx, 0, video_length - 1)


def temporal_jitter(video_length: int, n: int, rng: np.random.Generator | int) -> np.ndarray:
    """One random index per equal segment [floor(iL/n), floor((i+1)L/n)).

    Empty segments (short videos) clamp to the nearest valid index, so the
    output length is always n.  Reproducible for a given seed/generator.
    """
    if video_length < 1:
        raise ValueError(f"video length must be >= 1, got {video_length}")
    if n < 1:
        raise ValueError(f"sample count must be >= 1, got {n}")
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    out = np.empty(n, dtype=np.int64)
    for i in range(n):
        lo = (i * video_length) // n
        hi = ((i + 1) * video_length) // n
        if hi > lo:
            out[i] = rng.integers(lo, hi)
        else:
            out[i] = min(lo, video_length - 1)
    return out


# ---------------------------------------------------------------------------
# Spatial crops
# ---------------------------------------------------------------------------

def _resize_short_side(frame: np.ndarray, side: int) -> np.ndarray:
    """Bilinear resize so the short side equals ``side`` (aspect kept)."""
    c, h, w = frame.shape
    short = min(h, w)
    if short == side:
        return frame
    scale = side / short
    nh = side if h == short else int(round(h * scale))
    nw = side if w == short else int(round(w * scale))

    def axis_coords(n_out, n_in):
        # half-pixel centers, clamped to the valid sample range
        coords = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
        return np.clip(coords, 0, n_in - 1)

    ys = axis_coords(nh, h)
    xs = axis_coords(nw, w)
    y0 = np.floor(ys).astype(np.int64)
    x0 = np.floor(xs).astype(np.int64)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    wy = (ys - y0).reshape(1, nh, 1)
    wx = (xs - x0).reshape(1, 1, nw)
    tl = frame[:, y0][:, :, x0]
    tr = frame[:, y0][:, :, x1]
    bl = frame[:, y1][:, :, x0]
    br = frame[:, y1][:, :, x1]
    top = tl * (1 - wx) + tr * wx
    bot = bl * (1 - wx) + br * wx
    return top * (1 - wy) + bot * wy


def three_crops(frame: np.ndarray, side: int) -> list[np.ndarray]:
    """Three side x side crops along the long axis after short-side resize.

    Landscape frames crop left/center/right, portrait top/center/bottom;
    square frames yield three identical center crops.
    """
    if frame.ndim != 3:
        raise ValueError(f"frame must be (C,H,W), got shape {frame.shape}")
    frame = _resize_short_side(frame, side)
    _, h, w = frame.shape
    crops = []
    if w >= h:
        for x in (0, (w - side) // 2, w - side):
            crops.append(frame[:, :side, x:x + side])
    else:
        for y in (0, (h - side) // 2, h - side):
            crops.append(frame[:, y:y + side, :side])
    return crops


# ---------------------------------------------------------------------------
# View generation and aggregation
# ---------------------------------------------------------------------------

def generate_views(video: np.ndarray, spec: ViewSpec, sampling: SamplingSpec,
                   side: int | None = None) -> list[np.ndarray]:
    """The 2 clips x 3 crops = 6 deterministic test views of one video.

    Clip 1 samples uniformly from the first half of the video, clip 2 from
    the second half (the halves share the middle frame when the length is
    odd).  Each sampled frame contributes its three spatial crops.
    """
    if spec.clips_per_video != 2 or spec.crops_per_frame != 3:
        raise ValueError(
            f"the test protocol is 2 clips x 3 crops, got {spec.clips_per_video}x{spec.crops_per_frame}")
    if video.ndim != 4 or video.shape[0] < 1:
        raise ValueError(f"video must be non-empty (L,C,H,W), got shape {video.shape}")
    length = video.shape[0]
    if side is None:
        side = min(video.shape[2], video.shape[3])
    first_len = (length + 1) // 2
    second_start = length // 2
    halves = [
        uniform_sample(first_len, sampling.frames),
        second_start + uniform_sample(length - second_start, sampling.frames),
    ]
    views = []
    for indices in halves:
        clip = video[indices]                               # (T,C,H,W)
        crops = [three_crops(fr, side) for fr in clip]
        for ci in range(3):
            views.append(np.stack([crops[t][ci] for t in range(len(indices))]))
    return views


def aggregate_views(scores: list[PredictionScores], spec: ViewSpec = ViewSpec()
                    ) -> PredictionScores:
    """Average the per-view scores into the video prediction."""
    if len(scores) != spec.total:
        raise ValueError(f"expected {spec.total} view scores, got {len(scores)}")
    return ensemble_average(scores)
