"""Video transformer built around space-time mixing attention.

A conventional pre-norm ViT encoder where the per-head self-attention is
the space-time mixing kernel: patch embedding of each frame, learned
spatial position embeddings shared across frames, L blocks of
(LN -> multi-head mixing attention -> residual, LN -> GELU MLP at width
ratio 4 -> residual), then temporal-spatial mean pooling into the three
classification heads.  No class token, no temporal position signal beyond
the channel mixing itself.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as tt
from .attention import ChannelPlan, build_channel_plan, stm_attention_stack
from .heads import PredictionScores, init_head_params, multitask_heads
from .tensor import MacCounter, Tensor, counting

__all__ = ["XViTConfig", "patchify", "init_xvit_params", "xvit_forward", "VideoTransformer"]

MLP_RATIO = 4


@dataclass(frozen=True)
class XViTConfig:
    layers: int
    heads: int
    embed_dim: int
    patch: int
    t_w: int
    frames: int
    input_hw: tuple[int, int]
    class_counts: tuple[int, int, int]
    in_channels: int = 3

    def __post_init__(self):
        if self.embed_dim % self.heads:
            raise ValueError(f"embed_dim {self.embed_dim} not divisible by heads {self.heads}")
        h, w = self.input_hw
        if h % self.patch or w % self.patch:
            raise ValueError(f"input {self.input_hw} not divisible by patch {self.patch}")
        if self.head_dim < 2 * self.t_w + 1:
            raise ValueError(
                f"head dim {self.head_dim} cannot host temporal window t_w={self.t_w}")
        if min(self.layers, self.heads, self.frames) < 1:
            raise ValueError("layers, heads and frames must all be >= 1")

    @property
    def head_dim(self) -> int:
        return self.embed_dim // self.heads

    @property
    def tokens_per_frame(self) -> int:
        h, w = self.input_hw
        return (h // self.patch) * (w // self.patch)

    @classmethod
    def base_preset(cls, input_hw: tuple[int, int] = (224, 224)) -> "XViTConfig":
        """ViT-B/16 sizing: 12 layers, 12 heads, embed 768, window radius 1,
        16 frames, verb/noun/action head widths (97, 300, 3806)."""
        return cls(layers=12, heads=12, embed_dim=768, patch=16, t_w=1, frames=16,
                   input_hw=input_hw, class_counts=(97, 300, 3806))

    @classmethod
    def desk_preset(cls) -> "XViTConfig":
        """Base sizing at 112x112 input (49 tokens/frame) for desk runs."""
        return cls.base_preset(input_hw=(112, 112))

    @classmethod
    def toy(cls, class_counts: tuple[int, int, int], layers: int = 2, heads: int = 4,
            embed_dim: int = 48, patch: int = 4, t_w: int = 1, frames: int = 8,
            image_size: int = 16) -> "XViTConfig":
        return cls(layers=layers, heads=heads, embed_dim=embed_dim, patch=patch,
                   t_w=t_w, frames=frames, input_hw=(image_size, image_size),
                   class_counts=class_counts)


# ---------------------------------------------------------------------------
# Patch embedding
# ---------------------------------------------------------------------------

def patchify(frames: Tensor, patch: int, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """Embed non-overlapping patch pixels: (T,C,H,W) -> (T, S, D).

    Tokens are raster ordered (top-left to bottom-right); each is the linear
    image of its flattened C*patch*patch pixel block.
    """
    if frames.ndim != 4:
        raise ValueError(f"patchify input must be (T,C,H,W), got shape {frames.shape}")
    t, c, h, w = frames.shape
    if h % patch or w % patch:
        raise ValueError(f"frame size {(h, w)} not divisible by patch {patch}")
    gh, gw = h // patch, w // patch
    x = tt.reshape(frames, (t, c, gh, patch, gw, patch))
    x = tt.transpose(x, (0, 2, 4, 1, 3, 5))                 # (T, gh, gw, C, p, p)
    x = tt.reshape(x, (t * gh * gw, c * patch * patch))
    if weight.shape[0] != c * patch * patch:
        raise ValueError(
            f"patch embed expects {weight.shape[0]} pixels per patch, got {c * patch * patch}")
    tokens = tt.matmul(x, weight)
    if bias is not None:
        tokens = tt.add(tokens, tt.reshape(bias, (1, bias.shape[0])))
    return tt.reshape(tokens, (t, gh * gw, weight.shape[1]))


# ---------------------------------------------------------------------------
# Parameters
# ---------------------------------------------------------------------------

def _uniform(rng: np.random.Generator, shape, fan_in: int) -> Tensor:
    bound = 1.0 / np.sqrt(fan_in)
    return Tensor(rng.uniform(-bound, bound, size=shape), requires_grad=True)


def init_xvit_params(cfg: XViTConfig, seed: int) -> dict[str, Tensor]:
    """Seeded uniform(-1/sqrt(fan_in)) linear maps; LN gains 1, shifts 0."""
    rng = np.random.default_rng(seed)
    d = cfg.embed_dim
    pixels = cfg.in_channels * cfg.patch * cfg.patch
    params: dict[str, Tensor] = {
        "patch_embed.w": _uniform(rng, (pixels, d), pixels),
        "patch_embed.b": _uniform(rng, (d,), pixels),
        "pos_embed": _uniform(rng, (cfg.tokens_per_frame, d), d),
    }
    for i in range(cfg.layers):
        p = f"block{i}"
        params[f"{p}.ln1.g"] = Tensor(np.ones(d), requires_grad=True)
        params[f"{p}.ln1.b"] = Tensor(np.zeros(d), requires_grad=True)
        params[f"{p}.qkv.w"] = _uniform(rng, (d, 3 * d), d)
        params[f"{p}.qkv.b"] = _uniform(rng, (3 * d,), d)
        params[f"{p}.proj.w"] = _uniform(rng, (d, d), d)
        params[f"{p}.proj.b"] = _uniform(rng, (d,), d)
        params[f"{p}.ln2.g"] = Tensor(np.ones(d), requires_grad=True)
        params[f"{p}.ln2.b"] = Tensor(np.zeros(d), requires_grad=True)
        params[f"{p}.mlp.w1"] = _uniform(rng, (d, MLP_RATIO * d), d)
        params[f"{p}.mlp.b1"] = _uniform(rng, (MLP_RATIO * d,), d)
        params[f"{p}.mlp.w2"] = _uniform(rng, (MLP_RATIO * d, d), MLP_RATIO * d)
        params[f"{p}.mlp.b2"] = _uniform(rng, (d,), MLP_RATIO * d)
    params.update(init_head_params(d, cfg.class_counts, rng))
    return params


# ---------------------------------------------------------------------------
# Forward
# ---------------------------------------------------------------------------

def _affine_lastdim(x: Tensor, g: Tensor, b: Tensor) -> Tensor:
    return tt.add(tt.mul(x, g), b)


def _block(x: Tensor, params: dict[str, Tensor], prefix: str, cfg: XViTConfig,
           plan: ChannelPlan, attention_macs: MacCounter | None) -> Tensor:
    t, s, d = x.shape
    h, dh = cfg.heads, cfg.head_dim

    pre = _affine_lastdim(tt.layer_norm(x), params[f"{prefix}.ln1.g"], params[f"{prefix}.ln1.b"])
    qkv = tt.add(tt.matmul(tt.reshape(pre, (t * s, d)), params[f"{prefix}.qkv.w"]),
                 tt.reshape(params[f"{prefix}.qkv.b"], (1, 3 * d)))
    qkv = tt.transpose(tt.reshape(qkv, (t, s, 3, h, dh)), (2, 3, 0, 1, 4))  # (3,H,T,S,dh)
    q = tt.reshape(tt.slice_axis(qkv, 0, 0, 1), (h, t, s, dh))
    k = tt.reshape(tt.slice_axis(qkv, 0, 1, 2), (h, t, s, dh))
    v = tt.reshape(tt.slice_axis(qkv, 0, 2, 3), (h, t, s, dh))
    if attention_macs is not None:
        with counting(attention_macs):
            y = stm_attention_stack(q, k, v, plan)
    else:
        y = stm_attention_stack(q, k, v, plan)
    y = tt.reshape(tt.transpose(y, (1, 2, 0, 3)), (t * s, d))
    y = tt.add(tt.matmul(y, params[f"{prefix}.proj.w"]),
               tt.reshape(params[f"{prefix}.proj.b"], (1, d)))
    x = tt.add(x, tt.reshape(y, (t, s, d)))

    pre = _affine_lastdim(tt.layer_norm(x), params[f"{prefix}.ln2.g"], params[f"{prefix}.ln2.b"])
    hdn = tt.add(tt.matmul(tt.reshape(pre, (t * s, d)), params[f"{prefix}.mlp.w1"]),
                 tt.reshape(params[f"{prefix}.mlp.b1"], (1, MLP_RATIO * d)))
    hdn = tt.add(tt.matmul(tt.gelu(hdn), params[f"{prefix}.mlp.w2"]),
                 tt.reshape(params[f"{prefix}.mlp.b2"], (1, d)))
    return tt.add(x, tt.reshape(hdn, (t, s, d)))


def xvit_forward(clip: Tensor, cfg: XViTConfig, params: dict[str, Tensor],
                 attention_macs: MacCounter | None = None) -> PredictionScores:
    """Full video-transformer forward for one clip (T,C,H,W).

    T may differ from cfg.frames (the model is frame-count agnostic); the
    spatial geometry must match the config.  When ``attention_macs`` is
    given it additionally accumulates the MACs spent inside the attention
    kernels.
    """
    if not isinstance(clip, Tensor):
        clip = Tensor(clip)
    if clip.ndim != 4:
        raise ValueError(f"clip must be (T,C,H,W), got shape {clip.shape}")
    t, c, h, w = clip.shape
    if c != cfg.in_channels or (h, w) != tuple(cfg.input_hw):
        raise ValueError(
            f"clip geometry {(c, h, w)} does not match config "
            f"({cfg.in_channels}, {cfg.input_hw[0]}, {cfg.input_hw[1]})")
    plan = build_channel_plan(cfg.head_dim, cfg.t_w)
    x = patchify(clip, cfg.patch, params["patch_embed.w"], params["patch_embed.b"])
    x = tt.add(x, params["pos_embed"])                      # shared across frames
    for i in range(cfg.layers):
        x = _block(x, params, f"block{i}", cfg, plan, attention_macs)
    feature = tt.tmean(x, axis=(0, 1))                      # (D,)
    return multitask_heads(feature, params)


class VideoTransformer:
    """Config + parameter bundle with the trainer/estimator interface."""

    def __init__(self, cfg: XViTConfig):
        self.cfg = cfg

    @property
    def class_counts(self) -> tuple[int, int, int]:
        return self.cfg.class_counts

    def init_params(self, seed: int) -> dict[str, Tensor]:
        return init_xvit_params(self.cfg, seed)

    def forward(self, clip: Tensor, params: dict[str, Tensor]) -> PredictionScores:
        return xvit_forward(clip, self.cfg, params)
