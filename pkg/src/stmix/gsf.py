"""Gate-shift-fuse: gated temporal shifting for 2D convolutional backbones.

The module splits a (C,T,H,W) feature volume into a gated part and its
residual using a spatial gate from a small 3D convolution (one gate channel
per group of C/2 feature channels, sigmoid-squashed).  The gated part is
shifted in time, group 0 forward and group 1 backward by one frame with
zero fill, then recombined with the residual: plain addition (the additive
predecessor) or a learned channel-wise convex combination whose weights
come from a pointwise convolution over pooled features (the weighted
variant).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as tt
from .heads import PredictionScores, init_head_params, multitask_heads
from .tensor import Tensor

__all__ = [
    "GsfConfig",
    "GsfState",
    "ToyBackboneConfig",
    "init_gsf_params",
    "spatial_gating",
    "gate_split",
    "temporal_shift",
    "fuse_add",
    "fuse_weighted",
    "gsf_forward",
    "init_backbone_params",
    "toy_backbone_forward",
    "ToyGsfBackbone",
]

GROUPS = 2
GATE_KERNEL = (3, 3, 3)
FUSION_MODES = ("additive", "weighted")


@dataclass(frozen=True)
class GsfConfig:
    channels: int
    fusion: str = "weighted"

    def __post_init__(self):
        if self.channels % GROUPS:
            raise ValueError(f"channel count must be even, got {self.channels}")
        if self.fusion not in FUSION_MODES:
            raise ValueError(f"fusion must be one of {FUSION_MODES}, got {self.fusion!r}")


@dataclass
class GsfState:
    """Intermediate tensors of one forward pass, for inspection and tests."""

    gate: Tensor
    gated: Tensor
    residual: Tensor
    shifted: Tensor
    fusion_w: Tensor | None = None


def init_gsf_params(cfg: GsfConfig, rng: np.random.Generator,
                    prefix: str = "gsf") -> dict[str, Tensor]:
    kt, kh, kw = GATE_KERNEL
    fan = cfg.channels * kt * kh * kw
    bound = 1.0 / np.sqrt(fan)
    params = {
        f"{prefix}.gate.w": Tensor(
            rng.uniform(-bound, bound, size=(GROUPS, cfg.channels, kt, kh, kw)),
            requires_grad=True),
        f"{prefix}.gate.b": Tensor(rng.uniform(-bound, bound, size=(GROUPS,)),
                                   requires_grad=True),
    }
    if cfg.fusion == "weighted":
        fuse_bound = 1.0 / np.sqrt(GROUPS * cfg.channels)
        params[f"{prefix}.fuse.w"] = Tensor(
            rng.uniform(-fuse_bound, fuse_bound, size=(GROUPS * cfg.channels, cfg.channels)),
            requires_grad=True)
        params[f"{prefix}.fuse.b"] = Tensor(
            rng.uniform(-fuse_bound, fuse_bound, size=(cfg.channels,)), requires_grad=True)
    return params


def _check_volume(x: Tensor, cfg: GsfConfig) -> None:
    if x.ndim != 4:
        raise ValueError(f"feature volume must be (C,T,H,W), got shape {x.shape}")
    if x.shape[0] != cfg.channels:
        raise ValueError(f"volume has {x.shape[0]} channels, config says {cfg.channels}")


def spatial_gating(x: Tensor, cfg: GsfConfig, params: dict[str, Tensor],
                   prefix: str = "gsf") -> Tensor:
    """Sigmoid gate volume, one gating map per channel group.

    The 3x3x3 convolution emits one channel per group; each map is
    broadcast over the C/2 feature channels of its group, so the gate has
    the input's full (C,T,H,W) shape with values in (0,1).
    """
    _check_volume(x, cfg)
    raw = tt.conv3d(x, params[f"{prefix}.gate.w"], params[f"{prefix}.gate.b"])
    gate = tt.sigmoid(raw)                                  # (2,T,H,W)
    c, t, h, w = x.shape
    group_of = np.repeat(np.arange(GROUPS), c // GROUPS)    # channel -> group
    per_frame = t * h * w
    idx = group_of.reshape(c, 1) * per_frame + np.arange(per_frame).reshape(1, per_frame)
    return tt.reshape(tt.take_flat(gate, idx), (c, t, h, w))


def gate_split(x: Tensor, gate: Tensor) -> tuple[Tensor, Tensor]:
    """(gated, residual) with gated + residual == x elementwise."""
    if x.shape != gate.shape:
        raise ValueError(f"gate shape {gate.shape} does not match input {x.shape}")
    gated = tt.mul(gate, x)
    residual = tt.sub(x, gated)
    return gated, residual


def temporal_shift(gated: Tensor) -> Tensor:
    """Shift group 0 forward and group 1 backward in time by one frame.

    Frame 0 (forward) and frame T-1 (backward) receive zeros; a T=1 volume
    therefore shifts everything out and returns zeros.
    """
    if gated.ndim != 4:
        raise ValueError(f"feature volume must be (C,T,H,W), got shape {gated.shape}")
    c, t = gated.shape[0], gated.shape[1]
    if c % GROUPS:
        raise ValueError(f"channel count must be even, got {c}")
    fwd = tt.slice_axis(gated, 0, 0, c // GROUPS)
    bwd = tt.slice_axis(gated, 0, c // GROUPS, c)
    fwd = tt.slice_axis(tt.pad_axis(fwd, 1, 1, 0), 1, 0, t)      # frame t <- t-1
    bwd = tt.slice_axis(tt.pad_axis(bwd, 1, 0, 1), 1, 1, t + 1)  # frame t <- t+1
    return tt.concat([fwd, bwd], axis=0)


def fuse_add(shifted: Tensor, residual: Tensor) -> Tensor:
    """Additive recombination (the predecessor module's fusion)."""
    if shifted.shape != residual.shape:
        raise ValueError(f"shapes differ: {shifted.shape} vs {residual.shape}")
    return tt.add(shifted, residual)


def fuse_weighted(shifted: Tensor, residual: Tensor, cfg: GsfConfig,
                  params: dict[str, Tensor], prefix: str = "gsf",
                  return_weights: bool = False):
    """Data-dependent channel-wise convex combination of the two paths.

    Both paths are average-pooled over (T,H,W), concatenated to a 2C vector,
    and mapped by a pointwise convolution (a 2C -> C linear layer) through a
    sigmoid; channel c of the output is w_c*shifted + (1-w_c)*residual.
    """
    if shifted.shape != residual.shape:
        raise ValueError(f"shapes differ: {shifted.shape} vs {residual.shape}")
    _check_volume(shifted, cfg)
    c = cfg.channels
    pooled = tt.concat([tt.tmean(shifted, axis=(1, 2, 3)),
                        tt.tmean(residual, axis=(1, 2, 3))], axis=0)   # (2C,)
    w = tt.sigmoid(tt.add(
        tt.reshape(tt.matmul(tt.reshape(pooled, (1, GROUPS * c)), params[f"{prefix}.fuse.w"]),
                   (c,)),
        params[f"{prefix}.fuse.b"]))
    w_col = tt.reshape(w, (c, 1, 1, 1))
    out = tt.add(tt.mul(w_col, shifted), tt.mul(tt.sub(Tensor(np.ones((c, 1, 1, 1))), w_col),
                                                residual))
    if return_weights:
        return out, w
    return out


def gsf_forward(x: Tensor, cfg: GsfConfig, params: dict[str, Tensor],
                prefix: str = "gsf", return_state: bool = False):
    """gate -> split -> shift -> fuse; output has the input's shape."""
    _check_volume(x, cfg)
    gate = spatial_gating(x, cfg, params, prefix)
    gated, residual = gate_split(x, gate)
    shifted = temporal_shift(gated)
    if cfg.fusion == "additive":
        out = fuse_add(shifted, residual)
        fusion_w = None
    else:
        out, fusion_w = fuse_weighted(shifted, residual, cfg, params, prefix,
                                      return_weights=True)
    if return_state:
        return out, GsfState(gate=gate, gated=gated, residual=residual,
                             shifted=shifted, fusion_w=fusion_w)
    return out


# ---------------------------------------------------------------------------
# Toy 2D backbone with GSF after each stage
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ToyBackboneConfig:
    """Two 3x3 conv stages with stride-2 average pooling, GSF after each.

    The backbone stands in for the full-scale 2D CNNs the module is meant
    to plug into.  GELU activations and average pooling keep the whole
    pipeline smooth, so finite-difference gradient checks apply end to end.
    """

    class_counts: tuple[int, int, int]
    stage_channels: tuple[int, int] = (16, 32)
    fusion: str = "weighted"
    in_channels: int = 3

    def __post_init__(self):
        if any(c % GROUPS for c in self.stage_channels):
            raise ValueError(f"stage channel counts must be even, got {self.stage_channels}")
        if self.fusion not in FUSION_MODES:
            raise ValueError(f"fusion must be one of {FUSION_MODES}, got {self.fusion!r}")

    def gsf_config(self, stage: int) -> GsfConfig:
        return GsfConfig(channels=self.stage_channels[stage], fusion=self.fusion)


def init_backbone_params(cfg: ToyBackboneConfig, seed: int) -> dict[str, Tensor]:
    rng = np.random.default_rng(seed)
    params: dict[str, Tensor] = {}
    c_prev = cfg.in_channels
    for i, c_out in enumerate(cfg.stage_channels):
        fan = c_prev * 9
        bound = 1.0 / np.sqrt(fan)
        params[f"stage{i}.conv.w"] = Tensor(
            rng.uniform(-bound, bound, size=(c_out, c_prev, 1, 3, 3)), requires_grad=True)
        params[f"stage{i}.conv.b"] = Tensor(
            rng.uniform(-bound, bound, size=(c_out,)), requires_grad=True)
        params.update(init_gsf_params(cfg.gsf_config(i), rng, prefix=f"stage{i}.gsf"))
        c_prev = c_out
    params.update(init_head_params(cfg.stage_channels[-1], cfg.class_counts, rng))
    return params


def _avg_pool2(x: Tensor) -> Tensor:
    """2x2 stride-2 spatial average pooling of (C,T,H,W)."""
    c, t, h, w = x.shape
    if h % 2 or w % 2:
        raise ValueError(f"spatial dims must be even for 2x2 pooling, got {(h, w)}")
    x = tt.reshape(x, (c, t, h // 2, 2, w // 2, 2))
    return tt.tmean(x, axis=(3, 5))


def toy_backbone_forward(clip: Tensor, cfg: ToyBackboneConfig,
                         params: dict[str, Tensor], use_gsf: bool = True) -> PredictionScores:
    """Per-frame convs with GSF across time: (T,C,H,W) clip -> logits.

    ``use_gsf=False`` drops the GSF layers entirely (ablation hook used by
    the identity-reduction tests).
    """
    if not isinstance(clip, Tensor):
        clip = Tensor(clip)
    if clip.ndim != 4:
        raise ValueError(f"clip must be (T,C,H,W), got shape {clip.shape}")
    t, c, h, w = clip.shape
    if c != cfg.in_channels:
        raise ValueError(f"clip has {c} channels, config says {cfg.in_channels}")
    if h < 8 or w < 8:
        raise ValueError(f"input frames must be at least 8x8, got {(h, w)}")
    x = tt.transpose(clip, (1, 0, 2, 3))                    # (C,T,H,W)
    for i in range(len(cfg.stage_channels)):
        x = tt.conv3d(x, params[f"stage{i}.conv.w"], params[f"stage{i}.conv.b"])
        x = tt.gelu(x)
        if use_gsf:
            x = gsf_forward(x, cfg.gsf_config(i), params, prefix=f"stage{i}.gsf")
        x = _avg_pool2(x)
    feature = tt.tmean(x, axis=(1, 2, 3))                   # (C_last,)
    return multitask_heads(feature, params)


class ToyGsfBackbone:
    """Config + parameter bundle with the trainer/estimator interface."""

    def __init__(self, cfg: ToyBackboneConfig):
        self.cfg = cfg

    @property
    def class_counts(self) -> tuple[int, int, int]:
        return self.cfg.class_counts

    def init_params(self, seed: int) -> dict[str, Tensor]:
        return init_backbone_params(self.cfg, seed)

    def forward(self, clip: Tensor, params: dict[str, Tensor]) -> PredictionScores:
        return toy_backbone_forward(clip, self.cfg, params)
