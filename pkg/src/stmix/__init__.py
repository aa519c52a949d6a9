"""Desk-scale video action recognition built from first principles.

Two spatio-temporal feature extractors — space-time mixing attention in a
ViT encoder, and gate-shift-fuse inside a small 2D CNN — plus multi-task
verb/noun/action heads, score ensembling, the multi-clip/multi-crop test
protocol, and MAC-accounted complexity experiments.  Everything runs on a
tiny float64 autodiff engine so results can be checked against scalar-loop
oracles and finite differences.
"""

from .attention import (
    ChannelPlan,
    TokenField,
    build_channel_plan,
    eq1_reference,
    full_st_attention,
    spatial_attention,
    stm_attention,
)
from .bench import mac_scaling_experiment
from .gsf import GsfConfig, ToyBackboneConfig, ToyGsfBackbone, gsf_forward, toy_backbone_forward
from .heads import (
    ActionVocab,
    PredictionScores,
    build_action_vocab,
    compose_action,
    ensemble_average,
    multitask_heads,
    multitask_loss,
)
from .metrics import MetricReport, evaluate_predictions, topk_accuracy
from .sampling import (
    SamplingSpec,
    ViewSpec,
    aggregate_views,
    generate_views,
    temporal_jitter,
    three_crops,
    uniform_sample,
)
from .synth import SynthDataset, SynthSpec, shuffle_frames, synth_videos
from .tensor import MacCounter, Tensor, counting, grad_check, gradients, no_grad
from .train import TrainSpec, train_toy
from .vit import VideoTransformer, XViTConfig, patchify, xvit_forward

__version__ = "0.1.0"

__all__ = [
    "ChannelPlan", "TokenField", "build_channel_plan", "eq1_reference",
    "full_st_attention", "spatial_attention", "stm_attention",
    "mac_scaling_experiment",
    "GsfConfig", "ToyBackboneConfig", "ToyGsfBackbone", "gsf_forward",
    "toy_backbone_forward",
    "ActionVocab", "PredictionScores", "build_action_vocab", "compose_action",
    "ensemble_average", "multitask_heads", "multitask_loss",
    "MetricReport", "evaluate_predictions", "topk_accuracy",
    "SamplingSpec", "ViewSpec", "aggregate_views", "generate_views",
    "temporal_jitter", "three_crops", "uniform_sample",
    "SynthDataset", "SynthSpec", "shuffle_frames", "synth_videos",
    "MacCounter", "Tensor", "counting", "grad_check", "gradients", "no_grad",
    "TrainSpec", "train_toy",
    "VideoTransformer", "XViTConfig", "patchify", "xvit_forward",
]
