"""JSON harness configuration.

A config file is a UTF-8 JSON object with up to five sections — ``model``,
``sampling``, ``views``, ``train``, ``ensemble`` — each optional and each
validated strictly: unknown keys anywhere are rejected.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .gsf import ToyBackboneConfig
from .sampling import SamplingSpec, ViewSpec
from .train import TrainSpec
from .vit import XViTConfig

__all__ = ["ModelConfig", "HarnessConfig", "load_config", "parse_config"]

MODEL_KINDS = ("gsf_toy", "xvit_toy")

_MODEL_KEYS = {
    "gsf_toy": {"kind", "stage_channels", "fusion"},
    "xvit_toy": {"kind", "layers", "heads", "embed_dim", "patch", "t_w",
                 "frames", "image_size"},
}
_SAMPLING_KEYS = {"frames", "mode", "seed"}
_VIEWS_KEYS = {"clips_per_video", "crops_per_frame"}
_TRAIN_KEYS = {"base_lr", "batch_size", "epochs", "momentum", "warmup_steps"}
_ENSEMBLE_KEYS = {"members"}
_TOP_KEYS = {"model", "sampling", "views", "train", "ensemble"}


def _check_keys(section: str, given: dict, allowed: set[str]) -> None:
    unknown = set(given) - allowed
    if unknown:
        raise ValueError(f"unknown key(s) in '{section}': {sorted(unknown)}; "
                         f"allowed: {sorted(allowed)}")


@dataclass(frozen=True)
class ModelConfig:
    kind: str
    options: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in MODEL_KINDS:
            raise ValueError(f"model kind must be one of {MODEL_KINDS}, got {self.kind!r}")

    @classmethod
    def from_dict(cls, d: dict, section: str = "model") -> "ModelConfig":
        kind = d.get("kind")
        if kind not in MODEL_KINDS:
            raise ValueError(f"'{section}' needs \"kind\" in {MODEL_KINDS}, got {kind!r}")
        _check_keys(section, d, _MODEL_KEYS[kind])
        options = {k: v for k, v in d.items() if k != "kind"}
        if "stage_channels" in options:
            options["stage_channels"] = tuple(options["stage_channels"])
        return cls(kind=kind, options=options)

    def build(self, class_counts: tuple[int, int, int]):
        """Instantiate the configured model for a given label space."""
        from .gsf import ToyGsfBackbone
        from .vit import VideoTransformer
        if self.kind == "gsf_toy":
            return ToyGsfBackbone(ToyBackboneConfig(class_counts=class_counts,
                                                    **self.options))
        return VideoTransformer(XViTConfig.toy(class_counts=class_counts,
                                               **self.options))

    def default_train_spec(self, epochs: int | None = None) -> TrainSpec:
        base = TrainSpec.gsf_toy() if self.kind == "gsf_toy" else TrainSpec.xvit_toy()
        if epochs is None:
            return base
        return TrainSpec(base_lr=base.base_lr, batch_size=base.batch_size,
                         epochs=epochs, momentum=base.momentum)


@dataclass
class HarnessConfig:
    model: ModelConfig
    sampling: SamplingSpec
    views: ViewSpec
    train: TrainSpec | None
    ensemble: list[ModelConfig]


def parse_config(raw: dict) -> HarnessConfig:
    _check_keys("top level", raw, _TOP_KEYS)

    model_d = raw.get("model", {"kind": "gsf_toy"})
    model = ModelConfig.from_dict(model_d)

    sampling_d = dict(raw.get("sampling", {}))
    _check_keys("sampling", sampling_d, _SAMPLING_KEYS)
    sampling = SamplingSpec(**sampling_d)

    views_d = dict(raw.get("views", {}))
    _check_keys("views", views_d, _VIEWS_KEYS)
    views = ViewSpec(**views_d)

    train = None
    if "train" in raw:
        train_d = dict(raw["train"])
        _check_keys("train", train_d, _TRAIN_KEYS)
        train = TrainSpec(**train_d)

    members_raw = raw.get("ensemble", {})
    if members_raw:
        _check_keys("ensemble", members_raw, _ENSEMBLE_KEYS)
        members = [ModelConfig.from_dict(m, section=f"ensemble.members[{i}]")
                   for i, m in enumerate(members_raw.get("members", []))]
    else:
        members = [ModelConfig.from_dict({"kind": "gsf_toy"}),
                   ModelConfig.from_dict({"kind": "xvit_toy"})]
    if not members:
        raise ValueError("'ensemble.members' must list at least one model")
    return HarnessConfig(model=model, sampling=sampling, views=views,
                         train=train, ensemble=members)


def load_config(path) -> HarnessConfig:
    with open(path, "r", encoding="utf-8") as fh:
        raw = json.load(fh)
    if not isinstance(raw, dict):
        raise ValueError("config file must contain a JSON object")
    return parse_config(raw)
