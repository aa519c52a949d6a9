"""MAC-scaling experiments: mixing attention is linear in the frame count,
joint space-time attention quadratic."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .attention import TokenField, build_channel_plan, full_st_attention, stm_attention
from .tensor import MacCounter, Tensor, counting, no_grad

__all__ = ["ScalingResult", "mac_scaling_experiment"]

ATTENTION_MODELS = ("stm", "full")


@dataclass
class ScalingResult:
    model: str
    tokens: int
    head_dim: int
    rows: list[tuple[int, int]]          # (frames, macs)
    slope: float

    def csv_rows(self) -> list[str]:
        return [f"{self.model},{t},{self.tokens},{self.head_dim},{macs}"
                for t, macs in self.rows]


def mac_scaling_experiment(model: str, t_list, tokens: int, head_dim: int,
                           t_w: int = 1, seed: int = 0) -> ScalingResult:
    """Run one attention forward per frame count with a fresh MAC counter
    and fit the log-log slope of MACs against T by least squares.
    """
    if model not in ATTENTION_MODELS:
        raise ValueError(f"model must be one of {ATTENTION_MODELS}, got {model!r}")
    t_list = sorted(int(t) for t in t_list)
    if len(t_list) < 3:
        raise ValueError(f"need at least 3 frame counts, got {len(t_list)}")
    rng = np.random.default_rng(seed)
    plan = build_channel_plan(head_dim, t_w)
    rows: list[tuple[int, int]] = []
    for t in t_list:
        field = TokenField(
            q=Tensor(rng.standard_normal((t, tokens, head_dim))),
            k=Tensor(rng.standard_normal((t, tokens, head_dim))),
            v=Tensor(rng.standard_normal((t, tokens, head_dim))),
        )
        counter = MacCounter()
        with no_grad(), counting(counter):
            if model == "stm":
                stm_attention(field, plan)
            else:
                full_st_attention(field)
        rows.append((t, counter.macs))
    slope = float(np.polyfit(np.log([r[0] for r in rows]),
                             np.log([r[1] for r in rows]), 1)[0])
    return ScalingResult(model=model, tokens=tokens, head_dim=head_dim,
                         rows=rows, slope=slope)
