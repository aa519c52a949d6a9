"""Space-time mixing attention.

One attention head sees a video as a (T, S, d_h) grid of queries, keys and
values: T frames, S spatial tokens per frame, d_h channels.  Plain spatial
attention lets a query at (s, t) attend over the S tokens of its own frame.
The space-time mixing variant keeps that S-way attention but rebuilds each
key and value from a window of neighboring frames: the d_h channels are
partitioned across temporal offsets delta in [-t_w, +t_w], and channel c of
the mixed key at (s', t) is copied from frame t + delta(c) (clamped to the
video).  Cost stays linear in T, unlike joint space-time attention whose
score matrix is (T*S) x (T*S).

``stm_attention`` is the production kernel (vectorized, differentiable,
MAC-counted); ``eq1_reference`` recomputes the same definition with scalar
loops and serves as its oracle.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import math

import numpy as np

from .tensor import (
    Tensor,
    matmul,
    mul,
    reshape,
    softmax_lastdim,
    take_flat,
    transpose,
)

__all__ = [
    "ChannelPlan",
    "TokenField",
    "build_channel_plan",
    "assemble_mixed_kv",
    "stm_attention",
    "eq1_reference",
    "spatial_attention",
    "full_st_attention",
]


# ---------------------------------------------------------------------------
# Channel plan
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ChannelPlan:
    """Partition of the d_h head channels across temporal offsets.

    ``assignment[i]`` lists the channels gathered from offset ``i - t_w``;
    the 2*t_w+1 lists are disjoint, sorted, and together cover [0, d_h).
    """

    t_w: int
    assignment: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        if self.t_w < 0:
            raise ValueError("temporal window radius must be >= 0")
        if len(self.assignment) != 2 * self.t_w + 1:
            raise ValueError(
                f"plan needs {2 * self.t_w + 1} offset lists, got {len(self.assignment)}")
        seen: set[int] = set()
        for chans in self.assignment:
            if list(chans) != sorted(chans):
                raise ValueError("channel lists must be sorted ascending")
            if seen & set(chans):
                raise ValueError("channel lists must be disjoint")
            seen |= set(chans)
        if seen != set(range(len(seen))):
            raise ValueError("channel lists must cover [0, d_h) exactly")

    @property
    def d_h(self) -> int:
        return sum(len(chans) for chans in self.assignment)

    def offsets(self) -> range:
        return range(-self.t_w, self.t_w + 1)

    def channels(self, offset: int) -> tuple[int, ...]:
        return self.assignment[offset + self.t_w]

    def offset_of_channel(self) -> np.ndarray:
        """Vector mapping channel index -> owning temporal offset."""
        out = np.empty(self.d_h, dtype=np.int64)
        for offset in self.offsets():
            out[list(self.channels(offset))] = offset
        return out

    def to_text(self) -> str:
        lines = [f"offset {offset}: " + ",".join(str(c) for c in self.channels(offset))
                 for offset in self.offsets()]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "ChannelPlan":
        rows: list[tuple[int, tuple[int, ...]]] = []
        for line in text.splitlines():
            line = line.strip()
            if not line:
                continue
            if not line.startswith("offset "):
                raise ValueError(f"bad channel-plan line: {line!r}")
            head, _, tail = line.partition(":")
            offset = int(head[len("offset "):])
            chans = tuple(int(c) for c in tail.strip().split(",")) if tail.strip() else ()
            rows.append((offset, chans))
        rows.sort(key=lambda r: r[0])
        offsets = [r[0] for r in rows]
        t_w = max(abs(o) for o in offsets)
        if offsets != list(range(-t_w, t_w + 1)):
            raise ValueError(f"channel plan offsets must be contiguous, got {offsets}")
        return cls(t_w=t_w, assignment=tuple(r[1] for r in rows))


def build_channel_plan(d_h: int, t_w: int) -> ChannelPlan:
    """Contiguous equal blocks in offset order; remainder goes to offset 0.

    d_h=6, t_w=1 gives {-1: [0,1], 0: [2,3], +1: [4,5]}; d_h=64, t_w=1 gives
    block sizes (21, 22, 21) with the spare channel on the current frame.
    """
    n_offsets = 2 * t_w + 1
    if d_h < n_offsets:
        raise ValueError(f"d_h={d_h} cannot host a window of {n_offsets} offsets")
    base, rem = divmod(d_h, n_offsets)
    sizes = [base] * n_offsets
    sizes[t_w] += rem
    assignment = []
    start = 0
    for size in sizes:
        assignment.append(tuple(range(start, start + size)))
        start += size
    return ChannelPlan(t_w=t_w, assignment=tuple(assignment))


# ---------------------------------------------------------------------------
# Token field
# ---------------------------------------------------------------------------

@dataclass
class TokenField:
    """Per-head query/key/value grids, each of shape (T, S, d_h).

    Multi-head models hold one stacked (H, T, S, d_h) array per projection
    and run the same kernel over the leading axis; this type is the
    single-head unit the attention definition is written in.
    """

    q: Tensor
    k: Tensor
    v: Tensor

    def __post_init__(self):
        for name in ("q", "k", "v"):
            val = getattr(self, name)
            if not isinstance(val, Tensor):
                object.__setattr__(self, name, Tensor(val))
        if not (self.q.shape == self.k.shape == self.v.shape):
            raise ValueError(
                f"q/k/v shapes differ: {self.q.shape}, {self.k.shape}, {self.v.shape}")
        if self.q.ndim != 3:
            raise ValueError(f"token field must be (T, S, d_h), got shape {self.q.shape}")

    @property
    def frames(self) -> int:
        return self.q.shape[0]

    @property
    def tokens(self) -> int:
        return self.q.shape[1]

    @property
    def d_h(self) -> int:
        return self.q.shape[2]


# ---------------------------------------------------------------------------
# Mixed key/value assembly
# ---------------------------------------------------------------------------

@lru_cache(maxsize=256)
def _mixing_index(t: int, s: int, plan: ChannelPlan) -> np.ndarray:
    """Flat gather index of shape (T, S, d_h) implementing the channel mix.

    Entry [t, s', c] points at (clamp(t + offset(c)), s', c) in a (T, S, d_h)
    array, so every output channel stays aligned with its input channel.
    """
    d_h = plan.d_h
    offset_of = plan.offset_of_channel()                       # (d_h,)
    frames = np.arange(t).reshape(t, 1, 1)
    src_t = np.clip(frames + offset_of.reshape(1, 1, d_h), 0, t - 1)
    tokens = np.arange(s).reshape(1, s, 1)
    chans = np.arange(d_h).reshape(1, 1, d_h)
    idx = (src_t * s + tokens) * d_h + chans
    idx.setflags(write=False)
    return idx


def assemble_mixed_kv(field: TokenField, plan: ChannelPlan, t: int, s: int
                      ) -> tuple[np.ndarray, np.ndarray]:
    """Mixed key/value d_h-vectors for spatial location ``s`` as seen from
    query frame ``t``: channel c comes from frame clamp(t + offset(c)).
    """
    if not 0 <= t < field.frames:
        raise ValueError(f"frame index {t} out of range [0, {field.frames})")
    if not 0 <= s < field.tokens:
        raise ValueError(f"token index {s} out of range [0, {field.tokens})")
    if plan.d_h != field.d_h:
        raise ValueError(f"plan is for d_h={plan.d_h}, field has d_h={field.d_h}")
    k_tilde = np.empty(field.d_h)
    v_tilde = np.empty(field.d_h)
    for offset in plan.offsets():
        src = min(max(t + offset, 0), field.frames - 1)
        chans = list(plan.channels(offset))
        k_tilde[chans] = field.k.data[src, s, chans]
        v_tilde[chans] = field.v.data[src, s, chans]
    return k_tilde, v_tilde


def _mixed_tensor(x: Tensor, plan: ChannelPlan) -> Tensor:
    """Apply the channel mix to a (..., T, S, d_h) tensor (differentiable)."""
    t, s, d_h = x.shape[-3:]
    idx = _mixing_index(t, s, plan)
    lead = x.shape[:-3]
    if lead:
        n_lead = int(np.prod(lead, dtype=np.int64))
        block = t * s * d_h
        idx = idx.reshape(1, t, s, d_h) + (np.arange(n_lead) * block).reshape(-1, 1, 1, 1)
        idx = idx.reshape(lead + (t, s, d_h))
    return take_flat(x, idx)


# ---------------------------------------------------------------------------
# Attention kernels
# ---------------------------------------------------------------------------

def _batched_attention(q: Tensor, k: Tensor, v: Tensor, return_weights: bool):
    """Scaled dot-product attention over the second-to-last axis.

    Inputs are (..., S, d_h) stacks; scores are softmaxed over the key axis.
    """
    d_h = q.shape[-1]
    scores = mul(matmul(q, transpose(k, tuple(range(k.ndim - 2)) + (k.ndim - 1, k.ndim - 2))),
                 1.0 / math.sqrt(d_h))
    weights = softmax_lastdim(scores)
    out = matmul(weights, v)
    if return_weights:
        return out, weights.numpy()
    return out


def stm_attention(field: TokenField, plan: ChannelPlan, return_weights: bool = False):
    """Space-time mixing attention output, shape (T, S, d_h).

    Each query (s, t) attends over the S spatial locations of its frame,
    scoring against channel-mixed keys and mixing channel-mixed values.
    MACs grow as 2*T*S^2*d_h.
    """
    if plan.d_h != field.d_h:
        raise ValueError(f"plan is for d_h={plan.d_h}, field has d_h={field.d_h}")
    k_tilde = _mixed_tensor(field.k, plan)
    v_tilde = _mixed_tensor(field.v, plan)
    return _batched_attention(field.q, k_tilde, v_tilde, return_weights)


def stm_attention_stack(q: Tensor, k: Tensor, v: Tensor, plan: ChannelPlan) -> Tensor:
    """Multi-head form of :func:`stm_attention` over (H, T, S, d_h) stacks."""
    if q.shape != k.shape or q.shape != v.shape:
        raise ValueError(f"q/k/v shapes differ: {q.shape}, {k.shape}, {v.shape}")
    if q.shape[-1] != plan.d_h:
        raise ValueError(f"plan is for d_h={plan.d_h}, stack has d_h={q.shape[-1]}")
    k_tilde = _mixed_tensor(k, plan)
    v_tilde = _mixed_tensor(v, plan)
    return _batched_attention(q, k_tilde, v_tilde, False)


def spatial_attention(field: TokenField, return_weights: bool = False):
    """Per-frame attention: the t_w=0 window collapse of stm_attention."""
    return stm_attention(field, build_channel_plan(field.d_h, 0), return_weights)


def full_st_attention(field: TokenField, return_weights: bool = False):
    """Joint space-time attention: every token attends over all T*S tokens.

    Keys and values are unmodified.  MACs grow as 2*T^2*S^2*d_h, quadratic
    in the frame count; this is the baseline the mixing design avoids.
    """
    t, s, d_h = field.q.shape
    q = reshape(field.q, (t * s, d_h))
    k = reshape(field.k, (t * s, d_h))
    v = reshape(field.v, (t * s, d_h))
    out = _batched_attention(q, k, v, return_weights)
    if return_weights:
        y, w = out
        return reshape(y, (t, s, d_h)), w
    return reshape(out, (t, s, d_h))


# ---------------------------------------------------------------------------
# Loop reference (oracle)
# ---------------------------------------------------------------------------

def eq1_reference(field: TokenField, plan: ChannelPlan) -> np.ndarray:
    """Scalar-loop transcription of the mixing-attention definition.

    No vectorized shortcuts: gathers, dot products and the softmax are all
    explicit loops.  Used as the equivalence oracle for stm_attention.
    """
    if plan.d_h != field.d_h:
        raise ValueError(f"plan is for d_h={plan.d_h}, field has d_h={field.d_h}")
    t_n, s_n, d_h = field.q.shape
    q = field.q.data
    k = field.k.data
    v = field.v.data
    scale = 1.0 / math.sqrt(d_h)
    y = np.zeros((t_n, s_n, d_h))
    for t in range(t_n):
        # mixed keys/values for this query frame, gathered index by index
        k_mix = [[0.0] * d_h for _ in range(s_n)]
        v_mix = [[0.0] * d_h for _ in range(s_n)]
        for s2 in range(s_n):
            for offset in plan.offsets():
                src = t + offset
                if src < 0:
                    src = 0
                if src > t_n - 1:
                    src = t_n - 1
                for c in plan.channels(offset):
                    k_mix[s2][c] = float(k[src, s2, c])
                    v_mix[s2][c] = float(v[src, s2, c])
        for s1 in range(s_n):
            scores = []
            for s2 in range(s_n):
                dot = 0.0
                for c in range(d_h):
                    dot += float(q[t, s1, c]) * k_mix[s2][c]
                scores.append(dot * scale)
            peak = max(scores)
            exps = [math.exp(sc - peak) for sc in scores]
            total = sum(exps)
            weights = [e / total for e in exps]
            for s2 in range(s_n):
                w = weights[s2]
                for c in range(d_h):
                    y[t, s1, c] += w * v_mix[s2][c]
    return y
