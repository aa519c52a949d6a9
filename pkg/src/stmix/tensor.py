"""Dense float64 tensors with reverse-mode autodiff and MAC accounting.

The engine is deliberately small: it provides exactly the operations the
attention and gate-shift-fuse math needs, each with a hand-written backward
rule.  Ops build a computation graph out of backward closures; calling
``backward()`` on a scalar runs reverse accumulation over a topological
order of that graph.  The graph is per-computation and garbage-collected
with its tensors, so recorded values are never mutated in place.

Multiply-accumulate (MAC) counting is opt-in: ops report MACs to every
counter currently opened with :func:`counting`.  Only matrix products count
(convolution and attention are built on them), per one fixed formula per op.
"""

from __future__ import annotations

import math
from contextlib import contextmanager

import numpy as np

__all__ = [
    "Tensor",
    "MacCounter",
    "counting",
    "no_grad",
    "gradients",
    "grad_check",
    "matmul",
    "softmax_lastdim",
    "layer_norm",
    "conv3d",
    "concat",
    "pad_axis",
    "slice_axis",
    "take_flat",
    "save_tensor_txt",
    "load_tensor_txt",
    "save_checkpoint",
    "load_checkpoint",
]


# ---------------------------------------------------------------------------
# MAC counting
# ---------------------------------------------------------------------------

class MacCounter:
    """Counts scalar multiply-accumulates since construction or last reset.

    Single-owner: one counter per worker; merge by adding ``macs`` fields.
    """

    __slots__ = ("macs",)

    def __init__(self) -> None:
        self.macs = 0

    def add(self, n: int) -> None:
        self.macs += int(n)

    def reset(self) -> None:
        self.macs = 0

    def __repr__(self) -> str:
        return f"MacCounter(macs={self.macs})"


_ACTIVE_COUNTERS: list[MacCounter] = []


@contextmanager
def counting(counter: MacCounter | None = None):
    """Open a MAC-counting scope; nested scopes all receive the counts."""
    c = counter if counter is not None else MacCounter()
    _ACTIVE_COUNTERS.append(c)
    try:
        yield c
    finally:
        _ACTIVE_COUNTERS.pop()


def _count_macs(n: int) -> None:
    if _ACTIVE_COUNTERS:
        for c in _ACTIVE_COUNTERS:
            c.add(n)


# ---------------------------------------------------------------------------
# Grad mode
# ---------------------------------------------------------------------------

_GRAD_ENABLED = True


@contextmanager
def no_grad():
    """Disable graph recording inside the block (forward values only)."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


# ---------------------------------------------------------------------------
# Tensor
# ---------------------------------------------------------------------------

class Tensor:
    """Immutable dense float64 array plus an optional autodiff graph node.

    ``data`` is row-major and write-protected after construction; every
    extent must be >= 1 (zero-size tensors are rejected).  ``grad`` is
    populated by :meth:`backward` for tensors with ``requires_grad=True``.
    """

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward_fn")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.array(data, dtype=np.float64, order="C")
        if arr.size == 0:
            raise ValueError(f"zero-size tensor rejected (shape {arr.shape})")
        arr.setflags(write=False)
        self.data = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple[Tensor, ...] = ()
        self._backward_fn = None

    # -- construction used by ops (skips the copy) --
    @classmethod
    def _result(cls, arr: np.ndarray, parents, backward_fn) -> "Tensor":
        out = cls.__new__(cls)
        arr = np.ascontiguousarray(arr, dtype=np.float64)
        arr.setflags(write=False)
        out.data = arr
        out.grad = None
        if backward_fn is not None:
            out.requires_grad = True
            out._parents = tuple(parents)
            out._backward_fn = backward_fn
        else:
            out.requires_grad = False
            out._parents = ()
            out._backward_fn = None
        return out

    # -- basic properties --

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ValueError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(()))

    def numpy(self) -> np.ndarray:
        """Writable copy of the values."""
        return np.array(self.data)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # -- graph helpers --

    def _accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def backward(self) -> None:
        """Reverse accumulation from this scalar into all reachable leaves."""
        if self.data.size != 1:
            raise ValueError(f"backward() needs a scalar loss, got shape {self.shape}")
        topo: list[Tensor] = []
        visited: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in visited:
                    stack.append((p, False))
        self._accumulate(np.ones_like(self.data))
        for node in reversed(topo):
            if node._backward_fn is not None:
                node._backward_fn(node.grad)

    # -- operator sugar --

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return add(neg(self), other)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            raise TypeError("tensor/tensor division is not part of the op set")
        return mul(self, 1.0 / float(other))

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    # -- method forms of common ops --

    def reshape(self, *shape):
        return reshape(self, *shape)

    def transpose(self, axes):
        return transpose(self, axes)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return tmean(self, axis=axis, keepdims=keepdims)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _tracking(*tensors: Tensor) -> bool:
    return _GRAD_ENABLED and any(t.requires_grad for t in tensors)


def _sum_to_shape(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Reduce a broadcast gradient back to ``shape``."""
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# Elementwise ops
# ---------------------------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out = a.data + b.data
    if not _tracking(a, b):
        return Tensor._result(out, (), None)

    def bwd(g):
        if a.requires_grad:
            a._accumulate(_sum_to_shape(g, a.shape))
        if b.requires_grad:
            b._accumulate(_sum_to_shape(g, b.shape))

    return Tensor._result(out, (a, b), bwd)


def sub(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out = a.data - b.data
    if not _tracking(a, b):
        return Tensor._result(out, (), None)

    def bwd(g):
        if a.requires_grad:
            a._accumulate(_sum_to_shape(g, a.shape))
        if b.requires_grad:
            b._accumulate(_sum_to_shape(-g, b.shape))

    return Tensor._result(out, (a, b), bwd)


def mul(a, b) -> Tensor:
    if not isinstance(b, Tensor) and np.isscalar(b):
        a = _as_tensor(a)
        s = float(b)
        out = a.data * s
        if not _tracking(a):
            return Tensor._result(out, (), None)

        def bwd_s(g):
            a._accumulate(g * s)

        return Tensor._result(out, (a,), bwd_s)

    a, b = _as_tensor(a), _as_tensor(b)
    out = a.data * b.data
    if not _tracking(a, b):
        return Tensor._result(out, (), None)

    def bwd(g):
        if a.requires_grad:
            a._accumulate(_sum_to_shape(g * b.data, a.shape))
        if b.requires_grad:
            b._accumulate(_sum_to_shape(g * a.data, b.shape))

    return Tensor._result(out, (a, b), bwd)


def neg(a) -> Tensor:
    a = _as_tensor(a)
    out = -a.data
    if not _tracking(a):
        return Tensor._result(out, (), None)

    def bwd(g):
        a._accumulate(-g)

    return Tensor._result(out, (a,), bwd)


def relu(a: Tensor) -> Tensor:
    """Kinked at 0: outside grad_check's supported input class there."""
    a = _as_tensor(a)
    out = np.maximum(a.data, 0.0)
    if not _tracking(a):
        return Tensor._result(out, (), None)
    mask = (a.data > 0.0).astype(np.float64)

    def bwd(g):
        a._accumulate(g * mask)

    return Tensor._result(out, (a,), bwd)


def sigmoid(a: Tensor) -> Tensor:
    a = _as_tensor(a)
    x = a.data
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    if not _tracking(a):
        return Tensor._result(out, (), None)
    y = out

    def bwd(g):
        a._accumulate(g * y * (1.0 - y))

    return Tensor._result(out, (a,), bwd)


_GELU_C = math.sqrt(2.0 / math.pi)


def gelu(a: Tensor) -> Tensor:
    """Smooth tanh-form GELU (no kinks, so grad_check applies)."""
    a = _as_tensor(a)
    x = a.data
    x2 = x * x
    th = np.tanh(_GELU_C * (x + 0.044715 * x2 * x))
    out = 0.5 * x * (1.0 + th)
    if not _tracking(a):
        return Tensor._result(out, (), None)

    def bwd(g):
        sech2 = 1.0 - th * th
        d = 0.5 * (1.0 + th) + 0.5 * x * sech2 * _GELU_C * (1.0 + 3 * 0.044715 * x2)
        a._accumulate(g * d)

    return Tensor._result(out, (a,), bwd)


# ---------------------------------------------------------------------------
# Reductions and shape ops
# ---------------------------------------------------------------------------

def tsum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    a = _as_tensor(a)
    out = a.data.sum(axis=axis, keepdims=keepdims)
    if not _tracking(a):
        return Tensor._result(out, (), None)
    in_shape = a.shape

    def bwd(g):
        if axis is None:
            a._accumulate(np.broadcast_to(g.reshape(()), in_shape).copy()
                          if not keepdims else np.broadcast_to(g, in_shape).copy())
            return
        gg = g
        if not keepdims:
            gg = np.expand_dims(g, axis=axis)
        a._accumulate(np.broadcast_to(gg, in_shape).copy())

    return Tensor._result(out, (a,), bwd)


def tmean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    a = _as_tensor(a)
    if axis is None:
        n = a.size
    else:
        axes = axis if isinstance(axis, tuple) else (axis,)
        n = 1
        for ax in axes:
            n *= a.shape[ax]
    return mul(tsum(a, axis=axis, keepdims=keepdims), 1.0 / n)


def reshape(a: Tensor, *shape) -> Tensor:
    a = _as_tensor(a)
    if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
        shape = tuple(shape[0])
    out = a.data.reshape(shape)
    if not _tracking(a):
        return Tensor._result(out, (), None)
    in_shape = a.shape

    def bwd(g):
        a._accumulate(g.reshape(in_shape))

    return Tensor._result(out, (a,), bwd)


def transpose(a: Tensor, axes) -> Tensor:
    a = _as_tensor(a)
    axes = tuple(axes)
    out = a.data.transpose(axes)
    if not _tracking(a):
        return Tensor._result(out, (), None)
    inv = tuple(np.argsort(axes))

    def bwd(g):
        a._accumulate(g.transpose(inv))

    return Tensor._result(out, (a,), bwd)


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = [_as_tensor(t) for t in tensors]
    out = np.concatenate([t.data for t in tensors], axis=axis)
    if not _tracking(*tensors):
        return Tensor._result(out, (), None)
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def bwd(g):
        pieces = np.split(g, splits, axis=axis)
        for t, piece in zip(tensors, pieces):
            if t.requires_grad:
                t._accumulate(piece)

    return Tensor._result(out, tuple(tensors), bwd)


def pad_axis(a: Tensor, axis: int, before: int, after: int) -> Tensor:
    """Zero-pad one axis."""
    a = _as_tensor(a)
    if before < 0 or after < 0:
        raise ValueError("pad widths must be non-negative")
    widths = [(0, 0)] * a.ndim
    widths[axis] = (before, after)
    out = np.pad(a.data, widths)
    if not _tracking(a):
        return Tensor._result(out, (), None)
    n = a.shape[axis]

    def bwd(g):
        sl = [slice(None)] * g.ndim
        sl[axis] = slice(before, before + n)
        a._accumulate(g[tuple(sl)])

    return Tensor._result(out, (a,), bwd)


def slice_axis(a: Tensor, axis: int, start: int, stop: int) -> Tensor:
    a = _as_tensor(a)
    sl = [slice(None)] * a.ndim
    sl[axis] = slice(start, stop)
    out = a.data[tuple(sl)]
    if not _tracking(a):
        return Tensor._result(out, (), None)
    in_shape = a.shape

    def bwd(g):
        gx = np.zeros(in_shape)
        gx[tuple(sl)] = g
        a._accumulate(gx)

    return Tensor._result(out, (a,), bwd)


def take_flat(a: Tensor, flat_index: np.ndarray) -> Tensor:
    """Gather by flat (row-major) index; backward is scatter-add."""
    a = _as_tensor(a)
    idx = np.asarray(flat_index)
    if not np.issubdtype(idx.dtype, np.integer):
        raise TypeError("take_flat needs an integer index array")
    out = a.data.reshape(-1)[idx]
    if not _tracking(a):
        return Tensor._result(out, (), None)
    in_shape = a.shape

    def bwd(g):
        gx = np.zeros(a.data.size)
        np.add.at(gx, idx.reshape(-1), g.reshape(-1))
        a._accumulate(gx.reshape(in_shape))

    return Tensor._result(out, (a,), bwd)


# ---------------------------------------------------------------------------
# Matrix product (the only MAC source)
# ---------------------------------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product; 2-D, or stacked with identical leading batch dims.

    MACs += prod(batch) * m * n * k.
    """
    a, b = _as_tensor(a), _as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ValueError(f"matmul needs >=2-D operands, got shapes {a.shape} and {b.shape}")
    if a.ndim != b.ndim:
        raise ValueError(f"matmul rank mismatch for shapes {a.shape} and {b.shape}")
    if a.shape[:-2] != b.shape[:-2]:
        raise ValueError(f"matmul batch dims differ for shapes {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ValueError(f"matmul inner dims differ for shapes {a.shape} and {b.shape}")
    batch = int(np.prod(a.shape[:-2], dtype=np.int64)) if a.ndim > 2 else 1
    m, k = a.shape[-2], a.shape[-1]
    n = b.shape[-1]
    _count_macs(batch * m * n * k)
    out = a.data @ b.data
    if not _tracking(a, b):
        return Tensor._result(out, (), None)

    def bwd(g):
        if a.requires_grad:
            a._accumulate(g @ b.data.swapaxes(-1, -2))
        if b.requires_grad:
            b._accumulate(a.data.swapaxes(-1, -2) @ g)

    return Tensor._result(out, (a, b), bwd)


# ---------------------------------------------------------------------------
# Normalization / softmax
# ---------------------------------------------------------------------------

def softmax_lastdim(a: Tensor) -> Tensor:
    """Softmax over the last axis, max-subtracted for stability."""
    a = _as_tensor(a)
    x = a.data
    shifted = x - x.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=-1, keepdims=True)
    if not _tracking(a):
        return Tensor._result(out, (), None)
    y = out

    def bwd(g):
        dot = (g * y).sum(axis=-1, keepdims=True)
        a._accumulate(y * (g - dot))

    return Tensor._result(out, (a,), bwd)


def layer_norm(a: Tensor, eps: float = 1e-12) -> Tensor:
    """Normalize the last axis to zero mean / unit variance (no affine).

    The small default eps keeps post-norm variance within 1e-6 of 1 while
    still guarding the constant-slice case (output 0 there).
    """
    a = _as_tensor(a)
    x = a.data
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    out = xc * inv
    if not _tracking(a):
        return Tensor._result(out, (), None)
    y = out

    def bwd(g):
        gy_mean = g.mean(axis=-1, keepdims=True)
        gyy_mean = (g * y).mean(axis=-1, keepdims=True)
        a._accumulate(inv * (g - gy_mean - y * gyy_mean))

    return Tensor._result(out, (a,), bwd)


# ---------------------------------------------------------------------------
# 3-D convolution ("same" zero padding, cross-correlation)
# ---------------------------------------------------------------------------

def conv3d(x: Tensor, kernel: Tensor, bias: Tensor | None = None) -> Tensor:
    """Cross-correlate (C_in,T,H,W) with (C_out,C_in,kt,kh,kw), "same" output.

    Odd kernel extents only, zero padding.  Lowered to one im2col matrix
    product, so MACs += C_out*C_in*kt*kh*kw*T*H*W exactly; the backward
    pass folds the column gradient back with per-tap slice adds.
    """
    x, kernel = _as_tensor(x), _as_tensor(kernel)
    if x.ndim != 4:
        raise ValueError(f"conv3d input must be (C,T,H,W), got shape {x.shape}")
    if kernel.ndim != 5:
        raise ValueError(f"conv3d kernel must be (C_out,C_in,kt,kh,kw), got shape {kernel.shape}")
    c_out, c_in, kt, kh, kw = kernel.shape
    if x.shape[0] != c_in:
        raise ValueError(f"conv3d channel mismatch: input {x.shape} vs kernel {kernel.shape}")
    if kt % 2 == 0 or kh % 2 == 0 or kw % 2 == 0:
        raise ValueError(f"conv3d kernel extents must be odd, got {(kt, kh, kw)}")
    _, t, h, w = x.shape
    pt, ph, pw = kt // 2, kh // 2, kw // 2

    xp = np.pad(x.data, ((0, 0), (pt, pt), (ph, ph), (pw, pw)))
    windows = np.lib.stride_tricks.sliding_window_view(xp, (kt, kh, kw), axis=(1, 2, 3))
    cols = np.ascontiguousarray(windows.transpose(1, 2, 3, 0, 4, 5, 6)
                                ).reshape(t * h * w, c_in * kt * kh * kw)
    kmat = kernel.data.reshape(c_out, -1)
    _count_macs(c_out * c_in * kt * kh * kw * t * h * w)
    out_mat = cols @ kmat.T                                # (T*H*W, C_out)
    out = np.ascontiguousarray(out_mat.reshape(t, h, w, c_out).transpose(3, 0, 1, 2))
    if bias is not None:
        bias = _as_tensor(bias)
        if bias.shape != (c_out,):
            raise ValueError(f"conv3d bias must have shape ({c_out},), got {bias.shape}")
        out += bias.data.reshape(c_out, 1, 1, 1)

    parents = (x, kernel) if bias is None else (x, kernel, bias)
    if not _tracking(*parents):
        return Tensor._result(out, (), None)

    def bwd(g):
        g_mat = np.ascontiguousarray(g.transpose(1, 2, 3, 0)).reshape(t * h * w, c_out)
        if bias is not None and bias.requires_grad:
            bias._accumulate(g.sum(axis=(1, 2, 3)))
        if kernel.requires_grad:
            kernel._accumulate((g_mat.T @ cols).reshape(kernel.shape))
        if x.requires_grad:
            # taps-leading layout so each per-tap slice add is contiguous
            g_cols = (kmat.T @ g_mat.T).reshape(c_in, kt, kh, kw, t, h, w)
            g_pad = np.zeros_like(xp)
            for dt in range(kt):
                for dh in range(kh):
                    for dw in range(kw):
                        g_pad[:, dt:dt + t, dh:dh + h, dw:dw + w] += g_cols[:, dt, dh, dw]
            x._accumulate(g_pad[:, pt:pt + t, ph:ph + h, pw:pw + w])

    return Tensor._result(out, parents, bwd)


# ---------------------------------------------------------------------------
# Classification loss
# ---------------------------------------------------------------------------

def cross_entropy_logits(logits: Tensor, target: int) -> Tensor:
    """Softmax cross-entropy of a 1-D logit vector against a class index."""
    logits = _as_tensor(logits)
    if logits.ndim != 1:
        raise ValueError(f"cross_entropy_logits needs a 1-D logit vector, got shape {logits.shape}")
    n = logits.shape[0]
    target = int(target)
    if not 0 <= target < n:
        raise ValueError(f"target {target} out of range for {n} classes")
    z = logits.data
    m = z.max()
    lse = m + math.log(np.exp(z - m).sum())
    out = np.array(lse - z[target])
    if not _tracking(logits):
        return Tensor._result(out, (), None)

    def bwd(g):
        p = np.exp(z - m)
        p /= p.sum()
        p[target] -= 1.0
        logits._accumulate(float(np.asarray(g).reshape(())) * p)

    return Tensor._result(out, (logits,), bwd)


# ---------------------------------------------------------------------------
# Gradient utilities
# ---------------------------------------------------------------------------

def gradients(loss: Tensor, inputs) -> tuple[list[np.ndarray], list[bool]]:
    """Gradients of a scalar loss for each marked input.

    Returns (grads, reached).  An input the loss does not depend on gets a
    zero gradient and ``reached=False``.
    """
    inputs = list(inputs)
    for t in inputs:
        if not t.requires_grad:
            raise ValueError("all inputs passed to gradients() must have requires_grad=True")
    saved = [t.grad for t in inputs]
    for t in inputs:
        t.grad = None
    loss.backward()
    grads, reached = [], []
    for t, s in zip(inputs, saved):
        if t.grad is None:
            grads.append(np.zeros_like(t.data))
            reached.append(False)
        else:
            grads.append(t.grad)
            reached.append(True)
        t.grad = s
    return grads, reached


def grad_check(f, x, step: float = 1e-5) -> float:
    """Max relative error between analytic and central-difference gradients.

    ``f`` maps one tensor (or a list of tensors) to a scalar tensor and must
    be smooth at the evaluation point; functions with kinks (relu / clamp at
    the kink) are outside the supported input class.  The error metric per
    component is |analytic - numeric| / max(|analytic|, |numeric|, 1e-8).
    """
    xs = [x] if isinstance(x, Tensor) else list(x)
    leaves = [Tensor(t.data, requires_grad=True) for t in xs]

    out = f(*leaves)
    if not isinstance(out, Tensor) or out.data.size != 1:
        raise ValueError("grad_check needs a scalar-valued function")
    analytic, _ = gradients(out, leaves)

    def eval_at(values: list[np.ndarray]) -> float:
        with no_grad():
            r = f(*[Tensor(v) for v in values])
        return r.item()

    worst = 0.0
    for i, leaf in enumerate(leaves):
        base = [np.array(l.data) for l in leaves]
        flat = base[i].reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + step
            f_plus = eval_at(base)
            flat[j] = orig - step
            f_minus = eval_at(base)
            flat[j] = orig
            numeric = (f_plus - f_minus) / (2.0 * step)
            a = analytic[i].reshape(-1)[j]
            err = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
            worst = max(worst, err)
    return worst


# ---------------------------------------------------------------------------
# Text serialization (golden files and checkpoints)
# ---------------------------------------------------------------------------

def _format_tensor(t: Tensor) -> str:
    header = "shape: " + " ".join(str(d) for d in t.shape)
    flat = t.data.reshape(-1)
    body = "\n".join(" ".join(f"{v:.17g}" for v in flat[i:i + 8])
                     for i in range(0, flat.size, 8))
    return header + "\n" + body + "\n"


def save_tensor_txt(t: Tensor, path) -> None:
    """Dump: line 1 ``shape: d0 d1 ...``, then row-major %.17g floats."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(_format_tensor(t))


def _parse_tensor(lines: list[str], pos: int) -> tuple[Tensor, int]:
    header = lines[pos].strip()
    if not header.startswith("shape:"):
        raise ValueError(f"expected 'shape:' header at line {pos + 1}, got {header!r}")
    shape = tuple(int(s) for s in header[len("shape:"):].split())
    count = int(np.prod(shape, dtype=np.int64)) if shape else 1
    values: list[float] = []
    pos += 1
    while len(values) < count:
        if pos >= len(lines):
            raise ValueError("tensor dump truncated")
        values.extend(float(v) for v in lines[pos].split())
        pos += 1
    if len(values) != count:
        raise ValueError(f"tensor dump has {len(values)} values, expected {count}")
    return Tensor(np.array(values).reshape(shape)), pos


def load_tensor_txt(path) -> Tensor:
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln for ln in fh.read().splitlines() if ln.strip()]
    t, pos = _parse_tensor(lines, 0)
    if pos != len(lines):
        raise ValueError("trailing content after tensor dump")
    return t


def save_checkpoint(named: dict[str, Tensor], path) -> None:
    """Concatenated named tensor dumps, each preceded by a ``name:`` line."""
    with open(path, "w", encoding="utf-8") as fh:
        for name, t in named.items():
            fh.write(f"name: {name}\n")
            fh.write(_format_tensor(t))


def load_checkpoint(path) -> dict[str, Tensor]:
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln for ln in fh.read().splitlines() if ln.strip()]
    out: dict[str, Tensor] = {}
    pos = 0
    while pos < len(lines):
        header = lines[pos].strip()
        if not header.startswith("name:"):
            raise ValueError(f"expected 'name:' header at line {pos + 1}, got {header!r}")
        name = header[len("name:"):].strip()
        t, pos = _parse_tensor(lines, pos + 1)
        out[name] = t
    return out
