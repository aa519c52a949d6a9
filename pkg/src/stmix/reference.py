"""Scalar-loop reference implementations used as correctness oracles.

These deliberately avoid every vectorized shortcut the production ops use;
agreement within 1e-12 on seeded inputs is the acceptance bar for the
optimized paths.  The attention-level oracle lives next to its kernel as
:func:`stmix.attention.eq1_reference`.
"""

from __future__ import annotations

import numpy as np

__all__ = ["matmul_loops", "conv3d_loops"]


def matmul_loops(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Triple-loop matrix product."""
    m, k = a.shape
    k2, n = b.shape
    if k != k2:
        raise ValueError(f"inner dims differ: {a.shape} vs {b.shape}")
    out = np.zeros((m, n))
    for i in range(m):
        for j in range(n):
            acc = 0.0
            for t in range(k):
                acc += float(a[i, t]) * float(b[t, j])
            out[i, j] = acc
    return out


def conv3d_loops(x: np.ndarray, kernel: np.ndarray,
                 bias: np.ndarray | None = None) -> np.ndarray:
    """Six-nested-loop "same"-padded cross-correlation."""
    c_out, c_in, kt, kh, kw = kernel.shape
    _, t, h, w = x.shape
    out = np.zeros((c_out, t, h, w))
    for o in range(c_out):
        for tt in range(t):
            for hh in range(h):
                for ww in range(w):
                    acc = 0.0 if bias is None else float(bias[o])
                    for i in range(c_in):
                        for dt in range(kt):
                            for dh in range(kh):
                                for dw in range(kw):
                                    ts = tt + dt - kt // 2
                                    hs = hh + dh - kh // 2
                                    ws = ww + dw - kw // 2
                                    if 0 <= ts < t and 0 <= hs < h and 0 <= ws < w:
                                        acc += float(x[i, ts, hs, ws]) * float(kernel[o, i, dt, dh, dw])
                    out[o, tt, hh, ww] = acc
    return out
