"""Closed-form helpers for batches of 2x2 matrices."""
from __future__ import annotations

import numpy as np

# below this |q| the hyperbolic/trig factors are replaced by their Taylor series
_SERIES_CUTOFF = 1e-6


def expm2(m: np.ndarray) -> np.ndarray:
    """Matrix exponential of one or many 2x2 matrices.

    Uses ``exp(M) = exp(s) (c(q) I + d(q) N)`` with ``s = tr(M)/2``,
    ``N = M - s I`` and ``N @ N = q I``, where ``c = cosh(sqrt q)`` and
    ``d = sinh(sqrt q)/sqrt q`` (continued analytically for ``q < 0``).
    Works on arrays of shape ``(..., 2, 2)``.
    """
    m = np.asarray(m, dtype=float)
    a = m[..., 0, 0]
    b = m[..., 0, 1]
    c = m[..., 1, 0]
    d = m[..., 1, 1]
    s = 0.5 * (a + d)
    h = 0.5 * (a - d)
    q = h * h + b * c

    small = np.abs(q) < _SERIES_CUTOFF
    rq = np.sqrt(np.abs(q))
    with np.errstate(invalid="ignore", divide="ignore"):
        ch = np.where(q >= 0, np.cosh(rq), np.cos(rq))
        sh = np.where(q >= 0, np.sinh(rq), np.sin(rq)) / rq
    ch = np.where(small, 1.0 + q / 2.0 + q * q / 24.0, ch)
    sh = np.where(small, 1.0 + q / 6.0 + q * q / 120.0, sh)

    es = np.exp(s)
    out = np.empty(m.shape, dtype=float)
    out[..., 0, 0] = es * (ch + sh * h)
    out[..., 0, 1] = es * sh * b
    out[..., 1, 0] = es * sh * c
    out[..., 1, 1] = es * (ch - sh * h)
    return out


def matmul2(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Batched 2x2 product written out explicitly (avoids BLAS dispatch per matrix)."""
    out = np.empty(np.broadcast_shapes(x.shape, y.shape), dtype=float)
    out[..., 0, 0] = x[..., 0, 0] * y[..., 0, 0] + x[..., 0, 1] * y[..., 1, 0]
    out[..., 0, 1] = x[..., 0, 0] * y[..., 0, 1] + x[..., 0, 1] * y[..., 1, 1]
    out[..., 1, 0] = x[..., 1, 0] * y[..., 0, 0] + x[..., 1, 1] * y[..., 1, 0]
    out[..., 1, 1] = x[..., 1, 0] * y[..., 0, 1] + x[..., 1, 1] * y[..., 1, 1]
    return out
