"""Numeric kernels shared by every layer.

Tensors are plain ``numpy.ndarray`` objects in row-major (C) order.
Image batches use the ``(batch, height, width, channels)`` layout and
convolution kernels ``(kh, kw, c_in, c_out)``.
"""
from __future__ import annotations

import numpy as np

PRECISIONS = {"single": np.float32, "double": np.float64}


class NonFiniteError(FloatingPointError):
    """Raised when a computation produced NaN or Inf."""


def dtype_for(precision: str) -> np.dtype:
    try:
        return np.dtype(PRECISIONS[precision])
    except KeyError:
        raise ValueError(f"unknown precision {precision!r}; expected one of {sorted(PRECISIONS)}") from None


def check_finite(a: np.ndarray, what: str = "tensor") -> np.ndarray:
    if not np.all(np.isfinite(a)):
        raise NonFiniteError(f"{what} contains NaN or Inf")
    return a


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if a.ndim != 2 or b.ndim != 2:
        raise ValueError(f"matmul expects 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"inner dimensions disagree: {a.shape} x {b.shape}")
    return a @ b


def _pad_amounts(kh: int, kw: int, padding: str) -> tuple[tuple[int, int], tuple[int, int]]:
    if padding == "zero":
        return ((kh - 1) // 2, kh - 1 - (kh - 1) // 2), ((kw - 1) // 2, kw - 1 - (kw - 1) // 2)
    if padding == "none":
        return (0, 0), (0, 0)
    raise ValueError(f"unknown padding mode {padding!r}; expected 'zero' or 'none'")


def conv_output_hw(h: int, w: int, kh: int, kw: int, padding: str) -> tuple[int, int]:
    (pt, pb), (pl, pr) = _pad_amounts(kh, kw, padding)
    return h + pt + pb - kh + 1, w + pl + pr - kw + 1


def im2col(x: np.ndarray, kh: int, kw: int, padding: str) -> np.ndarray:
    """Expand a ``(n, h, w, c)`` batch into a ``(n*h'*w', kh*kw*c)`` patch matrix.

    Column order is ``(dy, dx, channel)``, matching ``kernel.reshape(-1, c_out)``.
    """
    (pt, pb), (pl, pr) = _pad_amounts(kh, kw, padding)
    n, h, w, c = x.shape
    if kh > h + pt + pb or kw > w + pl + pr:
        raise ValueError(f"kernel {kh}x{kw} larger than padded input {h + pt + pb}x{w + pl + pr}")
    xp = np.pad(x, ((0, 0), (pt, pb), (pl, pr), (0, 0))) if pt + pb + pl + pr else x
    win = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(1, 2))
    # win: (n, h', w', c, kh, kw) -> (n, h', w', kh, kw, c)
    ho, wo = win.shape[1], win.shape[2]
    return np.ascontiguousarray(win.transpose(0, 1, 2, 4, 5, 3)).reshape(n * ho * wo, kh * kw * c)


def col2im(cols: np.ndarray, x_shape: tuple, kh: int, kw: int, padding: str) -> np.ndarray:
    """Adjoint of :func:`im2col`: scatter-add patch gradients back onto the input."""
    (pt, pb), (pl, pr) = _pad_amounts(kh, kw, padding)
    n, h, w, c = x_shape
    ho, wo = conv_output_hw(h, w, kh, kw, padding)
    patches = cols.reshape(n, ho, wo, kh, kw, c)
    gp = np.zeros((n, h + pt + pb, w + pl + pr, c), dtype=cols.dtype)
    # fixed loop order keeps accumulation deterministic
    for dy in range(kh):
        for dx in range(kw):
            gp[:, dy:dy + ho, dx:dx + wo, :] += patches[:, :, :, dy, dx, :]
    return gp[:, pt:pt + h, pl:pl + w, :]


def _as_batch(x: np.ndarray) -> tuple[np.ndarray, bool]:
    if x.ndim == 3:
        return x[None], True
    if x.ndim == 4:
        return x, False
    raise ValueError(f"expected (h, w, c) or (n, h, w, c) input, got shape {x.shape}")


def conv2d(x: np.ndarray, k: np.ndarray, padding: str = "zero") -> np.ndarray:
    """Stride-1 2-D cross-correlation of ``x`` with kernel ``k``.

    ``x`` is ``(h, w, c_in)`` or ``(n, h, w, c_in)``; ``k`` is ``(kh, kw, c_in, c_out)``.
    """
    xb, single = _as_batch(x)
    if k.ndim != 4 or k.shape[2] != xb.shape[3]:
        raise ValueError(f"kernel {k.shape} does not match input channels {xb.shape[3]}")
    kh, kw, c_in, c_out = k.shape
    n, h, w, _ = xb.shape
    ho, wo = conv_output_hw(h, w, kh, kw, padding)
    cols = im2col(xb, kh, kw, padding)
    out = (cols @ k.reshape(kh * kw * c_in, c_out)).reshape(n, ho, wo, c_out)
    return out[0] if single else out


def maxpool2x2(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Non-overlapping 2x2 max pooling; odd trailing rows/columns are dropped.

    Returns the pooled tensor and, per output element, the flat index 0..3 of
    the winning position inside its window (first maximum on ties).
    """
    xb, single = _as_batch(x)
    n, h, w, c = xb.shape
    if h < 2 or w < 2:
        raise ValueError(f"maxpool2x2 needs spatial dims >= 2, got {h}x{w}")
    ho, wo = h // 2, w // 2
    blocks = xb[:, :2 * ho, :2 * wo, :].reshape(n, ho, 2, wo, 2, c).transpose(0, 1, 3, 5, 2, 4)
    blocks = blocks.reshape(n, ho, wo, c, 4)
    idx = blocks.argmax(axis=-1)
    out = np.take_along_axis(blocks, idx[..., None], axis=-1)[..., 0]
    if single:
        return out[0], idx[0]
    return out, idx


def maxpool2x2_backward(grad_out: np.ndarray, idx: np.ndarray, x_shape: tuple) -> np.ndarray:
    """Route each pooled gradient to the single input position that won the max."""
    gb, single = _as_batch(grad_out)
    ib = idx[None] if single else idx
    shape = (1, *x_shape) if single else tuple(x_shape)
    n, h, w, c = shape
    ho, wo = gb.shape[1], gb.shape[2]
    onehot = (ib[..., None] == np.arange(4)).astype(gb.dtype) * gb[..., None]
    blocks = onehot.reshape(n, ho, wo, c, 2, 2).transpose(0, 1, 4, 2, 5, 3).reshape(n, 2 * ho, 2 * wo, c)
    grad = np.zeros(shape, dtype=gb.dtype)
    grad[:, :2 * ho, :2 * wo, :] = blocks
    return grad[0] if single else grad
