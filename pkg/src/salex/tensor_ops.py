"""Differentiable network primitives with analytic backward passes.

Tensors are plain NumPy arrays (row-major, finite reals). Every operation is a
pure function of its inputs; randomness enters only through an explicit
generator. Spatial ops accept a single sample (C,H,W) or a batch (N,C,H,W) and
return the matching rank; linear/softmax/cross-entropy likewise accept an
optional leading batch axis.

Convolution uses an im2col-style windowed view plus einsum. The test suite
checks it (and pooling and linear) against naive loop oracles to 1e-12 and all
backward passes against central finite differences.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import NumericError, ShapeError


def _as_batched(x: np.ndarray, rank: int) -> tuple[np.ndarray, bool]:
    """Add a leading batch axis if `x` has rank `rank` (single sample)."""
    if x.ndim == rank:
        return x[None], True
    if x.ndim == rank + 1:
        return x, False
    raise ShapeError(f"expected rank {rank} or {rank + 1} array, got shape {x.shape}")


# ---------------------------------------------------------------------------
# conv2d
# ---------------------------------------------------------------------------

def conv_output_size(size: int, k: int, stride: int, pad: int) -> int:
    return (size + 2 * pad - k) // stride + 1


def _conv_windows(x: np.ndarray, k: int, stride: int, pad: int) -> np.ndarray:
    """Zero-pad and extract sliding kernel windows: (N,C,Ho,Wo,k,k)."""
    if pad:
        x = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    win = sliding_window_view(x, (k, k), axis=(2, 3))
    return win[:, :, ::stride, ::stride]


def _check_conv_args(x, w, b, stride, pad):
    if w.ndim != 4 or w.shape[2] != w.shape[3]:
        raise ShapeError(f"weight must be (O,C,k,k) with square kernel, got {w.shape}")
    if b.shape != (w.shape[0],):
        raise ShapeError(f"bias shape {b.shape} does not match {w.shape[0]} output channels")
    if x.shape[1] != w.shape[1]:
        raise ShapeError(
            f"input has {x.shape[1]} channels but weight expects {w.shape[1]}"
        )
    k = w.shape[2]
    _, _, h, wd = x.shape
    if stride < 1:
        raise ShapeError(f"stride must be >= 1, got {stride}")
    if k > h + 2 * pad or k > wd + 2 * pad:
        raise ShapeError(
            f"kernel {k} larger than padded input {h + 2 * pad}x{wd + 2 * pad}"
        )


def conv2d(x: np.ndarray, w: np.ndarray, b: np.ndarray,
           stride: int = 1, pad: int = 0) -> np.ndarray:
    """Cross-correlation of (N,C,H,W) input with (O,C,k,k) weights plus bias."""
    xb, single = _as_batched(x, 3)
    _check_conv_args(xb, w, b, stride, pad)
    win = _conv_windows(xb, w.shape[2], stride, pad)
    out = np.einsum("nchwij,ocij->nohw", win, w, optimize=True)
    out += b[None, :, None, None]
    return out[0] if single else out


def conv2d_backward(x: np.ndarray, w: np.ndarray, grad_out: np.ndarray,
                    stride: int = 1, pad: int = 0
                    ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gradients of conv2d w.r.t. (input, weight, bias) given upstream grad."""
    xb, single = _as_batched(x, 3)
    gb_out, _ = _as_batched(grad_out, 3)
    k = w.shape[2]
    win = _conv_windows(xb, k, stride, pad)

    grad_b = gb_out.sum(axis=(0, 2, 3))
    grad_w = np.einsum("nchwij,nohw->ocij", win, gb_out, optimize=True)

    gwin = np.einsum("nohw,ocij->nchwij", gb_out, w, optimize=True)
    n, c, h, wd = xb.shape
    gx_pad = np.zeros((n, c, h + 2 * pad, wd + 2 * pad), dtype=gwin.dtype)
    ho, wo = gb_out.shape[2], gb_out.shape[3]
    for i in range(k):
        for j in range(k):
            gx_pad[:, :, i:i + ho * stride:stride, j:j + wo * stride:stride] \
                += gwin[:, :, :, :, i, j]
    gx = gx_pad[:, :, pad:pad + h, pad:pad + wd] if pad else gx_pad
    return (gx[0] if single else gx), grad_w, grad_b


# ---------------------------------------------------------------------------
# maxpool2
# ---------------------------------------------------------------------------

def maxpool2(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """2x2 max pooling with stride 2; trailing odd row/column dropped.

    Returns (pooled, argmax) where argmax holds the flat index 0..3 of the
    winning element in each window, row-major, first occurrence on ties.
    """
    xb, single = _as_batched(x, 3)
    n, c, h, w = xb.shape
    if h < 2 or w < 2:
        raise ShapeError(f"maxpool2 needs spatial dims >= 2, got {h}x{w}")
    ho, wo = h // 2, w // 2
    win = xb[:, :, :ho * 2, :wo * 2].reshape(n, c, ho, 2, wo, 2)
    win = win.transpose(0, 1, 2, 4, 3, 5).reshape(n, c, ho, wo, 4)
    idx = win.argmax(axis=-1)
    out = np.take_along_axis(win, idx[..., None], axis=-1)[..., 0]
    if single:
        return out[0], idx[0]
    return out, idx


def maxpool2_backward(x: np.ndarray, argmax: np.ndarray,
                      grad_out: np.ndarray) -> np.ndarray:
    """Route upstream gradient to the winning element of each 2x2 window."""
    xb, single = _as_batched(x, 3)
    idx, _ = _as_batched(argmax, 3)
    g, _ = _as_batched(grad_out, 3)
    n, c, h, w = xb.shape
    ho, wo = h // 2, w // 2
    gwin = np.zeros((n, c, ho, wo, 4), dtype=g.dtype)
    np.put_along_axis(gwin, idx[..., None], g[..., None], axis=-1)
    gx = np.zeros_like(xb, dtype=g.dtype)
    gx[:, :, :ho * 2, :wo * 2] = (
        gwin.reshape(n, c, ho, wo, 2, 2)
            .transpose(0, 1, 2, 4, 3, 5)
            .reshape(n, c, ho * 2, wo * 2)
    )
    return gx[0] if single else gx


# ---------------------------------------------------------------------------
# relu
# ---------------------------------------------------------------------------

def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0)


def relu_backward(x: np.ndarray, grad_out: np.ndarray) -> np.ndarray:
    # subgradient at exactly 0 is taken as 0
    return grad_out * (x > 0)


# ---------------------------------------------------------------------------
# dropout
# ---------------------------------------------------------------------------

def dropout(x: np.ndarray, rate: float, train: bool,
            gen: np.random.Generator | None = None
            ) -> tuple[np.ndarray, np.ndarray | None]:
    """Inverted dropout. Returns (output, mask); mask is None in eval mode.

    Train mode zeroes each element with probability `rate` and scales
    survivors by 1/(1-rate) so the expectation is preserved; eval mode is the
    exact identity.
    """
    if not (0 <= rate < 1):
        raise ShapeError(f"dropout rate must be in [0,1), got {rate}")
    if not train or rate == 0:
        return x, None
    if gen is None:
        raise ValueError("train-mode dropout with rate > 0 requires a generator")
    keep = gen.random(x.shape) >= rate
    mask = keep.astype(x.dtype) / (1.0 - rate)
    return x * mask, mask


def dropout_backward(mask: np.ndarray | None, grad_out: np.ndarray) -> np.ndarray:
    return grad_out if mask is None else grad_out * mask


# ---------------------------------------------------------------------------
# linear
# ---------------------------------------------------------------------------

def linear(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Affine map w @ x + b; x may be (F,) or batched (N,F)."""
    if w.ndim != 2:
        raise ShapeError(f"weight must be 2-D, got shape {w.shape}")
    if x.shape[-1] != w.shape[1]:
        raise ShapeError(
            f"input features {x.shape[-1]} do not match weight columns {w.shape[1]}"
        )
    if b.shape != (w.shape[0],):
        raise ShapeError(f"bias shape {b.shape} does not match {w.shape[0]} outputs")
    return x @ w.T + b


def linear_backward(x: np.ndarray, w: np.ndarray, grad_out: np.ndarray
                    ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    xb, single = _as_batched(x, 1)
    g, _ = _as_batched(grad_out, 1)
    gx = g @ w
    gw = g.T @ xb
    gb = g.sum(axis=0)
    return (gx[0] if single else gx), gw, gb


# ---------------------------------------------------------------------------
# softmax / cross-entropy
# ---------------------------------------------------------------------------

def softmax(logits: np.ndarray) -> np.ndarray:
    """Numerically stable softmax over the last axis."""
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def cross_entropy(probs: np.ndarray, labels) -> float:
    """Mean negative log-likelihood of the true class(es).

    `probs` is (K,) with an int label, or (N,K) with a length-N label array.
    """
    p, single = _as_batched(probs, 1)
    lab = np.atleast_1d(np.asarray(labels))
    if lab.shape[0] != p.shape[0]:
        raise ShapeError(f"{p.shape[0]} prob rows but {lab.shape[0]} labels")
    if np.any(lab < 0) or np.any(lab >= p.shape[1]):
        raise ShapeError(f"label out of range for {p.shape[1]} classes: {labels}")
    picked = p[np.arange(p.shape[0]), lab]
    if np.any(picked <= 0):
        raise NumericError("cross_entropy requires positive probability for the label")
    return float(-np.log(picked).mean())


def softmax_xent_backward(probs: np.ndarray, labels) -> np.ndarray:
    """Fused gradient of mean cross-entropy w.r.t. the pre-softmax logits.

    Equals (probs - one_hot(label)) / batch_size; the fused form avoids the
    catastrophic cancellation of chaining the two separate backwards.
    """
    p, single = _as_batched(probs, 1)
    lab = np.atleast_1d(np.asarray(labels))
    grad = p.copy()
    grad[np.arange(p.shape[0]), lab] -= 1.0
    grad /= p.shape[0]
    return grad[0] if single else grad


# ---------------------------------------------------------------------------
# gradient checking
# ---------------------------------------------------------------------------

def gradient_check(f, x: np.ndarray, analytic: np.ndarray,
                   eps: float = 1e-5) -> float:
    """Worst relative error between `analytic` and central finite differences.

    `f` is a scalar-valued function of an array shaped like `x`. The point
    should be non-degenerate (away from ReLU kinks and pooling ties).
    """
    x = np.asarray(x, dtype=np.float64)
    numeric = np.zeros_like(x)
    flat = x.reshape(-1)
    num_flat = numeric.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        fp = f(x)
        flat[i] = orig - eps
        fm = f(x)
        flat[i] = orig
        num_flat[i] = (fp - fm) / (2 * eps)
    a = np.asarray(analytic, dtype=np.float64)
    denom = np.maximum(np.abs(a) + np.abs(numeric), 1e-8)
    return float(np.max(np.abs(a - numeric) / denom))
