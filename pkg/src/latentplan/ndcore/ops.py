"""Differentiable primitives.

Every op takes ``Tensor`` inputs and returns a ``Tensor``; when an input is
on a tape, the op registers a closure ``g_out -> (g_in, ...)``.
"""

from __future__ import annotations

import numpy as np
from scipy.special import expit, xlogy

from .tensor import Tensor, as_tensor, make_node

PROB_FLOOR = 1e-7


def _unbroadcast(g, shape):
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, n in enumerate(shape):
        if n == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g


# -- elementwise arithmetic -------------------------------------------------

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    sa, sb = a.shape, b.shape
    return make_node(
        a.data + b.data, (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb))
    )


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    ad, bd = a.data, b.data
    return make_node(
        ad * bd,
        (a, b),
        lambda g: (_unbroadcast(g * bd, ad.shape), _unbroadcast(g * ad, bd.shape)),
    )


def scale(a: Tensor, c: float) -> Tensor:
    c = a.data.dtype.type(c)
    return make_node(a.data * c, (a,), lambda g: (g * c,))


def mean(a: Tensor) -> Tensor:
    n = a.data.size
    shape = a.shape
    return make_node(
        np.asarray(a.data.mean(), dtype=a.dtype),
        (a,),
        lambda g: (np.broadcast_to(g / n, shape).astype(a.dtype),),
    )


def reshape(a: Tensor, shape) -> Tensor:
    old = a.shape
    return make_node(a.data.reshape(shape), (a,), lambda g: (g.reshape(old),))


def concat(a: Tensor, b: Tensor) -> Tensor:
    """Flatten both to ``(batch, -1)`` and join along the feature axis."""
    a, b = as_tensor(a), as_tensor(b)
    n = len(a.data)
    a2 = a.data.reshape(n, -1)
    b2 = b.data.reshape(n, -1).astype(a.dtype, copy=False)
    k = a2.shape[1]
    sa, sb = a.shape, b.shape
    return make_node(
        np.concatenate([a2, b2], axis=1),
        (a, b),
        lambda g: (g[:, :k].reshape(sa), g[:, k:].reshape(sb)),
    )


# -- activations -------------------------------------------------------------

def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return make_node(x.data * mask, (x,), lambda g: (g * mask,))


def tanh(x: Tensor) -> Tensor:
    y = np.tanh(x.data)
    return make_node(y, (x,), lambda g: (g * (1 - y * y),))


def sigmoid(x: Tensor) -> Tensor:
    y = expit(x.data).astype(x.dtype, copy=False)
    return make_node(y, (x,), lambda g: (g * y * (1 - y),))


def _flush_tiny(y: np.ndarray) -> np.ndarray:
    """Zero probabilities within 2**24 of the smallest normal float.

    Sharp (low temperature) softmaxes otherwise emit subnormal numbers, and
    matrix products on subnormals run about a hundred times slower.
    """
    y[y < np.finfo(y.dtype).tiny * 2.0**24] = 0
    return y


def softmax(x: Tensor, axis=-1) -> Tensor:
    z = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    y = _flush_tiny(e / e.sum(axis=axis, keepdims=True))

    def back(g):
        return (y * (g - (g * y).sum(axis=axis, keepdims=True)),)

    return make_node(y, (x,), back)


# -- linear layers -----------------------------------------------------------

def dense(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    xshape = x.shape
    x2 = x.data.reshape(len(x.data), -1)
    wd = w.data

    def back(g):
        return (g @ wd.T).reshape(xshape), x2.T @ g, g.sum(axis=0)

    return make_node(x2 @ wd + b.data, (x, w, b), back)


def _pads(k):
    return (k - 1) // 2, k // 2


def conv2d(x: Tensor, k: Tensor, b: Tensor) -> Tensor:
    """Stride-1 convolution with zero "same" padding; NCHW / OIHW layout."""
    bsz, c, h, w = x.shape
    o, _, kh, kw = k.shape
    (pt, pb), (pl, pr) = _pads(kh), _pads(kw)
    xp = np.pad(x.data, ((0, 0), (0, 0), (pt, pb), (pl, pr)))
    win = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(2, 3))
    # (B, C, H, W, kh, kw) -> (B*H*W, C*kh*kw)
    cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(bsz * h * w, c * kh * kw)
    kmat = k.data.reshape(o, -1)
    out = (cols @ kmat.T + b.data).reshape(bsz, h, w, o).transpose(0, 3, 1, 2)

    def back(g):
        g2 = g.transpose(0, 2, 3, 1).reshape(-1, o)
        dk = (g2.T @ cols).reshape(k.shape)
        db = g2.sum(axis=0)
        dcols = (g2 @ kmat).reshape(bsz, h, w, c, kh, kw)
        dxp = np.zeros_like(xp)
        for i in range(kh):
            for j in range(kw):
                dxp[:, :, i : i + h, j : j + w] += dcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
        return dxp[:, :, pt : pt + h, pl : pl + w], dk, db

    return make_node(np.ascontiguousarray(out), (x, k, b), back)


def batchnorm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float):
    """Training-mode batch normalisation over every axis except features.

    Features are axis 1 (channels for 4D input).  Returns the output tensor
    and the batch mean / biased variance used.
    """
    axes = (0,) if x.data.ndim == 2 else (0,) + tuple(range(2, x.data.ndim))
    bshape = [1] * x.data.ndim
    bshape[1] = x.shape[1]
    mu = x.data.mean(axis=axes, keepdims=True)
    var = x.data.var(axis=axes, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu) * inv
    gd = gamma.data.reshape(bshape)
    n = x.data.size // x.shape[1]

    def back(g):
        dgamma = (g * xhat).sum(axis=axes)
        dbeta = g.sum(axis=axes)
        gx = g * gd
        dx = inv / n * (n * gx - gx.sum(axis=axes, keepdims=True)
                        - xhat * (gx * xhat).sum(axis=axes, keepdims=True))
        return dx.astype(x.dtype, copy=False), dgamma, dbeta

    out = make_node(xhat * gd + beta.data.reshape(bshape), (x, gamma, beta), back)
    return out, mu.reshape(-1), var.reshape(-1)


def affine_channels(x: Tensor, scale_: np.ndarray, shift: np.ndarray) -> Tensor:
    """``x * scale + shift`` broadcast on axis 1; used for batchnorm at inference."""
    bshape = [1] * x.data.ndim
    bshape[1] = x.shape[1]
    s = scale_.reshape(bshape).astype(x.dtype)
    return make_node(x.data * s + shift.reshape(bshape).astype(x.dtype), (x,), lambda g: (g * s,))


def masked(x: Tensor, mask: np.ndarray) -> Tensor:
    """Multiply by a constant array (dropout mask, already rescaled)."""
    m = mask.astype(x.dtype, copy=False)
    return make_node(x.data * m, (x,), lambda g: (g * m,))


def shift(x: Tensor, noise: np.ndarray) -> Tensor:
    """Add a constant array (Gaussian input noise)."""
    return make_node(x.data + noise.astype(x.dtype, copy=False), (x,), lambda g: (g,))


# -- Gumbel-Softmax ----------------------------------------------------------

def gumbel_softmax(logits: Tensor, tau: float, gumbel_noise: np.ndarray) -> Tensor:
    """``softmax((logits + g) / tau)`` along the last axis."""
    if not tau > 0:
        raise ValueError(f"temperature must be positive, got {tau}")
    z = (logits.data + gumbel_noise.astype(logits.dtype, copy=False)) / logits.dtype.type(tau)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    y = _flush_tiny(e / e.sum(axis=-1, keepdims=True))

    def back(g):
        return (y * (g - (g * y).sum(axis=-1, keepdims=True)) / tau,)

    return make_node(y, (logits,), back)


# -- losses -----------------------------------------------------------------

def bce(pred: Tensor, target) -> Tensor:
    """Mean binary cross-entropy; probabilities clamped to [1e-7, 1-1e-7]."""
    t = target.data if isinstance(target, Tensor) else np.asarray(target)
    if t.shape != pred.shape:
        raise ValueError(f"bce: shape mismatch {pred.shape} vs {t.shape}")
    t = t.astype(pred.dtype, copy=False)
    raw = pred.data
    p = np.clip(raw, PROB_FLOOR, 1 - PROB_FLOOR)
    loss = -(t * np.log(p) + (1 - t) * np.log1p(-p)).mean()
    inside = (raw >= PROB_FLOOR) & (raw <= 1 - PROB_FLOOR)
    n = raw.size

    def back(g):
        return (g * inside * (p - t) / (p * (1 - p)) / n,)

    return make_node(np.asarray(loss, dtype=pred.dtype), (pred,), back)


def kl_uniform(q: Tensor) -> Tensor:
    """Sum over rows of ``KL(q_row || Uniform(M))``; mean over the batch for 3D input."""
    m = q.shape[-1]
    per_row = xlogy(q.data, q.data * m).sum(axis=-1)
    batched = q.data.ndim == 3
    value = per_row.sum(axis=-1).mean() if batched else per_row.sum()
    scale_ = 1.0 / q.shape[0] if batched else 1.0
    qc = np.clip(q.data, PROB_FLOOR, None)

    def back(g):
        return (g * scale_ * (np.log(qc * m) + 1),)

    return make_node(np.asarray(value, dtype=q.dtype), (q,), back)
