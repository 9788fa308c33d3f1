"""Gumbel-Max sampling and its softmax relaxation."""

from __future__ import annotations

import numpy as np

from . import ops
from .rng import RngStream
from .tensor import Tensor, as_tensor


def gumbel_max_sample(logpi, rng: RngStream) -> int:
    """Exact categorical draw: ``argmax_j(g_j + log pi_j)``.

    ``-inf`` entries (zero probability) are allowed; NaN or ``+inf`` are not.
    """
    lp = np.asarray(logpi.data if isinstance(logpi, Tensor) else logpi, dtype=np.float64)
    if np.isnan(lp).any() or np.isposinf(lp).any():
        raise ValueError("log-probabilities must not contain NaN or +inf")
    if np.isneginf(lp).all():
        raise ValueError("all categories have zero probability")
    return int(np.argmax(rng.gumbel(lp.shape) + lp))


def gumbel_max_batch(logpi: np.ndarray, rng: RngStream, draws: int) -> np.ndarray:
    """``draws`` independent Gumbel-Max samples from one distribution."""
    lp = np.asarray(logpi, dtype=np.float64)
    if np.isnan(lp).any() or np.isposinf(lp).any():
        raise ValueError("log-probabilities must not contain NaN or +inf")
    return np.argmax(rng.gumbel((draws,) + lp.shape) + lp, axis=-1)


def gumbel_softmax(logpi, tau: float, rng: RngStream | None = None, noise=None) -> Tensor:
    """Relaxed one-hot sample ``softmax((g + log pi) / tau)`` per row.

    ``noise`` overrides the Gumbel draws (e.g. zeros, or a frozen draw for
    gradient checks); otherwise they come from ``rng``.
    """
    if not tau > 0:
        raise ValueError(f"temperature must be positive, got {tau}")
    logpi = as_tensor(logpi)
    if noise is None:
        if rng is None:
            raise ValueError("need an RngStream or explicit noise")
        noise = rng.gumbel(logpi.shape)
    return ops.gumbel_softmax(logpi, tau, np.asarray(noise))
