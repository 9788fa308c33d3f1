from __future__ import annotations

import numpy as np

from . import ops
from .tensor import Tensor, as_tensor


def bce_loss(pred, target) -> Tensor:
    """Mean over elements of ``-[t log p + (1 - t) log(1 - p)]``."""
    pred = as_tensor(pred)
    target = np.asarray(target.data if isinstance(target, Tensor) else target)
    if pred.shape != target.shape:
        raise ValueError(f"bce_loss: shape mismatch {pred.shape} vs {target.shape}")
    return ops.bce(pred, target)


def gs_variational_loss(q) -> Tensor:
    """KL divergence of each categorical row of ``q`` from the uniform prior,
    summed over rows (and averaged over the batch for 3D input)."""
    return ops.kl_uniform(as_tensor(q))
