from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import Tensor


@dataclass
class AdamState:
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params, **kw) -> "AdamState":
        return cls(
            m=[np.zeros_like(p.data) for p in params],
            v=[np.zeros_like(p.data) for p in params],
            **kw,
        )


def adam_step(params: list[Tensor], grads, state: AdamState, lr: float):
    """Bias-corrected Adam update in place.

    ``grads`` is either a list aligned with ``params`` or the dict returned by
    ``backward``; parameters without a gradient are left untouched.
    """
    if isinstance(grads, dict):
        grads = [grads.get(p) for p in params]
    if len(grads) != len(params) or len(state.m) != len(params):
        raise ValueError("params, grads and optimizer state must align")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1 - b1**state.t
    c2 = 1 - b2**state.t
    for i, (p, g) in enumerate(zip(params, grads)):
        if g is None:
            continue
        if g.shape != p.data.shape or state.m[i].shape != p.data.shape:
            raise ValueError(f"param {i}: shape mismatch {p.data.shape} / {g.shape}")
        state.m[i] = b1 * state.m[i] + (1 - b1) * g
        state.v[i] = b2 * state.v[i] + (1 - b2) * (g * g)
        mhat = state.m[i] / c1
        vhat = state.v[i] / c2
        p.data -= (lr * mhat / (np.sqrt(vhat) + state.eps)).astype(p.data.dtype)
