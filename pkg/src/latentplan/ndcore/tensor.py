"""Tensor and tape for reverse-mode differentiation.

A ``Tensor`` wraps a numpy array.  Operations whose inputs carry a ``Tape``
append their output node to it together with a closure mapping the output
gradient to input gradients.  ``backward`` walks the tape once in reverse.
"""

from __future__ import annotations

import numpy as np

DEFAULT_DTYPE = np.float32


class ShapeError(ValueError):
    """Input shape does not match what a layer was built for."""

    def __init__(self, layer_index, expected, actual, kind=""):
        self.layer_index = layer_index
        self.expected = tuple(expected)
        self.actual = tuple(actual)
        what = f" ({kind})" if kind else ""
        super().__init__(
            f"layer {layer_index}{what}: expected input shape {self.expected}, got {self.actual}"
        )


class TapeError(RuntimeError):
    pass


class Tape:
    """Ordered record of differentiable operations from one forward pass."""

    def __init__(self):
        self.nodes: list[Tensor] = []
        self.layer_outputs: list[Tensor] = []
        self.spent = False

    def __len__(self):
        return len(self.nodes)


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "tape", "_parents", "_backward")

    def __init__(self, data, requires_grad=False, dtype=None, tape=None):
        if isinstance(data, Tensor):
            data = data.data
        arr = np.asarray(data)
        if dtype is not None:
            arr = arr.astype(dtype, copy=False)
        elif not np.issubdtype(arr.dtype, np.floating):
            arr = arr.astype(DEFAULT_DTYPE)
        self.data = arr
        self.grad = None
        self.requires_grad = requires_grad
        self.tape = tape
        self._parents = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def numpy(self):
        return self.data

    def item(self):
        return float(self.data)

    def __len__(self):
        return len(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, dtype={self.dtype}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        from . import ops

        return ops.add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        from . import ops

        if isinstance(other, Tensor):
            return ops.mul(self, other)
        return ops.scale(self, float(other))

    __rmul__ = __mul__


def as_tensor(x, dtype=None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(x, dtype=dtype)


def make_node(data, parents, backward) -> Tensor:
    """Create an op output; record it only when some parent is on a tape and
    some parent needs a gradient."""
    tape = None
    needs = False
    for p in parents:
        if p.tape is not None and tape is None:
            tape = p.tape
        needs = needs or p.requires_grad
    out = Tensor(data, tape=tape)
    if tape is not None and needs:
        if tape.spent:
            raise TapeError("cannot record onto a tape that was already consumed by backward()")
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
        tape.nodes.append(out)
    return out


def backward(tape: Tape, loss: Tensor) -> dict:
    """Propagate d(loss)/d(.) through ``tape``.

    Returns a dict mapping each leaf tensor that requires a gradient to its
    gradient array, and also stores it in ``leaf.grad``.  A tape can be used
    once.
    """
    if tape is None:
        raise TapeError("no tape: forward() must run in train mode")
    if tape.spent:
        raise TapeError("backward() called twice on the same tape")
    if loss.data.size != 1:
        raise ValueError(f"loss must be a scalar, got shape {loss.shape}")
    tape.spent = True

    grads = {id(loss): np.ones_like(loss.data)}
    leaves = {}
    for node in reversed(tape.nodes):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        parent_grads = node._backward(g)
        for parent, pg in zip(node._parents, parent_grads):
            if pg is None or not parent.requires_grad:
                continue
            if parent._backward is None:
                # leaf (parameter)
                if id(parent) in leaves:
                    leaves[id(parent)][1] += pg
                else:
                    leaves[id(parent)] = [parent, np.array(pg, dtype=parent.dtype, copy=True)]
            elif id(parent) in grads:
                grads[id(parent)] = grads[id(parent)] + pg
            else:
                grads[id(parent)] = pg
        node._backward = None
        node._parents = ()
    # drop the node -> tape -> node cycles so activations are freed promptly
    for node in tape.nodes:
        node.tape = None
    tape.nodes.clear()
    tape.layer_outputs.clear()

    out = {}
    for leaf, g in leaves.values():
        leaf.grad = g
        out[leaf] = g
    return out
