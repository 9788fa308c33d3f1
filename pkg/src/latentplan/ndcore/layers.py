"""Layer specifications, shape-inferring construction and the forward pass.

A network is a plain list of ``LayerSpec``.  ``build`` infers every layer's
input shape from the network input (and the auxiliary input consumed by
``concat`` layers) and initialises parameters; ``forward`` then runs the list
in one of three modes:

``train``  dropout and noise active, batch statistics, soft Gumbel samples;
           records a tape.
``infer``  deterministic; running statistics; Gumbel layers harden to the
           one-hot argmax of their logits.
``sample`` like ``infer`` but Gumbel layers draw a hard Gumbel-Max sample.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import ops
from .rng import RngStream
from .tensor import DEFAULT_DTYPE, ShapeError, Tape, Tensor

KINDS = (
    "dense",
    "conv2d",
    "batchnorm",
    "dropout",
    "gaussian_noise",
    "activation",
    "gumbel_softmax",
    "reshape",
    "concat",
)
ACTIVATIONS = {"relu": ops.relu, "tanh": ops.tanh, "sigmoid": ops.sigmoid}
MODES = ("train", "infer", "sample")
BN_MOMENTUM = 0.9
BN_EPS = 1e-5


@dataclass
class LayerSpec:
    kind: str
    args: dict = field(default_factory=dict)
    params: dict = field(default_factory=dict)
    buffers: dict = field(default_factory=dict)
    in_shape: tuple | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown layer kind {self.kind!r}")

    def parameters(self):
        return list(self.params.values())


def dense(units: int) -> LayerSpec:
    return LayerSpec("dense", {"units": int(units)})


def conv2d(kh: int, kw: int, channels: int) -> LayerSpec:
    return LayerSpec("conv2d", {"kh": int(kh), "kw": int(kw), "channels": int(channels)})


def batchnorm() -> LayerSpec:
    return LayerSpec("batchnorm", {"momentum": BN_MOMENTUM, "eps": BN_EPS})


def dropout(rate: float) -> LayerSpec:
    if not 0 <= rate < 1:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    return LayerSpec("dropout", {"rate": float(rate)})


def gaussian_noise(sigma: float) -> LayerSpec:
    return LayerSpec("gaussian_noise", {"sigma": float(sigma)})


def activation(name: str) -> LayerSpec:
    if name not in ACTIVATIONS:
        raise ValueError(f"unknown activation {name!r}")
    return LayerSpec("activation", {"fn": name})


def gumbel_softmax(n: int, m: int, tau: float = 1.0) -> LayerSpec:
    return LayerSpec("gumbel_softmax", {"n": int(n), "m": int(m), "tau": float(tau)})


def reshape(*dims: int) -> LayerSpec:
    return LayerSpec("reshape", {"dims": [int(d) for d in dims]})


def concat() -> LayerSpec:
    """Join the running activation with the auxiliary input (both flattened)."""
    return LayerSpec("concat")


def _glorot(rng: RngStream, shape, fan_in, fan_out, dtype):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(shape, -limit, limit).astype(dtype)


def build(net: list[LayerSpec], input_shape, rng: RngStream, aux_shape=None, dtype=DEFAULT_DTYPE):
    """Initialise parameters in place; returns the output shape (without batch)."""
    shape = tuple(input_shape)
    for i, layer in enumerate(net):
        layer.in_shape = shape
        a = layer.args
        if layer.kind == "dense":
            fan_in = int(np.prod(shape))
            layer.params = {
                "w": Tensor(_glorot(rng, (fan_in, a["units"]), fan_in, a["units"], dtype), True),
                "b": Tensor(np.zeros(a["units"], dtype), True),
            }
            shape = (a["units"],)
        elif layer.kind == "conv2d":
            if len(shape) != 3:
                raise ShapeError(i, ("C", "H", "W"), shape, "conv2d")
            c = shape[0]
            kh, kw, o = a["kh"], a["kw"], a["channels"]
            layer.params = {
                "k": Tensor(_glorot(rng, (o, c, kh, kw), c * kh * kw, o * kh * kw, dtype), True),
                "b": Tensor(np.zeros(o, dtype), True),
            }
            shape = (o,) + shape[1:]
        elif layer.kind == "batchnorm":
            f = shape[0]
            layer.params = {
                "gamma": Tensor(np.ones(f, dtype), True),
                "beta": Tensor(np.zeros(f, dtype), True),
            }
            layer.buffers = {"mean": np.zeros(f, dtype), "var": np.ones(f, dtype)}
        elif layer.kind == "gumbel_softmax":
            if shape[-1] != a["m"] or int(np.prod(shape)) != a["n"] * a["m"]:
                raise ShapeError(i, (a["n"], a["m"]), shape, "gumbel_softmax")
        elif layer.kind == "reshape":
            dims = tuple(a["dims"])
            if int(np.prod(dims)) != int(np.prod(shape)):
                raise ShapeError(i, dims, shape, "reshape")
            shape = dims
        elif layer.kind == "concat":
            if aux_shape is None:
                raise ValueError(f"layer {i}: concat needs an auxiliary input shape")
            shape = (int(np.prod(shape)) + int(np.prod(aux_shape)),)
    return shape


def parameters(net: list[LayerSpec]) -> list[Tensor]:
    return [p for layer in net for p in layer.parameters()]


def _check(i, layer, x):
    if layer.in_shape is None:
        raise ValueError(f"layer {i} ({layer.kind}) is not built")
    if tuple(x.shape[1:]) != layer.in_shape:
        raise ShapeError(i, layer.in_shape, x.shape[1:], layer.kind)


def forward(net, x, mode="infer", rng: RngStream | None = None, aux=None):
    """Run ``net`` on the batch ``x``.

    In train mode the returned tensor carries a ``Tape`` (``out.tape``) with
    every recorded op and the per-layer outputs in ``tape.layer_outputs``;
    pass it to ``backward``.  If ``x`` already sits on a tape, recording
    continues on that tape (chained networks).
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    train = mode == "train"
    if isinstance(x, Tensor):
        h = x
    else:
        h = Tensor(x)
    if train and h.tape is None:
        h = Tensor(h.data, tape=Tape())
    elif not train and h.tape is not None:
        h = Tensor(h.data)
    tape = h.tape
    if aux is not None and not isinstance(aux, Tensor):
        aux = Tensor(np.asarray(aux, dtype=h.dtype))

    for i, layer in enumerate(net):
        _check(i, layer, h)
        a = layer.args
        k = layer.kind
        if k == "dense":
            h = ops.dense(h, layer.params["w"], layer.params["b"])
        elif k == "conv2d":
            h = ops.conv2d(h, layer.params["k"], layer.params["b"])
        elif k == "batchnorm":
            gamma, beta = layer.params["gamma"], layer.params["beta"]
            if train:
                h, mu, var = ops.batchnorm(h, gamma, beta, a["eps"])
                mom = a["momentum"]
                buf = layer.buffers
                buf["mean"] = (mom * buf["mean"] + (1 - mom) * mu).astype(buf["mean"].dtype)
                buf["var"] = (mom * buf["var"] + (1 - mom) * var).astype(buf["var"].dtype)
            else:
                inv = gamma.data / np.sqrt(layer.buffers["var"] + a["eps"])
                h = ops.affine_channels(h, inv, beta.data - layer.buffers["mean"] * inv)
        elif k == "dropout":
            if train and a["rate"] > 0:
                keep = 1.0 - a["rate"]
                h = ops.masked(h, rng.bernoulli(keep, h.shape) / keep)
        elif k == "gaussian_noise":
            if train and a["sigma"] > 0:
                h = ops.shift(h, rng.normal(h.shape, a["sigma"]))
        elif k == "activation":
            h = ACTIVATIONS[a["fn"]](h)
        elif k == "gumbel_softmax":
            if train:
                h = ops.gumbel_softmax(h, a["tau"], rng.gumbel(h.shape))
            else:
                logits = h.data
                if mode == "sample":
                    logits = logits + rng.gumbel(h.shape)
                h = Tensor(one_hot_argmax(logits).astype(h.dtype))
        elif k == "reshape":
            h = ops.reshape(h, (len(h.data),) + tuple(a["dims"]))
        elif k == "concat":
            if aux is None:
                raise ValueError(f"layer {i}: concat requires aux input")
            if len(aux.data) != len(h.data):
                raise ShapeError(i, (len(h.data),), (len(aux.data),), "concat batch")
            h = ops.concat(h, aux)
        if tape is not None:
            tape.layer_outputs.append(h)
    return h


def one_hot_argmax(x: np.ndarray) -> np.ndarray:
    idx = np.argmax(x, axis=-1)
    return np.eye(x.shape[-1], dtype=np.float32)[idx]


def set_temperature(net, tau: float):
    for layer in net:
        if layer.kind == "gumbel_softmax":
            layer.args["tau"] = float(tau)
