"""Small reverse-mode autodiff engine: the layers, losses, sampler and
optimizer the autoencoders and discriminators need, nothing more."""

from .checkpoint import CheckpointError
from .gumbel import gumbel_max_batch, gumbel_max_sample, gumbel_softmax
from .layers import (
    LayerSpec,
    activation,
    batchnorm,
    build,
    concat,
    conv2d,
    dense,
    dropout,
    forward,
    gaussian_noise,
    parameters,
    reshape,
    set_temperature,
)
from .layers import gumbel_softmax as gumbel_softmax_layer
from .losses import bce_loss, gs_variational_loss
from .optim import AdamState, adam_step
from .rng import RngStream
from .tensor import ShapeError, Tape, TapeError, Tensor, backward

__all__ = [
    "AdamState",
    "CheckpointError",
    "LayerSpec",
    "RngStream",
    "ShapeError",
    "Tape",
    "TapeError",
    "Tensor",
    "activation",
    "adam_step",
    "backward",
    "batchnorm",
    "bce_loss",
    "build",
    "concat",
    "conv2d",
    "dense",
    "dropout",
    "forward",
    "gaussian_noise",
    "gs_variational_loss",
    "gumbel_max_batch",
    "gumbel_max_sample",
    "gumbel_softmax",
    "gumbel_softmax_layer",
    "parameters",
    "reshape",
    "set_temperature",
]
