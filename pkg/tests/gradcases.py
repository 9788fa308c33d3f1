"""Finite-difference gradient cases shared by the unit and acceptance suites."""

import numpy as np

from latentplan import ndcore as nd
from latentplan.ndcore import ops
from latentplan.ndcore.gradcheck import numeric_grad, rel_error

LAYER_CASES = {
    "dense": lambda: ([nd.dense(4)], (5,), None),
    "conv2d": lambda: ([nd.conv2d(3, 3, 3)], (2, 5, 4), None),
    "batchnorm": lambda: ([nd.batchnorm()], (6,), None),
    "batchnorm_conv": lambda: ([nd.conv2d(3, 3, 2), nd.activation("tanh"), nd.batchnorm()], (1, 4, 4), None),
    "dropout": lambda: ([nd.dropout(0.4)], (7,), None),
    "gaussian_noise": lambda: ([nd.gaussian_noise(0.4)], (7,), None),
    "relu": lambda: ([nd.activation("relu")], (7,), None),
    "tanh": lambda: ([nd.activation("tanh")], (7,), None),
    "sigmoid": lambda: ([nd.activation("sigmoid")], (7,), None),
    "gumbel_softmax": lambda: ([nd.gumbel_softmax_layer(3, 2, tau=0.7)], (3, 2), None),
    "reshape": lambda: ([nd.reshape(2, 3)], (6,), None),
    "concat": lambda: ([nd.concat(), nd.dense(3)], (4,), (2,)),
}

BATCH = 3


def _inputs(case, seed):
    gen = np.random.default_rng(seed)
    net, in_shape, aux_shape = LAYER_CASES[case]()
    nd.build(net, in_shape, nd.RngStream(seed), aux_shape=aux_shape, dtype=np.float64)
    # randomise bias/affine terms too so their gradients are generic
    for layer in net:
        for p in layer.params.values():
            p.data[...] = gen.normal(0, 0.5, p.data.shape)
    x = gen.normal(0, 1, (BATCH,) + in_shape)
    if case == "relu":
        # keep away from the kink
        x = np.sign(x) * (np.abs(x) + 0.2)
    aux = gen.normal(0, 1, (BATCH,) + aux_shape) if aux_shape else None
    out_shape = nd.forward(net, x, "train", nd.RngStream(seed), aux=aux).shape
    weights = gen.normal(0, 1, out_shape)
    return net, x, aux, weights


def layer_gradient_errors(case, seed):
    """Relative errors for the input, aux input and every parameter."""
    net, x, aux, weights = _inputs(case, seed)

    def loss_value(xv, auxv):
        # same seed every call: identical dropout masks / noise draws
        out = nd.forward(net, xv, "train", nd.RngStream(seed + 1000), aux=auxv)
        return float((out.data * weights).sum())

    xt = _leaf_on_tape(x)
    auxt = nd.Tensor(aux, requires_grad=True) if aux is not None else None
    out = nd.forward(net, xt, "train", nd.RngStream(seed + 1000), aux=auxt)
    loss = ops.mean(ops.mul(out, nd.Tensor(weights * weights.size)))
    grads = nd.backward(out.tape, loss)

    errors = {"x": rel_error(grads[xt], numeric_grad(lambda v: loss_value(v, aux), x.copy()))}
    if aux is not None:
        errors["aux"] = rel_error(
            grads[auxt], numeric_grad(lambda v: loss_value(x, v), aux.copy())
        )
    for li, layer in enumerate(net):
        for name, p in layer.params.items():
            analytic = grads.get(p)
            if analytic is None:
                analytic = np.zeros_like(p.data)

            def f(v, p=p):
                saved = p.data.copy()
                p.data[...] = v
                try:
                    return loss_value(x, aux)
                finally:
                    p.data[...] = saved

            errors[f"{li}.{name}"] = rel_error(analytic, numeric_grad(f, p.data.copy()))
    return errors


def _leaf_on_tape(arr):
    return nd.Tensor(arr, requires_grad=True, tape=nd.Tape())


def loss_gradient_errors(which, seed):
    gen = np.random.default_rng(seed)
    if which == "bce":
        pred = gen.uniform(0.05, 0.95, (4, 5))
        target = (gen.random((4, 5)) < 0.5).astype(np.float64)
        value = lambda v: float(nd.bce_loss(nd.Tensor(v), target).data)
        pt = _leaf_on_tape(pred)
        grads = nd.backward(pt.tape, nd.bce_loss(pt, target))
        return rel_error(grads[pt], numeric_grad(value, pred.copy()))
    if which == "kl":
        # differentiate through the softmax that produces q
        logits = gen.normal(0, 1, (2, 4, 3))
        value = lambda v: float(nd.gs_variational_loss(ops.softmax(nd.Tensor(v))).data)
        lt = _leaf_on_tape(logits)
        grads = nd.backward(lt.tape, nd.gs_variational_loss(ops.softmax(lt)))
        return rel_error(grads[lt], numeric_grad(value, logits.copy()))
    raise ValueError(which)
