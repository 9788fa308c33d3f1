import math

import numpy as np
import pytest

from latentplan import ndcore as nd
from latentplan.ndcore import checkpoint, ops

from gradcases import LAYER_CASES, layer_gradient_errors, loss_gradient_errors


# -- forward ------------------------------------------------------------------

def test_dense_identity():
    net = [nd.dense(2)]
    nd.build(net, (2,), nd.RngStream(0))
    net[0].params["w"].data[...] = np.eye(2)
    net[0].params["b"].data[...] = 0
    out = nd.forward(net, np.array([[3.0, 4.0]], dtype=np.float32), "infer")
    np.testing.assert_allclose(out.data, [[3.0, 4.0]])


def test_dropout_and_noise_are_inert_at_inference():
    x = np.random.default_rng(0).normal(size=(4, 6)).astype(np.float32)
    for layer in (nd.dropout(0.4), nd.gaussian_noise(0.4)):
        net = [layer]
        nd.build(net, (6,), nd.RngStream(0))
        np.testing.assert_array_equal(nd.forward(net, x, "infer").data, x)


def test_sigmoid_of_zero():
    net = [nd.activation("sigmoid")]
    nd.build(net, (1,), nd.RngStream(0))
    assert nd.forward(net, np.zeros((1, 1), np.float32), "infer").data[0, 0] == pytest.approx(0.5)


def test_shape_error_names_layer():
    net = [nd.dense(3), nd.dense(2)]
    nd.build(net, (4,), nd.RngStream(0))
    with pytest.raises(nd.ShapeError) as err:
        nd.forward(net, np.zeros((2, 5), np.float32), "infer")
    assert err.value.layer_index == 0


def test_dropout_rate_validated():
    with pytest.raises(ValueError):
        nd.dropout(1.0)


def test_batchnorm_uses_running_stats_at_inference():
    net = [nd.batchnorm()]
    nd.build(net, (3,), nd.RngStream(0))
    x = np.random.default_rng(1).normal(5, 2, (64, 3)).astype(np.float32)
    for _ in range(100):
        nd.forward(net, x, "train", nd.RngStream(0))
    out = nd.forward(net, x, "infer").data
    assert np.abs(out.mean(0)).max() < 0.05
    assert np.abs(out.std(0) - 1).max() < 0.05


# -- sampler ------------------------------------------------------------------

def test_gumbel_max_degenerate():
    rng = nd.RngStream(3)
    logpi = np.array([0.0, -np.inf, -np.inf])
    assert {nd.gumbel_max_sample(logpi, rng) for _ in range(200)} == {0}


def test_gumbel_max_frequency():
    draws = nd.gumbel_max_batch(np.log([0.1, 0.1, 0.8]), nd.RngStream(7), 100_000)
    assert 0.79 <= np.mean(draws == 2) <= 0.81


def test_gumbel_max_deterministic():
    logpi = np.log([0.2, 0.3, 0.5])
    assert nd.gumbel_max_sample(logpi, nd.RngStream(11)) == nd.gumbel_max_sample(logpi, nd.RngStream(11))


def test_gumbel_max_rejects_nan():
    with pytest.raises(ValueError):
        nd.gumbel_max_sample(np.array([0.0, np.nan]), nd.RngStream(0))


def test_gumbel_softmax_sharpens_to_argmax():
    z = nd.gumbel_softmax(np.log([[0.1, 0.1, 0.8]]), 0.01, noise=np.zeros((1, 3)))
    np.testing.assert_allclose(z.data, [[0, 0, 1]], atol=1e-6)


def test_gumbel_softmax_uniform_rows():
    z = nd.gumbel_softmax(np.zeros((2, 4)), 3.0, noise=np.zeros((2, 4)))
    np.testing.assert_allclose(z.data, 0.25, atol=1e-7)


def test_gumbel_softmax_rows_sum_to_one():
    logits = np.random.default_rng(0).normal(size=(5, 36, 2))
    z = nd.gumbel_softmax(logits, 0.7, rng=nd.RngStream(1))
    np.testing.assert_allclose(z.data.sum(-1), 1.0, atol=1e-6)
    assert (z.data > 0).all() and (z.data < 1).all()


def test_gumbel_softmax_rejects_nonpositive_tau():
    with pytest.raises(ValueError):
        nd.gumbel_softmax(np.zeros((1, 2)), 0.0, noise=np.zeros((1, 2)))


def test_max_activation_grows_as_tau_anneals():
    logits = np.random.default_rng(2).normal(size=(50, 2))
    noise = nd.RngStream(5).gumbel(logits.shape)
    taus = [5.0 * math.exp(-0.05 * t) for t in range(0, 60, 5)]
    peaks = [nd.gumbel_softmax(logits, max(0.7, t), noise=noise).data.max(-1).mean() for t in taus]
    assert all(b >= a - 1e-7 for a, b in zip(peaks, peaks[1:]))


# -- losses -------------------------------------------------------------------

def test_bce_values():
    assert float(nd.bce_loss(nd.Tensor([0.5]), [1.0]).data) == pytest.approx(math.log(2), abs=1e-6)
    eps = 1e-6
    assert float(nd.bce_loss(nd.Tensor([1 - eps]), [1.0]).data) < 1e-5


def test_bce_shape_mismatch():
    with pytest.raises(ValueError):
        nd.bce_loss(nd.Tensor(np.full((2, 3), 0.5)), np.ones((3, 2)))


def test_kl_values():
    assert float(nd.gs_variational_loss(nd.Tensor([[0.5, 0.5]])).data) == pytest.approx(0.0, abs=1e-7)
    assert float(nd.gs_variational_loss(nd.Tensor([[1.0, 0.0]])).data) == pytest.approx(math.log(2), abs=1e-6)


def test_kl_nonnegative():
    gen = np.random.default_rng(4)
    for _ in range(50):
        q = gen.dirichlet(np.ones(3), size=(4,))
        assert float(nd.gs_variational_loss(nd.Tensor(q)).data) >= -1e-7


# -- gradients ----------------------------------------------------------------

@pytest.mark.parametrize("case", sorted(LAYER_CASES))
def test_layer_gradients(case):
    for seed in range(3):
        errors = layer_gradient_errors(case, seed)
        assert max(errors.values()) < 1e-3, errors


@pytest.mark.parametrize("which", ["bce", "kl"])
def test_loss_gradients(which):
    for seed in range(3):
        assert loss_gradient_errors(which, seed) < 1e-3


def test_gumbel_softmax_gradient_fixed_noise():
    from latentplan.ndcore.gradcheck import numeric_grad, rel_error

    gen = np.random.default_rng(0)
    logits = gen.normal(size=(3, 4))
    noise = gen.gumbel(size=(3, 4))
    w = gen.normal(size=(3, 4))
    f = lambda v: float((nd.gumbel_softmax(v, 0.5, noise=noise).data * w).sum())
    x = nd.Tensor(logits, requires_grad=True, tape=nd.Tape())
    z = nd.gumbel_softmax(x, 0.5, noise=noise)
    loss = ops.mean(ops.mul(z, nd.Tensor(w * w.size)))
    grads = nd.backward(x.tape, loss)
    assert rel_error(grads[x], numeric_grad(f, logits.copy())) < 1e-3


def test_backward_twice_fails():
    net = [nd.dense(1)]
    nd.build(net, (2,), nd.RngStream(0))
    out = nd.forward(net, np.ones((2, 2), np.float32), "train", nd.RngStream(0))
    loss = ops.mean(out)
    nd.backward(loss.tape, loss)
    with pytest.raises(nd.TapeError):
        nd.backward(loss.tape, loss)


# -- optimizer ----------------------------------------------------------------

def test_adam_first_step():
    p = nd.Tensor(np.array([1.0]), requires_grad=True)
    state = nd.AdamState.for_params([p])
    nd.adam_step([p], [np.array([1.0])], state, lr=0.001)
    assert p.data[0] == pytest.approx(0.999, abs=1e-6)
    assert state.t == 1


def test_adam_zero_grad_keeps_params():
    p = nd.Tensor(np.array([0.3, -2.0]), requires_grad=True)
    state = nd.AdamState.for_params([p])
    for _ in range(3):
        nd.adam_step([p], [np.zeros(2)], state, lr=0.01)
    np.testing.assert_array_equal(p.data, [0.3, -2.0])


# -- determinism and checkpoints ------------------------------------------------

def _tiny_training(seed):
    rng = nd.RngStream(seed)
    net = [nd.gaussian_noise(0.1), nd.dense(8), nd.activation("relu"), nd.batchnorm(), nd.dropout(0.3),
           nd.dense(1), nd.activation("sigmoid")]
    nd.build(net, (4,), rng)
    params = nd.parameters(net)
    state = nd.AdamState.for_params(params)
    x = np.random.default_rng(0).normal(size=(32, 4)).astype(np.float32)
    y = (x[:, :1] > 0).astype(np.float32)
    for _ in range(5):
        out = nd.forward(net, x, "train", rng)
        loss = nd.bce_loss(out, y)
        nd.adam_step(params, nd.backward(loss.tape, loss), state, 0.01)
    return net


def test_training_is_deterministic():
    a, b = _tiny_training(9), _tiny_training(9)
    for pa, pb in zip(nd.parameters(a), nd.parameters(b)):
        np.testing.assert_array_equal(pa.data, pb.data)


def test_rng_stream_reproducible():
    a, b = nd.RngStream(5, counter=3), nd.RngStream(5, counter=3)
    np.testing.assert_array_equal(a.uniform((4,)), b.uniform((4,)))
    assert not np.array_equal(a.uniform((4,)), nd.RngStream(5, counter=3).uniform((4,)))


def test_checkpoint_round_trip(tmp_path):
    net = _tiny_training(1)
    path = tmp_path / "m.lpw"
    checkpoint.save(path, "generic", {"note": "x"}, {"net": net})
    assert path.read_bytes()[:4] == b"LPW1"
    kind, meta, nets = checkpoint.load(path)
    assert kind == "generic" and meta["note"] == "x"
    x = np.random.default_rng(3).normal(size=(5, 4)).astype(np.float32)
    np.testing.assert_array_equal(nd.forward(net, x, "infer").data, nd.forward(nets["net"], x, "infer").data)


def test_checkpoint_rejects_garbage():
    with pytest.raises(nd.CheckpointError):
        checkpoint.loads(b"NOPE" + bytes(20))
