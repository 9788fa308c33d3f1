"""Learned action model: Action Autoencoder plus PU-learned discriminators.

The AAE reconstructs a successor ``t`` from ``(t, s)`` through a one-hot
Gumbel-Softmax bottleneck of ``labels`` categories; every hidden layer also
sees ``s``, so the bottleneck only has to carry what changes.  Its argmax is
the action label.  The state and action discriminators are trained on
positive-vs-mixed data and rescaled by the mean score of held-out positives.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import ndcore as nd
from .ndcore import checkpoint
from .sae import AnnealSchedule, TrainingError

log = logging.getLogger(__name__)


class UnusedLabel(ValueError):
    pass


# -- Action Autoencoder --------------------------------------------------------

@dataclass
class AaeConfig:
    n_bits: int = 36
    labels: int = 128
    hidden: int = 400
    dropout: float = 0.4
    epochs: int = 1000
    batch_size: int = 2000
    lr: float = 1e-3
    tau0: float = 5.0
    tau_min: float = 0.1
    warn_loss: float = 0.01

    @property
    def schedule(self):
        return AnnealSchedule(self.tau0, self.tau_min, self.epochs)


def _aae_encoder(cfg: AaeConfig):
    block = lambda: [nd.concat(), nd.dense(cfg.hidden), nd.activation("relu"), nd.batchnorm(), nd.dropout(cfg.dropout)]
    return block() + block() + [nd.concat(), nd.dense(cfg.labels), nd.reshape(1, cfg.labels)]


def _aae_decoder(cfg: AaeConfig):
    block = lambda: [nd.concat(), nd.dense(cfg.hidden), nd.activation("relu"), nd.batchnorm(), nd.dropout(cfg.dropout)]
    return block() + block() + [nd.dense(cfg.n_bits), nd.activation("sigmoid")]


@dataclass
class AaeModel:
    config: AaeConfig
    encoder: list
    latent: list
    decoder: list
    used_labels: list = field(default_factory=list)
    report: dict = field(default_factory=dict)

    @classmethod
    def init(cls, cfg: AaeConfig, rng: nd.RngStream) -> "AaeModel":
        enc = _aae_encoder(cfg)
        lat = [nd.gumbel_softmax_layer(1, cfg.labels, cfg.tau0)]
        dec = _aae_decoder(cfg)
        nd.build(enc, (cfg.n_bits,), rng, aux_shape=(cfg.n_bits,))
        nd.build(lat, (1, cfg.labels), rng)
        nd.build(dec, (1, cfg.labels), rng, aux_shape=(cfg.n_bits,))
        return cls(cfg, enc, lat, dec)

    def parameters(self):
        return nd.parameters(self.encoder) + nd.parameters(self.decoder)

    def action_label(self, t, s) -> np.ndarray:
        """Label index per ``(t, s)`` pair (argmax of the bottleneck logits)."""
        t, s = _pairs(t, s)
        logits = nd.forward(self.encoder, t, "infer", aux=s).data
        return np.argmax(logits.reshape(len(t), -1), axis=1)

    def apply_label(self, labels, s, check_used: bool = True) -> np.ndarray:
        """Successor bits for each ``(label, s)``; decoder output thresholded at 0.5."""
        labels = np.atleast_1d(np.asarray(labels, dtype=np.int64))
        s = np.atleast_2d(np.asarray(s, dtype=np.float32))
        if len(labels) == 1 and len(s) > 1:
            labels = np.repeat(labels, len(s))
        elif len(s) == 1 and len(labels) > 1:
            s = np.repeat(s, len(labels), axis=0)
        if check_used:
            unused = np.setdiff1d(labels, self.used_labels)
            if len(unused):
                raise UnusedLabel(f"labels {unused.tolist()} are not used")
        onehot = np.zeros((len(labels), 1, self.config.labels), dtype=np.float32)
        onehot[np.arange(len(labels)), 0, labels] = 1.0
        out = nd.forward(self.decoder, onehot, "infer", aux=s).data
        return (out >= 0.5).astype(np.uint8)

    def reconstruct(self, t, s) -> np.ndarray:
        """``apply_label(action_label(t, s), s)``."""
        t, s = _pairs(t, s)
        return self.apply_label(self.action_label(t, s), s, check_used=False)

    def save(self, path):
        meta = {"config": asdict(self.config), "used_labels": [int(x) for x in self.used_labels],
                "report": self.report}
        checkpoint.save(path, "aae", meta, {"encoder": self.encoder, "latent": self.latent, "decoder": self.decoder})

    @classmethod
    def load(cls, path) -> "AaeModel":
        kind, meta, nets = checkpoint.load(path)
        if kind != "aae":
            raise checkpoint.CheckpointError(f"{path}: expected an aae checkpoint, got {kind}")
        return cls(AaeConfig(**meta["config"]), nets["encoder"], nets["latent"], nets["decoder"],
                   meta["used_labels"], meta["report"])


def _pairs(t, s):
    t = np.atleast_2d(np.asarray(t, dtype=np.float32))
    s = np.atleast_2d(np.asarray(s, dtype=np.float32))
    if t.shape != s.shape:
        raise ValueError(f"shape mismatch {t.shape} vs {s.shape}")
    return t, s


def action_label(model: AaeModel, t, s):
    return model.action_label(t, s)


def apply_label(model: AaeModel, label, s):
    return model.apply_label(label, s)


def as_pairs(transitions):
    """``(pre, post)`` uint8 arrays from an array pair or a list of ``(s, t)``."""
    if isinstance(transitions, tuple) and len(transitions) == 2 and np.ndim(transitions[0]) == 2:
        pre, post = transitions
    else:
        pairs = list(transitions)
        pre = [s for s, _ in pairs]
        post = [t for _, t in pairs]
    pre = np.asarray(pre, dtype=np.uint8)
    post = np.asarray(post, dtype=np.uint8)
    if pre.ndim != 2 or pre.shape != post.shape:
        raise ValueError(f"transitions must be two equal (K, N) arrays, got {pre.shape} and {post.shape}")
    return pre, post


def train_aae(transitions, cfg: AaeConfig, rng: nd.RngStream) -> AaeModel:
    """Fit the AAE on ``(s, t)`` transitions (see ``as_pairs``)."""
    pre, post = (a.astype(np.float32) for a in as_pairs(transitions))
    if pre.shape != post.shape or pre.shape[1] != cfg.n_bits:
        raise ValueError(f"expected two (K, {cfg.n_bits}) arrays, got {pre.shape} and {post.shape}")
    if len(pre) == 0:
        raise ValueError("train_aae: no transitions")
    model = AaeModel.init(cfg, rng)
    params = model.parameters()
    state = nd.AdamState.for_params(params)
    schedule = cfg.schedule
    loss_value = math.inf
    for epoch in range(cfg.epochs):
        nd.set_temperature(model.latent, schedule(epoch))
        order = rng.permutation(len(pre))
        total = 0.0
        for start in range(0, len(pre), cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            if len(idx) < 2:
                continue
            s, t = pre[idx], post[idx]
            z = nd.forward(model.encoder, t, "train", rng, aux=s)
            z = nd.forward(model.latent, z, "train", rng)
            out = nd.forward(model.decoder, z, "train", rng, aux=s)
            loss = nd.bce_loss(out, t)
            if not np.isfinite(loss.data):
                raise TrainingError(f"aae: non-finite loss at epoch {epoch}")
            nd.adam_step(params, nd.backward(loss.tape, loss), state, cfg.lr)
            total += float(loss.data) * len(idx)
        loss_value = total / len(pre)
        if epoch % 50 == 0 or epoch == cfg.epochs - 1:
            log.info("aae epoch %d tau=%.3f loss=%.5f", epoch, schedule(epoch), loss_value)
    nd.set_temperature(model.latent, cfg.tau_min)
    labels = model.action_label(post, pre)
    model.used_labels = sorted(int(x) for x in np.unique(labels))
    recon = model.apply_label(labels, pre, check_used=False)
    rate = float(np.all(recon == post.astype(np.uint8), axis=1).mean())
    model.report = {"final_loss": loss_value, "reconstruction_rate": rate, "used_labels": len(model.used_labels)}
    if loss_value > cfg.warn_loss:
        model.report["warning"] = f"reconstruction loss {loss_value:.4f} above {cfg.warn_loss}"
        log.warning("aae: %s", model.report["warning"])
    return model


# -- PU-learned discriminators ------------------------------------------------

SD_ARCH = "sd"
AD_ARCHS = [f"ad-x{x}-y{y}" for x in (0.5, 0.8) for y in (1, 2)]


def discriminator_net(arch: str):
    if arch == SD_ARCH:
        return [nd.batchnorm(), nd.dense(50), nd.activation("relu"), nd.dropout(0.8), nd.dense(1), nd.activation("sigmoid")]
    if arch in AD_ARCHS:
        _, x, y = arch.split("-")
        rate, depth = float(x[1:]), int(y[1:])
        net = []
        for _ in range(depth):
            net += [nd.batchnorm(), nd.dense(300), nd.activation("relu"), nd.dropout(rate)]
        return net + [nd.dense(1), nd.activation("sigmoid")]
    raise ValueError(f"unknown discriminator architecture {arch!r}")


@dataclass
class PuConfig:
    epochs: int = 3000
    batch_size: int = 1000
    lr: float = 1e-3
    patience: int = 50
    split: float = 0.9


@dataclass
class PuDataset:
    positive: np.ndarray
    mixed: np.ndarray

    def __post_init__(self):
        self.positive = np.asarray(self.positive, dtype=np.uint8)
        self.mixed = np.asarray(self.mixed, dtype=np.uint8)
        if len(self.positive) == 0 or len(self.mixed) == 0:
            raise ValueError("PU learning needs non-empty positive and mixed sets")
        if self.positive.shape[1] != self.mixed.shape[1]:
            raise ValueError("positive and mixed examples differ in width")
        self.mixed = remove_rows(self.mixed, self.positive)
        if len(self.mixed) == 0:
            raise ValueError("every mixed example is a known positive")

    def split(self, rng: nd.RngStream, ratio: float):
        """Shuffle positives and mixed together, cut train/validation at ``ratio``."""
        x = np.concatenate([self.positive, self.mixed]).astype(np.float32)
        y = np.concatenate([np.ones(len(self.positive)), np.zeros(len(self.mixed))]).astype(np.float32)
        order = rng.permutation(len(x))
        x, y = x[order], y[order]
        cut = int(round(ratio * len(x)))
        return (x[:cut], y[:cut]), (x[cut:], y[cut:])


def remove_rows(rows: np.ndarray, exclude: np.ndarray) -> np.ndarray:
    """Rows of ``rows`` (deduplicated, order kept) that do not occur in ``exclude``."""
    seen = {r.tobytes() for r in np.asarray(exclude, dtype=np.uint8)}
    out = []
    for r in np.asarray(rows, dtype=np.uint8):
        k = r.tobytes()
        if k not in seen:
            seen.add(k)
            out.append(r)
    width = np.asarray(rows).shape[1]
    return np.array(out, dtype=np.uint8).reshape(-1, width)


@dataclass
class DiscriminatorModel:
    arch: str
    net: list
    c: float
    report: dict = field(default_factory=dict)
    kind: str = "sd"

    def d1(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=np.float32))
        out = np.concatenate(
            [nd.forward(self.net, x[i : i + 4096], "infer").data for i in range(0, len(x), 4096)]
        ) if len(x) else np.zeros((0, 1), np.float32)
        return out.reshape(-1)

    def d2(self, x) -> np.ndarray:
        return self.c * self.d1(x)

    def save(self, path):
        meta = {"arch": self.arch, "c": self.c, "report": self.report}
        checkpoint.save(path, self.kind, meta, {"net": self.net})

    @classmethod
    def load(cls, path) -> "DiscriminatorModel":
        kind, meta, nets = checkpoint.load(path)
        if kind not in ("sd", "ad"):
            raise checkpoint.CheckpointError(f"{path}: expected a discriminator, got {kind}")
        return cls(meta["arch"], nets["net"], float(meta["c"]), meta["report"], kind)


def _fit(net, train, val, cfg: PuConfig, rng: nd.RngStream):
    """Adam on binary cross-entropy with early stopping on validation loss;
    restores the best weights.  Returns (best val loss, val accuracy, epochs)."""
    params = nd.parameters(net)
    state = nd.AdamState.for_params(params)
    (xt, yt), (xv, yv) = train, val
    best = (math.inf, None, 0)
    since = 0
    epoch = 0
    for epoch in range(cfg.epochs):
        order = rng.permutation(len(xt))
        for start in range(0, len(xt), cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            if len(idx) < 2:
                continue
            out = nd.forward(net, xt[idx], "train", rng)
            loss = nd.bce_loss(out, yt[idx, None])
            nd.adam_step(params, nd.backward(loss.tape, loss), state, cfg.lr)
        pv = nd.forward(net, xv, "infer").data
        vloss = float(nd.bce_loss(nd.Tensor(pv), yv[:, None]).data)
        if vloss < best[0] - 1e-6:
            snapshot = [(p.data.copy()) for p in params] + [
                {k: v.copy() for k, v in layer.buffers.items()} for layer in net
            ]
            best = (vloss, snapshot, epoch)
            since = 0
        else:
            since += 1
            if since >= cfg.patience:
                break
    if best[1] is not None:
        for p, saved in zip(params, best[1]):
            p.data[...] = saved
        for layer, bufs in zip(net, best[1][len(params):]):
            layer.buffers.update(bufs)
    pv = nd.forward(net, xv, "infer").data.reshape(-1)
    acc = float(((pv >= 0.5) == (yv >= 0.5)).mean())
    return best[0], acc, epoch + 1


def pu_train(data: PuDataset, archs, rng: nd.RngStream, cfg: PuConfig | None = None,
             kind: str = "sd") -> DiscriminatorModel:
    """Train ``d1`` (positive vs mixed) for each architecture, keep the one
    with the best validation accuracy, then calibrate ``c = mean d1(p2)``."""
    cfg = cfg or PuConfig()
    train, val = data.split(rng, cfg.split)
    if not (val[1] == 1).any():
        raise ValueError("validation split holds no positives; cannot calibrate")
    width = data.positive.shape[1]
    best = None
    trials = {}
    for arch in archs:
        net = discriminator_net(arch)
        nd.build(net, (width,), rng)
        vloss, acc, epochs = _fit(net, train, val, cfg, rng)
        trials[arch] = {"val_loss": vloss, "val_accuracy": acc, "epochs": epochs}
        log.info("%s %s: val loss %.4f acc %.4f after %d epochs", kind, arch, vloss, acc, epochs)
        if best is None or acc > best[0]:
            best = (acc, arch, net)
    _, arch, net = best
    model = DiscriminatorModel(arch, net, 1.0, kind=kind)
    p2 = val[0][val[1] == 1]
    c = float(model.d1(p2).mean())
    if not c > 0:
        raise ValueError("calibration constant is 0: the classifier rejects every held-out positive")
    model.c = min(c, 1.0)
    model.report = {"trials": trials, "c": model.c, "positives": len(data.positive), "mixed": len(data.mixed)}
    return model


def train_sd(positive_states, mixed_states, rng, cfg: PuConfig | None = None) -> DiscriminatorModel:
    cfg = cfg or PuConfig(lr=1e-4)
    return pu_train(PuDataset(positive_states, mixed_states), [SD_ARCH], rng, cfg, kind="sd")


def train_ad(transitions, mixed, rng, cfg: PuConfig | None = None, archs=None) -> DiscriminatorModel:
    """AD on concatenated ``(s, t)``; ``mixed`` as returned by ``gen_mixed_ad``."""
    pos = np.concatenate(as_pairs(transitions), axis=1)
    mix = np.concatenate(as_pairs(mixed), axis=1)
    return pu_train(PuDataset(pos, mix), archs or AD_ARCHS, rng, cfg, kind="ad")


def sd_score(model: DiscriminatorModel, s) -> np.ndarray:
    return model.d2(s)


def ad_score(model: DiscriminatorModel, s, t) -> np.ndarray:
    s = np.atleast_2d(s)
    t = np.atleast_2d(t)
    return model.d2(np.concatenate([s, t], axis=1))


# -- mixed example generation ------------------------------------------------

def gen_mixed_ad(transitions, aae: AaeModel, sd: DiscriminatorModel | None = None):
    """Apply every used label to every before-state; drop known positives and,
    with an SD, successors it deems invalid.  Returns ``(mixed_pre, mixed_post)``."""
    pre, post = as_pairs(transitions)
    n = pre.shape[1]
    befores = np.unique(pre, axis=0)
    labels = np.asarray(aae.used_labels)
    s_rep = np.repeat(befores, len(labels), axis=0)
    l_rep = np.tile(labels, len(befores))
    t = aae.apply_label(l_rep, s_rep)
    pairs = np.concatenate([s_rep, t], axis=1)
    if sd is not None:
        pairs = pairs[sd_score(sd, t) >= 0.5]
    pairs = remove_rows(pairs, np.concatenate([pre, post], axis=1))
    return pairs[:, :n], pairs[:, n:]


def gen_mixed_sd(sae_model, count: int, k_iters: int, rng: nd.RngStream, exclude=None) -> np.ndarray:
    """Uniform random bitvectors pushed ``k_iters`` times through
    ``encode(decode(.))``; rows in ``exclude`` (known positives) are dropped."""
    if k_iters < 1:
        raise ValueError("k_iters must be at least 1")
    b = rng.integers(0, 2, (count, sae_model.n_bits)).astype(np.uint8)
    b = iterate_autoencode(sae_model, b, k_iters)
    if exclude is not None:
        return remove_rows(b, exclude)
    return b


def iterate_autoencode(sae_model, bits, k_iters: int) -> np.ndarray:
    b = np.asarray(bits, dtype=np.uint8)
    for _ in range(k_iters):
        b = sae_model.autoencode_bits(b)
    return b
