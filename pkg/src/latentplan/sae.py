"""State autoencoder: a Gumbel-Softmax VAE between images and N-bit states.

Encoder: Gaussian input noise, two conv/tanh/bn/dropout blocks, a dense layer
producing ``N x M`` logits.  Latent: Gumbel-Softmax over the M categories.
Decoder: two dense/relu/bn/dropout blocks and a sigmoid image.  With ``M = 2``
bit ``j`` of a state is the first category of row ``j``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import ndcore as nd
from .ndcore import checkpoint, ops

log = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    pass


@dataclass
class AnnealSchedule:
    """``tau(t) = max(tau_min, tau0 * exp(-r t))`` with ``r`` chosen so the
    final epoch reaches ``tau_min``."""

    tau0: float = 5.0
    tau_min: float = 0.7
    epochs: int = 100

    @property
    def rate(self) -> float:
        if self.epochs <= 1:
            return 0.0
        return math.log(self.tau0 / self.tau_min) / (self.epochs - 1)

    def __call__(self, epoch: int) -> float:
        if self.epochs <= 1:
            return self.tau_min
        return max(self.tau_min, self.tau0 * math.exp(-self.rate * epoch))


@dataclass
class SaeConfig:
    input_dims: tuple = (36, 36)
    n_bits: int = 36
    categories: int = 2
    noise_sigma: float = 0.4
    epochs: int = 100
    batch_size: int = 2000
    lr: float = 1e-3
    lr_late: float = 1e-4
    tau0: float = 5.0
    tau_min: float = 0.7
    conv_channels: int = 16
    dropout: float = 0.4
    hidden: int = 1000
    kl_weight: float = 1.0
    canonical_rounds: int = 1

    def __post_init__(self):
        self.input_dims = tuple(int(d) for d in self.input_dims)
        if self.tau_min <= 0:
            raise ValueError("tau_min must be positive")

    @property
    def latent_width(self) -> int:
        return self.n_bits * self.categories

    @property
    def schedule(self) -> AnnealSchedule:
        return AnnealSchedule(self.tau0, self.tau_min, self.epochs)

    @classmethod
    def for_domain(cls, name: str, input_dims, **overrides) -> "SaeConfig":
        """Per-domain defaults of the full-scale setup."""
        presets = {
            "puzzle8": dict(epochs=150, batch_size=4000),
            "lightsout": dict(epochs=100, batch_size=2000),
            "twisted_lightsout": dict(epochs=100, batch_size=2000),
            "hanoi": dict(conv_channels=12, dropout=0.6, batch_size=500),
        }
        kw = dict(presets.get(name, {}))
        kw.update(overrides)
        return cls(input_dims=tuple(input_dims), **kw)

    def to_dict(self):
        d = asdict(self)
        d["input_dims"] = list(self.input_dims)
        return d


def _encoder(cfg: SaeConfig):
    return [
        nd.gaussian_noise(cfg.noise_sigma),
        nd.reshape(1, *cfg.input_dims),
        nd.conv2d(3, 3, cfg.conv_channels),
        nd.activation("tanh"),
        nd.batchnorm(),
        nd.dropout(cfg.dropout),
        nd.conv2d(3, 3, cfg.conv_channels),
        nd.activation("tanh"),
        nd.batchnorm(),
        nd.dropout(cfg.dropout),
        nd.dense(cfg.latent_width),
        nd.reshape(cfg.n_bits, cfg.categories),
    ]


def _decoder(cfg: SaeConfig):
    h, w = cfg.input_dims
    return [
        nd.dense(cfg.hidden),
        nd.activation("relu"),
        nd.batchnorm(),
        nd.dropout(cfg.dropout),
        nd.dense(cfg.hidden),
        nd.activation("relu"),
        nd.batchnorm(),
        nd.dropout(cfg.dropout),
        nd.dense(h * w),
        nd.activation("sigmoid"),
        nd.reshape(h, w),
    ]


@dataclass
class SaeModel:
    config: SaeConfig
    encoder: list
    latent: list
    decoder: list
    report: dict = field(default_factory=dict)

    @classmethod
    def init(cls, cfg: SaeConfig, rng: nd.RngStream) -> "SaeModel":
        enc, lat, dec = _encoder(cfg), [nd.gumbel_softmax_layer(cfg.n_bits, cfg.categories, cfg.tau0)], _decoder(cfg)
        nd.build(enc, cfg.input_dims, rng)
        nd.build(lat, (cfg.n_bits, cfg.categories), rng)
        nd.build(dec, (cfg.n_bits, cfg.categories), rng)
        return cls(cfg, enc, lat, dec)

    @property
    def n_bits(self):
        return self.config.n_bits

    def parameters(self):
        return nd.parameters(self.encoder) + nd.parameters(self.decoder)

    # inference

    def logits(self, images, chunk: int = 512) -> np.ndarray:
        x = self._as_batch(images)
        return np.concatenate(
            [nd.forward(self.encoder, x[i : i + chunk], "infer").data for i in range(0, len(x), chunk)]
        )

    def encode(self, images, chunk: int = 512) -> np.ndarray:
        """Deterministic bits: argmax category per row, bit = (argmax == 0)."""
        single = np.asarray(images).ndim == len(self.config.input_dims)
        bits = (np.argmax(self.logits(images, chunk), axis=-1) == 0).astype(np.uint8)
        return bits[0] if single else bits

    def decode(self, bits, chunk: int = 512) -> np.ndarray:
        b = np.asarray(bits)
        single = b.ndim == 1
        b = b.reshape(-1, b.shape[-1])
        if b.shape[1] != self.n_bits:
            raise ValueError(f"decode: expected {self.n_bits} bits, got {b.shape[1]}")
        if self.config.categories != 2:
            raise ValueError("bit decoding needs categories == 2")
        z = np.stack([b, 1 - b], axis=-1).astype(np.float32)
        out = np.concatenate(
            [nd.forward(self.decoder, z[i : i + chunk], "infer").data for i in range(0, len(z), chunk)]
        )
        return out[0] if single else out

    def autoencode_bits(self, bits) -> np.ndarray:
        return self.encode(self.decode(bits))

    def state_bits(self, images, rounds: int | None = None) -> np.ndarray:
        """Planning state of an image: ``encode`` followed by ``rounds`` passes
        of ``encode(decode(.))``.  The decoder maps low-margin bit flips
        caused by input noise back onto a clean image, so one pass makes the
        code of a corrupted image agree with that of the clean one."""
        rounds = self.config.canonical_rounds if rounds is None else rounds
        bits = self.encode(images)
        for _ in range(rounds):
            bits = self.autoencode_bits(bits)
        return bits

    def sample_bits(self, images, rng: nd.RngStream) -> np.ndarray:
        """One hard Gumbel-Max draw of the latent per image."""
        logits = self.logits(images)
        return (np.argmax(logits + rng.gumbel(logits.shape), axis=-1) == 0).astype(np.uint8)

    def _as_batch(self, images):
        x = np.asarray(images, dtype=np.float32)
        dims = self.config.input_dims
        if x.shape == dims:
            x = x[None]
        if x.shape[1:] != dims:
            raise ValueError(f"expected images of shape {dims}, got {x.shape[1:]}")
        return x

    # persistence

    def save(self, path):
        meta = {"config": self.config.to_dict(), "report": self.report}
        checkpoint.save(path, "sae", meta, {"encoder": self.encoder, "latent": self.latent, "decoder": self.decoder})

    @classmethod
    def load(cls, path) -> "SaeModel":
        kind, meta, nets = checkpoint.load(path)
        if kind != "sae":
            raise checkpoint.CheckpointError(f"{path}: expected an sae checkpoint, got {kind}")
        return cls(SaeConfig(**meta["config"]), nets["encoder"], nets["latent"], nets["decoder"], meta["report"])


def encode(model: SaeModel, r) -> np.ndarray:
    return model.encode(r)


def decode(model: SaeModel, b) -> np.ndarray:
    return model.decode(b)


def sae_loss(model: SaeModel, x: np.ndarray, rng: nd.RngStream):
    """Training loss for one batch: per-image summed BCE plus weighted KL."""
    cfg = model.config
    logits = nd.forward(model.encoder, x, "train", rng)
    z = nd.forward(model.latent, logits, "train", rng)
    recon = nd.forward(model.decoder, z, "train", rng)
    pixels = int(np.prod(cfg.input_dims))
    rec = ops.scale(nd.bce_loss(recon, x), pixels)
    kl = nd.gs_variational_loss(ops.softmax(logits))
    return ops.add(rec, ops.scale(kl, cfg.kl_weight)), rec, kl


def train_sae(images, cfg: SaeConfig, rng: nd.RngStream, verbose: bool = False) -> SaeModel:
    x_all = np.asarray(images, dtype=np.float32)
    if len(x_all) == 0:
        raise ValueError("train_sae: empty dataset")
    if x_all.shape[1:] != cfg.input_dims:
        raise ValueError(f"train_sae: images are {x_all.shape[1:]}, config says {cfg.input_dims}")
    model = SaeModel.init(cfg, rng)
    params = model.parameters()
    state = nd.AdamState.for_params(params)
    schedule = cfg.schedule
    half = cfg.epochs // 2
    history = []
    for epoch in range(cfg.epochs):
        tau = schedule(epoch)
        nd.set_temperature(model.latent, tau)
        lr = cfg.lr if epoch < half else cfg.lr_late
        order = rng.permutation(len(x_all))
        totals = np.zeros(3)
        for start in range(0, len(x_all), cfg.batch_size):
            batch = x_all[order[start : start + cfg.batch_size]]
            if len(batch) < 2:
                continue  # batchnorm needs a real batch
            loss, rec, kl = sae_loss(model, batch, rng)
            values = (float(loss.data), float(rec.data), float(kl.data))
            if not all(np.isfinite(values)):
                raise TrainingError(
                    f"non-finite loss at epoch {epoch}, batch starting {start}: "
                    f"total={values[0]} recon={values[1]} kl={values[2]} tau={tau} lr={lr}"
                )
            grads = nd.backward(loss.tape, loss)
            nd.adam_step(params, grads, state, lr)
            totals += np.array(values) * len(batch)
        totals /= len(x_all)
        history.append({"epoch": epoch, "tau": tau, "lr": lr, "loss": totals[0], "recon": totals[1], "kl": totals[2]})
        if verbose or epoch == cfg.epochs - 1:
            log.info("sae epoch %d tau=%.3f loss=%.4f recon=%.4f kl=%.4f", epoch, tau, *totals)
    nd.set_temperature(model.latent, cfg.tau_min)
    model.report = {
        "final_loss": history[-1]["loss"],
        "final_recon": history[-1]["recon"],
        "final_kl": history[-1]["kl"],
        "reconstruction_mae": float(reconstruction_error(model, x_all)),
    }
    return model


def reconstruction_error(model: SaeModel, images) -> float:
    """Mean absolute pixel error of ``decode(encode(r))``."""
    x = np.asarray(images, dtype=np.float32)
    return float(np.abs(model.decode(model.encode(x)) - x).mean())


def bit_stability(model: SaeModel, images) -> float:
    """Fraction of images with ``encode(decode(encode(r))) == encode(r)``."""
    b = model.encode(images)
    return float(np.all(model.autoencode_bits(b) == b, axis=1).mean())


def augment_states(model: SaeModel, images, k: int, rng: nd.RngStream) -> list[np.ndarray]:
    """Up to ``k`` distinct bitvectors per image: the deterministic encoding
    first, then hard Gumbel-Max samples of the latent."""
    if k < 1:
        raise ValueError("k must be at least 1")
    x = model._as_batch(images)
    base = model.encode(x)
    found = [{b.tobytes(): b} for b in base]
    for _ in range(k - 1):
        draw = model.sample_bits(x, rng)
        for seen, b in zip(found, draw):
            if len(seen) < k:
                seen.setdefault(b.tobytes(), b)
    return [np.stack(list(seen.values())) for seen in found]
