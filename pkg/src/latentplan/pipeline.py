"""End-to-end glue: datasets, model training, solving and evaluation.

Both the command line and the acceptance tests drive the system through
these functions, so the two always exercise the same code path.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from . import ama1, ama2, planner
from .domains import Domain, sample_instances, validate_plan
from .domains.base import bfs_path_length
from .domains.imageio import gaussian_corrupt, saltpepper_corrupt
from .ndcore import RngStream
from .sae import SaeConfig, SaeModel, train_sae

log = logging.getLogger(__name__)

NOISE_LEVELS = {"gaussian": 0.3, "saltpepper": 0.06}
BENCHMARKS = {"A": 7, "B": 14}


# -- datasets -----------------------------------------------------------------

@dataclass
class TransitionData:
    """Ground-truth transitions with their renderings and a train/val split."""

    pre_states: list
    post_states: list
    pre_images: np.ndarray
    post_images: np.ndarray
    train: np.ndarray
    val: np.ndarray

    def __len__(self):
        return len(self.pre_states)

    @property
    def all(self) -> np.ndarray:
        return np.arange(len(self))

    def images(self, which: str = "train") -> np.ndarray:
        """Pre and post images of one split (``train``, ``val`` or ``all``)."""
        idx = getattr(self, which)
        return np.concatenate([self.pre_images[idx], self.post_images[idx]])


def make_transitions(domain: Domain, rng: RngStream, count: int | None = None,
                     train_ratio: float = 0.9) -> TransitionData:
    """Every transition (``count=None``) or ``count`` random ones, each from a
    uniformly drawn state to a uniformly drawn successor."""
    if count is None:
        pairs = domain.transitions()
    else:
        states = sorted(domain.all_states())
        pairs = []
        for i in rng.integers(0, len(states), count):
            s = states[int(i)]
            succ = sorted(domain.successors(s))
            pairs.append((s, succ[int(rng.integers(len(succ)))]))
    pre = [s for s, _ in pairs]
    post = [t for _, t in pairs]
    order = rng.permutation(len(pairs))
    cut = int(round(train_ratio * len(pairs)))
    return TransitionData(
        pre, post, domain.render_many(pre), domain.render_many(post),
        np.sort(order[:cut]), np.sort(order[cut:]),
    )


def corrupt(images, noise: str, rng: RngStream) -> np.ndarray:
    if noise in (None, "none", "std"):
        return np.asarray(images, dtype=np.float32)
    if noise == "gaussian":
        return gaussian_corrupt(images, NOISE_LEVELS["gaussian"], rng)
    if noise == "saltpepper":
        return saltpepper_corrupt(images, NOISE_LEVELS["saltpepper"], rng)
    raise ValueError(f"unknown noise condition {noise!r}")


# -- models ---------------------------------------------------------------------

def fit_sae(domain: Domain, data: TransitionData, rng: RngStream, which: str = "train",
            **overrides) -> SaeModel:
    """Train on the distinct images of one split; ``overrides`` patch the
    per-domain ``SaeConfig`` defaults."""
    images = np.unique(data.images(which), axis=0)
    cfg = SaeConfig.for_domain(domain.name, domain.image_shape, **overrides)
    return train_sae(images, cfg, rng)


def encode_pairs(sae: SaeModel, data: TransitionData, which: str = "train"):
    idx = getattr(data, which)
    return sae.state_bits(data.pre_images[idx]), sae.state_bits(data.post_images[idx])


def build_ama1(sae: SaeModel, data: TransitionData, which: str = "train") -> ama1.StripsProblem:
    return ama1.compile(encode_pairs(sae, data, which))


@dataclass
class Ama2Models:
    aae: ama2.AaeModel
    sd: ama2.DiscriminatorModel
    ad: ama2.DiscriminatorModel

    def succ_config(self, sae: SaeModel, **toggles) -> planner.SuccConfig:
        return planner.SuccConfig(self.aae, self.ad, self.sd, sae, **toggles)


@dataclass
class Ama2Settings:
    aae: ama2.AaeConfig = field(default_factory=ama2.AaeConfig)
    sd: ama2.PuConfig = field(default_factory=lambda: ama2.PuConfig(lr=1e-4))
    ad: ama2.PuConfig = field(default_factory=ama2.PuConfig)
    sd_mixed_factor: int = 4
    k_iters: int = 2


def fit_sd(sae: SaeModel, pre, post, rng: RngStream, settings: Ama2Settings | None = None):
    """SD on every observed state against autoencoder-stable random codes.

    Positives keep their multiplicity in the transition data, so a state
    seen in many transitions weighs more than a state seen once.
    """
    settings = settings or Ama2Settings()
    states = np.concatenate([pre, post])
    mixed = ama2.gen_mixed_sd(sae, settings.sd_mixed_factor * len(states), settings.k_iters,
                              rng.fork(), exclude=states)
    return ama2.train_sd(states, mixed, rng.fork(), settings.sd)


def fit_ama2(sae: SaeModel, pre, post, rng: RngStream, settings: Ama2Settings | None = None) -> Ama2Models:
    """AAE on the transitions, SD on the visited states, then AD on positives
    against SD-pruned AAE successors."""
    settings = settings or Ama2Settings()
    aae_cfg = settings.aae
    if aae_cfg.n_bits != sae.n_bits:
        aae_cfg = ama2.AaeConfig(**{**aae_cfg.__dict__, "n_bits": sae.n_bits})
    aae = ama2.train_aae((pre, post), aae_cfg, rng.fork())
    sd = fit_sd(sae, pre, post, rng.fork(), settings)
    mixed = ama2.gen_mixed_ad((pre, post), aae, sd)
    ad = ama2.train_ad((pre, post), mixed, rng.fork(), settings.ad)
    return Ama2Models(aae, sd, ad)


# -- solving --------------------------------------------------------------------

def solve_images(method: str, sae: SaeModel, model, init_image, goal_image, *,
                 time_limit: float = 180.0, heuristic: str | None = None) -> planner.PlanResult:
    """Encode both images and search in the chosen action model.

    ``model`` is a ``StripsProblem`` (ama1) or a ``SuccConfig`` (ama2).  The
    default heuristic is blind for ama1, so plans are shortest in the
    compiled graph, and goal-count for ama2.
    """
    init, goal = sae.state_bits(np.stack([init_image, goal_image]))
    heuristic = heuristic or ("blind" if method == "ama1" else "goal-count")
    h_fn = {"blind": planner.zero_heuristic, "goal-count": planner.goal_count}[heuristic]
    if method == "ama1":
        return planner.astar(init, goal, planner.strips_successors(model), h_fn, time_limit=time_limit)
    if method == "ama2":
        return planner.astar(init, goal, planner.ama2_successors(model), h_fn, time_limit=time_limit)
    raise ValueError(f"unknown method {method!r}")


def decode_plan(domain: Domain, sae: SaeModel, result: planner.PlanResult):
    """Decoded images of the plan's states and their classified domain states."""
    if not result.states:
        return np.zeros((0, *domain.image_shape), np.float32), []
    images = sae.decode(np.stack([planner.unkey(k) for k in result.states]))
    return images, [domain.classify(im) for im in images]


def run_instances(domain: Domain, sae: SaeModel, method: str, model, instances, *,
                  noise: str = "none", rng: RngStream | None = None, time_limit: float = 180.0,
                  heuristic: str | None = None, optimal: bool = False) -> dict:
    """Solve and validate each instance; returns a JSON-able report."""
    rng = rng or RngStream(0)
    records = []
    for i, inst in enumerate(instances):
        init_img = corrupt(inst.init_image, noise, rng)
        goal_img = corrupt(inst.goal_image, noise, rng)
        result = solve_images(method, sae, model, init_img, goal_img, time_limit=time_limit, heuristic=heuristic)
        _, decoded = decode_plan(domain, sae, result)
        valid = result.solved and validate_plan(domain, inst.init, inst.goal, decoded)
        rec = {
            "id": i,
            "init": list(inst.init),
            "goal": list(inst.goal),
            "status": result.status,
            "plan_length": result.length,
            "valid": bool(valid),
            "expanded": result.expanded,
            "wall_time": result.wall_time,
            "plan": result.to_json(),
        }
        if optimal:
            rec["optimal_length"] = bfs_path_length(domain, inst.init, inst.goal)
            rec["optimal"] = bool(valid and rec["plan_length"] == rec["optimal_length"])
        records.append(rec)
        log.info("instance %d: %s length=%s valid=%s", i, result.status, result.length, valid)
    solved = sum(r["valid"] for r in records)
    report = {"method": method, "noise": noise, "instances": len(records), "solved": solved,
              "solved_rate": solved / max(1, len(records)), "records": records}
    if optimal:
        report["optimal"] = sum(r["optimal"] for r in records)
    return report


def benchmark_instances(domain: Domain, benchmark: str, count: int, rng: RngStream):
    return sample_instances(domain, count, BENCHMARKS[benchmark], rng)


# -- discriminator evaluation -------------------------------------------------

def discriminator_errors(domain: Domain, sae: SaeModel, models: Ama2Models, rng: RngStream,
                         samples: int = 30000, k_iters: int = 2) -> dict:
    """Type-1 (valid rejected) and type-2 (invalid accepted) rates of SD and AD.

    Valid states/transitions come from the ground truth; invalid states are
    autoencoder-stable random codes whose decoding is not a domain state;
    invalid transitions are AAE successors of valid states that are not
    ground-truth moves.
    """
    states = sorted(domain.all_states())
    codes = sae.state_bits(domain.render_many(states))
    code_of = dict(zip(states, codes))
    sd_type1 = float((models.sd.d2(codes) < 0.5).mean())

    rand = ama2.gen_mixed_sd(sae, samples, k_iters, rng, exclude=codes)
    decoded = [domain.classify(im) for im in sae.decode(rand)] if len(rand) else []
    invalid = rand[np.array([c is None for c in decoded], dtype=bool)] if len(rand) else rand
    sd_type2 = float((models.sd.d2(invalid) >= 0.5).mean()) if len(invalid) else 0.0

    pairs = domain.transitions(states)
    pre = np.stack([code_of[s] for s, _ in pairs])
    post = np.stack([code_of[t] for _, t in pairs])
    ad_type1 = float((ama2.ad_score(models.ad, pre, post) < 0.5).mean())

    labels = np.asarray(models.aae.used_labels)
    s_rep = np.repeat(codes, len(labels), axis=0)
    t = models.aae.apply_label(np.tile(labels, len(codes)), s_rep)
    known = {np.concatenate([a, b]).tobytes() for a, b in zip(pre, post)}
    bad = np.array([np.concatenate([a, b]).tobytes() not in known for a, b in zip(s_rep, t)], dtype=bool)
    ad_type2 = float((ama2.ad_score(models.ad, s_rep[bad], t[bad]) >= 0.5).mean()) if bad.any() else 0.0
    return {
        "sd": {"type1": sd_type1, "type2": sd_type2, "valid": len(codes), "invalid": int(len(invalid))},
        "ad": {"type1": ad_type1, "type2": ad_type2, "valid": len(pre), "invalid": int(bad.sum())},
        "used_labels": len(labels),
    }


def timed(fn, *args, **kw):
    start = time.perf_counter()
    out = fn(*args, **kw)
    return out, time.perf_counter() - start
