"""Command line driver.

Every stage reads a JSON run config and works inside one output directory::

    latentplan gen-data   --config run.json --out runs/lo3
    latentplan train-sae  --config run.json --out runs/lo3
    latentplan solve      --config run.json --out runs/lo3 --method ama1
    latentplan eval       --config run.json --out runs/lo3 --method ama2 --benchmark A --noise gaussian

Exit status is 0 whenever the command ran, even if instances stay unsolved;
operational failures (missing checkpoints, bad configs) exit with 1.
"""

from __future__ import annotations

import os

if "LATENTPLAN_THREADS" in os.environ:  # must precede the numpy import
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(_var, os.environ["LATENTPLAN_THREADS"])

import argparse
import json
import logging
import sys
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import ama1, ama2, io, pipeline, planner
from .domains import Instance, make, validate_plan
from .domains.imageio import read_pgm, write_pgm, write_ppm_strip
from .ndcore import RngStream
from .sae import SaeModel

log = logging.getLogger("latentplan")


class StageError(RuntimeError):
    """An operational failure: missing input, bad configuration."""


DEFAULT_DOMAIN = {"name": "lightsout", "n": 3}


@dataclass
class RunConfig:
    domain: dict = field(default_factory=lambda: dict(DEFAULT_DOMAIN))
    seed: int = 0
    transitions: int | None = None
    train_ratio: float = 0.9
    sae: dict = field(default_factory=dict)
    sae_split: str = "train"
    ama1_split: str = "train"
    aae: dict = field(default_factory=dict)
    sd: dict = field(default_factory=dict)
    ad: dict = field(default_factory=dict)
    sd_mixed_factor: int = 4
    k_iters: int = 2
    instances: int = 100
    time_limit: float = 180.0
    heuristic: dict = field(default_factory=dict)

    @classmethod
    def from_args(cls, args) -> "RunConfig":
        raw = {}
        if args.config:
            try:
                raw = json.loads(Path(args.config).read_text())
            except (OSError, json.JSONDecodeError) as e:
                raise StageError(f"cannot read config {args.config}: {e}") from e
        unknown = set(raw) - set(cls.__dataclass_fields__)
        if unknown:
            raise StageError(f"unknown config keys: {sorted(unknown)}")
        cfg = cls(**raw)
        if args.seed is not None:
            cfg.seed = args.seed
        if args.domain:
            name, _, rest = args.domain.partition(":")
            spec = {"name": name}
            if rest:
                spec.update(json.loads(rest))
            elif cfg.domain.get("name") == name:
                spec = dict(cfg.domain)
            cfg.domain = spec
        if args.time_limit is not None:
            cfg.time_limit = args.time_limit
        return cfg

    def rng(self, stage: str) -> RngStream:
        """Independent stream per stage so stages can be rerun in isolation."""
        return RngStream(self.seed, counter=zlib.crc32(stage.encode()))

    def ama2_settings(self) -> pipeline.Ama2Settings:
        return pipeline.Ama2Settings(
            aae=ama2.AaeConfig(**self.aae),
            sd=ama2.PuConfig(**{"lr": 1e-4, **self.sd}),
            ad=ama2.PuConfig(**self.ad),
            sd_mixed_factor=self.sd_mixed_factor,
            k_iters=self.k_iters,
        )


class Workspace:
    """File layout of one run directory."""

    def __init__(self, root):
        self.root = Path(root)

    def path(self, name) -> Path:
        return self.root / name

    def require(self, name, stage) -> Path:
        p = self.path(name)
        if not p.exists():
            raise StageError(f"{p} is missing; run `latentplan {stage}` first")
        return p

    def write_json(self, name, obj):
        p = self.path(name)
        p.parent.mkdir(parents=True, exist_ok=True)
        p.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")
        return p

    def read_json(self, name, stage):
        return json.loads(self.require(name, stage).read_text())

    # datasets

    def save_data(self, data: pipeline.TransitionData, domain_spec):
        io.save_tensor(self.path("pre.lpt"), data.pre_images)
        io.save_tensor(self.path("post.lpt"), data.post_images)
        self.write_json("transitions.json", {
            "domain": domain_spec,
            "pre": [list(s) for s in data.pre_states],
            "post": [list(s) for s in data.post_states],
            "train": data.train.tolist(),
            "val": data.val.tolist(),
        })

    def load_data(self) -> pipeline.TransitionData:
        index = self.read_json("transitions.json", "gen-data")
        return pipeline.TransitionData(
            [tuple(s) for s in index["pre"]],
            [tuple(s) for s in index["post"]],
            io.load_tensor(self.require("pre.lpt", "gen-data")),
            io.load_tensor(self.require("post.lpt", "gen-data")),
            np.asarray(index["train"], dtype=np.int64),
            np.asarray(index["val"], dtype=np.int64),
        )

    # models

    def sae(self) -> SaeModel:
        return SaeModel.load(self.require("sae.lpw", "train-sae"))

    def ama2(self) -> pipeline.Ama2Models:
        return pipeline.Ama2Models(
            ama2.AaeModel.load(self.require("aae.lpw", "train-aae")),
            ama2.DiscriminatorModel.load(self.require("sd.lpw", "train-sd")),
            ama2.DiscriminatorModel.load(self.require("ad.lpw", "train-ad")),
        )

    def ama1(self) -> ama1.StripsProblem:
        pre = io.load_bits(self.require("ama1_pre.lpb", "compile-ama1"))
        post = io.load_bits(self.require("ama1_post.lpb", "compile-ama1"))
        return ama1.StripsProblem(pre.shape[1], pre, post)


# -- subcommands ----------------------------------------------------------------

def cmd_gen_data(cfg: RunConfig, ws: Workspace, args):
    domain = make(cfg.domain)
    data = pipeline.make_transitions(domain, cfg.rng("gen-data"), cfg.transitions, cfg.train_ratio)
    ws.save_data(data, domain.describe())
    print(f"wrote {len(data)} transitions ({len(data.train)} train / {len(data.val)} val) to {ws.root}")


def _train_pairs(ws: Workspace, sae: SaeModel):
    data = ws.load_data()
    return pipeline.encode_pairs(sae, data, "train")


def cmd_train_sae(cfg: RunConfig, ws: Workspace, args):
    domain = make(cfg.domain)
    data = ws.load_data()
    sae = pipeline.fit_sae(domain, data, cfg.rng("train-sae"), cfg.sae_split, **cfg.sae)
    sae.save(ws.path("sae.lpw"))
    ws.write_json("sae_report.json", sae.report)
    print(json.dumps(sae.report))


def cmd_train_aae(cfg: RunConfig, ws: Workspace, args):
    sae = ws.sae()
    pre, post = _train_pairs(ws, sae)
    aae_cfg = ama2.AaeConfig(**{"n_bits": sae.n_bits, **cfg.aae})
    aae = ama2.train_aae((pre, post), aae_cfg, cfg.rng("train-aae"))
    aae.save(ws.path("aae.lpw"))
    ws.write_json("aae_report.json", aae.report)
    print(json.dumps(aae.report))


def cmd_train_sd(cfg: RunConfig, ws: Workspace, args):
    sae = ws.sae()
    pre, post = _train_pairs(ws, sae)
    sd = pipeline.fit_sd(sae, pre, post, cfg.rng("train-sd"), cfg.ama2_settings())
    sd.save(ws.path("sd.lpw"))
    ws.write_json("sd_report.json", sd.report)
    print(json.dumps({"arch": sd.arch, "c": sd.c}))


def cmd_train_ad(cfg: RunConfig, ws: Workspace, args):
    sae = ws.sae()
    pre, post = _train_pairs(ws, sae)
    aae = ama2.AaeModel.load(ws.require("aae.lpw", "train-aae"))
    sd = ama2.DiscriminatorModel.load(ws.require("sd.lpw", "train-sd"))
    mixed = ama2.gen_mixed_ad((pre, post), aae, sd)
    ad = ama2.train_ad((pre, post), mixed, cfg.rng("train-ad"), cfg.ama2_settings().ad)
    ad.save(ws.path("ad.lpw"))
    ws.write_json("ad_report.json", ad.report)
    print(json.dumps({"arch": ad.arch, "c": ad.c}))


def _task_images(cfg: RunConfig, args, domain):
    """Init/goal images from --init/--goal PGM files, else one benchmark instance."""
    if args.init or args.goal:
        if not (args.init and args.goal):
            raise StageError("--init and --goal must be given together")
        init_img, goal_img = read_pgm(args.init), read_pgm(args.goal)
        return None, init_img, goal_img
    inst = pipeline.benchmark_instances(domain, args.benchmark, 1, cfg.rng("task"))[0]
    return inst, inst.init_image, inst.goal_image


def cmd_compile_ama1(cfg: RunConfig, ws: Workspace, args):
    domain = make(cfg.domain)
    sae = ws.sae()
    problem = pipeline.build_ama1(sae, ws.load_data(), cfg.ama1_split)
    io.save_bits(ws.path("ama1_pre.lpb"), problem.pre)
    io.save_bits(ws.path("ama1_post.lpb"), problem.post)
    _, init_img, goal_img = _task_images(cfg, args, domain)
    init, goal = sae.state_bits(np.stack([init_img, goal_img]))
    dom, prob = ama1.emit_pddl(problem.with_task(init, goal), domain.name, f"{domain.name}-task")
    ws.path("domain.pddl").write_text(dom)
    ws.path("problem.pddl").write_text(prob)
    print(f"compiled {len(problem)} actions over {problem.n_bits} bits")


def _model(method: str, ws: Workspace, sae: SaeModel, args):
    if method == "ama1":
        return ws.ama1()
    return ws.ama2().succ_config(sae, sae_form=args.sae_form)


def _plan_record(domain, sae_path, result, inst, decoded):
    rec = result.to_json()
    rec.update({
        "domain": domain.describe(),
        "sae": str(sae_path),
        "decoded": [list(s) if s is not None else None for s in decoded],
    })
    if inst is not None:
        rec["init"], rec["goal"] = list(inst.init), list(inst.goal)
    return rec


def cmd_solve(cfg: RunConfig, ws: Workspace, args):
    domain = make(cfg.domain)
    sae = ws.sae()
    model = _model(args.method, ws, sae, args)
    inst, init_img, goal_img = _task_images(cfg, args, domain)
    rng = cfg.rng("solve")
    init_img = pipeline.corrupt(init_img, args.noise, rng)
    goal_img = pipeline.corrupt(goal_img, args.noise, rng)
    result = pipeline.solve_images(args.method, sae, model, init_img, goal_img,
                                   time_limit=cfg.time_limit, heuristic=cfg.heuristic.get(args.method))
    images, decoded = pipeline.decode_plan(domain, sae, result)
    if inst is None:
        init_state, goal_state = domain.classify(init_img), domain.classify(goal_img)
        if init_state is not None and goal_state is not None:
            inst = Instance(init_state, goal_state, init_img, goal_img, 0)
    rec = _plan_record(domain, ws.path("sae.lpw"), result, inst, decoded)
    if inst is not None:
        rec["valid"] = bool(result.solved and validate_plan(domain, inst.init, inst.goal, decoded))
    ws.write_json("plan.json", rec)
    if len(images):
        write_ppm_strip(ws.path("plan.ppm"), [init_img, *images, goal_img])
    print(json.dumps({k: rec.get(k) for k in ("status", "plan_length", "valid", "expanded", "wall_time")}))


def cmd_eval(cfg: RunConfig, ws: Workspace, args):
    domain = make(cfg.domain)
    sae = ws.sae()
    model = _model(args.method, ws, sae, args)
    count = args.count or cfg.instances
    instances = pipeline.benchmark_instances(domain, args.benchmark, count, cfg.rng(f"eval-{args.benchmark}"))
    report = pipeline.run_instances(
        domain, sae, args.method, model, instances, noise=args.noise,
        rng=cfg.rng(f"noise-{args.noise}"), time_limit=cfg.time_limit,
        heuristic=cfg.heuristic.get(args.method), optimal=args.method == "ama1",
    )
    tag = f"{args.method}_{args.benchmark}_{args.noise}"
    for rec in report["records"]:
        plan = rec.pop("plan")
        plan.update({"domain": domain.describe(), "sae": str(ws.path("sae.lpw")),
                     "init": rec["init"], "goal": rec["goal"]})
        rec["plan_file"] = str(ws.write_json(f"plans/{tag}/{rec['id']:03d}.json", plan))
    report["benchmark"] = args.benchmark
    if args.method == "ama2" and not args.skip_discriminators:
        report["discriminators"] = pipeline.discriminator_errors(domain, sae, ws.ama2(), cfg.rng("disc-eval"))
    path = ws.write_json(f"eval_{tag}.json", report)
    print(f"{report['solved']}/{report['instances']} solved; report in {path}")


def validate_plan_file(path) -> dict:
    """Decode the plan's bitvectors and check them against the ground truth."""
    rec = json.loads(Path(path).read_text())
    domain = make(rec["domain"])
    if rec.get("status") != "solved":
        return {"valid": False, "reason": f"status {rec.get('status')}"}
    if "init" not in rec or "goal" not in rec:
        return {"valid": False, "reason": "plan file lacks init/goal states"}
    sae_path = rec.get("sae")
    if sae_path and Path(sae_path).exists() and rec.get("states"):
        sae = SaeModel.load(sae_path)
        bits = np.array([[int(c) for c in s] for s in rec["states"]], dtype=np.uint8)
        decoded = [domain.classify(im) for im in sae.decode(bits)]
    else:
        decoded = [tuple(s) if s is not None else None for s in rec.get("decoded", [])]
    ok = validate_plan(domain, tuple(rec["init"]), tuple(rec["goal"]), decoded)
    return {"valid": bool(ok), "plan_length": rec.get("plan_length")}


def cmd_validate(cfg: RunConfig, ws: Workspace, args):
    if not Path(args.plan).exists():
        raise StageError(f"no plan file {args.plan}")
    print(json.dumps(validate_plan_file(args.plan)))


def cmd_visualize(cfg: RunConfig, ws: Workspace, args):
    """PPM strip of a plan's decoded states, or of sample dataset images."""
    out = Path(args.image) if args.image else ws.path("visualize.ppm")
    if args.plan:
        rec = json.loads(Path(args.plan).read_text())
        sae = SaeModel.load(rec["sae"]) if rec.get("sae") and Path(rec["sae"]).exists() else ws.sae()
        bits = np.array([[int(c) for c in s] for s in rec["states"]], dtype=np.uint8)
        if len(bits) == 0:
            raise StageError("plan has no states to draw")
        write_ppm_strip(out, sae.decode(bits))
    else:
        data = ws.load_data()
        idx = data.train[:8]
        images = [im for i in idx for im in (data.pre_images[i], data.post_images[i])]
        write_ppm_strip(out, images)
        if args.pgm_dir:
            d = Path(args.pgm_dir)
            d.mkdir(parents=True, exist_ok=True)
            for j, im in enumerate(images):
                write_pgm(d / f"{j:02d}.pgm", im)
    print(f"wrote {out}")


COMMANDS = {
    "gen-data": cmd_gen_data,
    "train-sae": cmd_train_sae,
    "train-aae": cmd_train_aae,
    "train-sd": cmd_train_sd,
    "train-ad": cmd_train_ad,
    "compile-ama1": cmd_compile_ama1,
    "solve": cmd_solve,
    "eval": cmd_eval,
    "validate": cmd_validate,
    "visualize": cmd_visualize,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run config")
    common.add_argument("--seed", type=int, help="overrides the config seed")
    common.add_argument("--out", default=".", help="run directory (default: .)")
    common.add_argument("--domain", help="domain name, optionally NAME:{json args}")
    common.add_argument("--time-limit", type=float, help="search time limit in seconds (default 180)")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="latentplan", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name, parents=[common])
        if name in ("solve", "eval"):
            p.add_argument("--method", choices=["ama1", "ama2"], default="ama1")
            p.add_argument("--noise", choices=["none", "gaussian", "saltpepper"], default="none")
            p.add_argument("--sae-form", choices=["t", "s"], default="t",
                           help="which state the SAE stability filter checks (ama2)")
        if name in ("solve", "eval", "compile-ama1"):
            p.add_argument("--benchmark", choices=["A", "B"], default="A")
        if name in ("solve", "compile-ama1"):
            p.add_argument("--init", help="init image (PGM)")
            p.add_argument("--goal", help="goal image (PGM)")
        if name == "eval":
            p.add_argument("--count", type=int, help="number of instances (default: config, 100)")
            p.add_argument("--skip-discriminators", action="store_true")
        if name == "validate":
            p.add_argument("plan", help="plan JSON written by solve or eval")
        if name == "visualize":
            p.add_argument("--plan", help="plan JSON to draw")
            p.add_argument("--image", help="output PPM path")
            p.add_argument("--pgm-dir", help="also dump individual PGM images here")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = RunConfig.from_args(args)
        ws = Workspace(args.out)
        ws.root.mkdir(parents=True, exist_ok=True)
        COMMANDS[args.command](cfg, ws, args)
    except (StageError, ama2.UnusedLabel, OSError, ValueError) as e:
        print(f"latentplan {args.command}: error: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
