"""Pipeline runs through the command line on a tiny 2x2 LightsOut configuration."""

import json

import pytest

from latentplan import cli

TINY = {
    "domain": {"name": "lightsout", "n": 2},
    "seed": 3,
    "sae": {"epochs": 200, "batch_size": 4, "hidden": 64, "conv_channels": 4, "dropout": 0.1,
            "lr": 3e-3, "lr_late": 1e-3},
    "sae_split": "all",
    "ama1_split": "all",
    "aae": {"epochs": 200, "batch_size": 16, "hidden": 64, "labels": 16},
    "sd": {"epochs": 100, "batch_size": 16, "lr": 1e-3},
    "ad": {"epochs": 50, "batch_size": 16},
    "instances": 2,
    "time_limit": 5,
}


def run(*args):
    return cli.main([str(a) for a in args])


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    root = tmp_path_factory.mktemp("run")
    (root / "run.json").write_text(json.dumps(TINY))
    common = ["--config", root / "run.json", "--out", root]
    for stage in ("gen-data", "train-sae", "compile-ama1", "train-aae", "train-sd", "train-ad"):
        assert run(stage, *common) == 0, stage
    return root, common


def test_stage_outputs(workdir):
    root, _ = workdir
    for name in ("pre.lpt", "post.lpt", "transitions.json", "sae.lpw", "aae.lpw", "sd.lpw", "ad.lpw",
                 "ama1_pre.lpb", "domain.pddl", "problem.pddl"):
        assert (root / name).exists(), name
    assert (root / "pre.lpt").read_bytes()[:4] == b"LPT1"
    assert (root / "ama1_pre.lpb").read_bytes()[:4] == b"LPB1"
    assert (root / "domain.pddl").read_text().startswith("(define (domain ")


def test_gen_data_is_reproducible(workdir, tmp_path):
    root, _ = workdir
    assert run("gen-data", "--config", root / "run.json", "--out", tmp_path) == 0
    for name in ("pre.lpt", "post.lpt", "transitions.json"):
        assert (tmp_path / name).read_bytes() == (root / name).read_bytes()
    split = json.loads((root / "transitions.json").read_text())
    total = len(split["train"]) + len(split["val"])
    assert total == 64 and len(split["train"]) == round(0.9 * total)


def test_training_is_reproducible(workdir, tmp_path):
    root, _ = workdir
    common = ["--config", root / "run.json", "--out", tmp_path]
    assert run("gen-data", *common) == 0
    assert run("train-sae", *common) == 0
    assert (tmp_path / "sae.lpw").read_bytes() == (root / "sae.lpw").read_bytes()


def test_solve_and_validate(workdir, capsys):
    root, common = workdir
    assert run("solve", *common, "--method", "ama1") == 0
    plan = json.loads((root / "plan.json").read_text())
    assert plan["status"] in ("solved", "exhausted", "timeout")
    capsys.readouterr()
    assert run("validate", *common, root / "plan.json") == 0
    verdict = json.loads(capsys.readouterr().out)
    assert verdict["valid"] == plan.get("valid", False)


def test_tampered_plan_is_invalid(tmp_path, capsys):
    plan = {
        "status": "solved",
        "domain": {"name": "hanoi", "disks": 3},
        "init": [0, 0, 0],
        "goal": [1, 0, 0],
        "states": [],
        "decoded": [[0, 0, 0], [1, 0, 0]],
        "plan_length": 1,
    }
    good = tmp_path / "good.json"
    good.write_text(json.dumps(plan))
    assert run("validate", good) == 0
    assert json.loads(capsys.readouterr().out)["valid"]
    plan["decoded"] = [[0, 0, 0], [2, 1, 0], [1, 0, 0]]
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps(plan))
    run("validate", bad)
    assert not json.loads(capsys.readouterr().out)["valid"]


def test_eval_report(workdir):
    root, common = workdir
    assert run("eval", *common, "--method", "ama1", "--noise", "gaussian") == 0
    report = json.loads((root / "eval_ama1_A_gaussian.json").read_text())
    assert report["instances"] == 2 and report["solved"] <= 2
    for rec in report["records"]:
        assert (root / rec["plan_file"]).exists() or rec["plan_file"].startswith(str(root))
        assert rec["valid"] == (rec["status"] == "solved" and rec["valid"])


def test_eval_ama2_runs(workdir):
    root, common = workdir
    assert run("eval", *common, "--method", "ama2", "--count", 1, "--time-limit", 2) == 0
    report = json.loads((root / "eval_ama2_A_none.json").read_text())
    table = report["discriminators"]
    assert set(table) >= {"sd", "ad"} and 0 <= table["sd"]["type1"] <= 1


def test_visualize(workdir):
    root, common = workdir
    assert run("visualize", *common) == 0
    assert (root / "visualize.ppm").read_bytes()[:2] == b"P6"


def test_missing_checkpoint_is_an_error(tmp_path, capsys):
    assert run("solve", "--out", tmp_path, "--domain", "hanoi") == 1
    assert "train-sae" in capsys.readouterr().err


def test_bad_config_is_an_error(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"nonsense": 1}))
    assert run("gen-data", "--config", cfg, "--out", tmp_path) == 1
