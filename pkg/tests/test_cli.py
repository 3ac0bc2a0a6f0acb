import json
from pathlib import Path

import numpy as np
import pytest

from ofmtlab.cli import DEFAULTS, run
from ofmtlab.templates import TemplateParams


def tree(root: Path) -> dict:
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def resolved_config(err: str) -> dict:
    return json.loads(next(line for line in err.splitlines() if line.startswith('{"')))


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli") / "data"
    assert run(["gensynth", "--out", str(root), "--subjects", "1", "--reps", "2", "--frames", "16"]) == 0
    return root


@pytest.fixture(scope="module")
def weights(dataset, tmp_path_factory):
    out = tmp_path_factory.mktemp("weights")
    w2, w3 = out / "lenet.bin", out / "c3d.bin"
    assert run(["train2d", "--data", str(dataset), "--out", str(w2), "--epochs", "2", "--holdout", "0.5"]) == 0
    assert run(["train3d", "--data", str(dataset), "--out", str(w3), "--epochs", "1", "--holdout", "0.5"]) == 0
    return w3, w2


def test_unknown_flag_is_usage_error(capsys):
    assert run(["ofmt", "--bogus"]) == 1
    assert "usage:" in capsys.readouterr().err


def test_missing_required_is_usage_error(capsys):
    assert run(["train2d", "--data", "x"]) == 1
    assert "--out" in capsys.readouterr().err


def test_bad_data_exits_2(tmp_path, capsys):
    (tmp_path / "notaclass" / "a").mkdir(parents=True)
    assert run(["eval", "--weights", str(tmp_path / "w.bin"), "--data", str(tmp_path)]) == 2
    assert "error" in capsys.readouterr().err


def test_gensynth_is_deterministic(tmp_path):
    trees = []
    for name in ("a", "b"):
        args = ["gensynth", "--out", str(tmp_path / name), "--subjects", "3", "--reps", "3", "--seed", "7",
                "--frame-size", "32", "--frames", "8"]
        assert run(args) == 0
        trees.append(tree(tmp_path / name))
    assert len(trees[0]) == 90 * 8 and trees[0] == trees[1]


def test_ofmt_one_png_per_clip(dataset, tmp_path, capsys):
    out = tmp_path / "tpl"
    assert run(["ofmt", "--in", str(dataset), "--out", str(out), "--eps-s", "1.0", "--lambda", "5"]) == 0
    pngs = sorted(out.glob("*_ofmt.png"))
    assert len(pngs) == len(list(dataset.glob("*/*"))) == 20
    cap = capsys.readouterr()
    assert len(json.loads(cap.out)["templates"]) == 20
    cfg = resolved_config(cap.err)
    assert cfg["eps_s"] == 1.0 and cfg["lambda_fg"] == 5


def test_ofmt_single_clip_dir(dataset, tmp_path):
    clip = sorted(dataset.glob("3/*"))[0]
    assert run(["ofmt", "--in", str(clip), "--out", str(tmp_path)]) == 0
    assert [p.name for p in tmp_path.glob("*.png")] == [f"{clip.name}_ofmt.png"]


def test_defaults_match_library():
    tp = TemplateParams().to_dict()
    for cmd in ("ofmt", "train2d", "eval", "fuse", "predict"):
        assert {k: DEFAULTS[cmd][k] for k in tp} == tp
    assert (DEFAULTS["train3d"]["epochs"], DEFAULTS["train3d"]["batch_size"]) == (100, 10)
    assert (DEFAULTS["train2d"]["epochs"], DEFAULTS["train2d"]["batch_size"]) == (50, 32)
    assert (DEFAULTS["fuse"]["w3"], DEFAULTS["fuse"]["w2"]) == (0.6, 0.4)


def test_precedence_flags_over_config_over_defaults(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"seed": 3, "gensynth": {"subjects": 2, "reps": 2}}))
    out = tmp_path / "d"
    assert run(["gensynth", "--config", str(cfg), "--out", str(out), "--reps", "1", "--frames", "4",
                "--frame-size", "24"]) == 0
    resolved = resolved_config(capsys.readouterr().err)
    assert (resolved["seed"], resolved["subjects"], resolved["reps"]) == (3, 2, 1)
    assert resolved["suffix"] == DEFAULTS["gensynth"]["suffix"]


def test_unknown_config_key(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"nonsense": 1}))
    assert run(["gensynth", "--config", str(cfg), "--out", str(tmp_path / "d")]) == 2


def test_printed_config_reruns_exactly(tmp_path, capsys):
    out = tmp_path / "a"
    assert run(["gensynth", "--out", str(out), "--subjects", "1", "--reps", "1", "--frames", "4",
                "--frame-size", "24", "--seed", "9"]) == 0
    printed = capsys.readouterr().err.splitlines()[0]
    first = tree(out)
    for p in sorted(out.rglob("*"), reverse=True):
        p.unlink() if p.is_file() else p.rmdir()
    (tmp_path / "cfg.json").write_text(printed)
    assert run(["gensynth", "--config", str(tmp_path / "cfg.json")]) == 0
    assert tree(out) == first


def test_train_writes_weights_and_log(weights):
    for w in weights:
        assert w.is_file()
        records = [json.loads(x) for x in Path(f"{w}.log.jsonl").read_text().splitlines()]
        assert records and {"epoch", "lr", "loss", "train_acc", "test_acc"} <= set(records[0])


def test_eval_report(dataset, weights, tmp_path, capsys):
    cm = tmp_path / "cm.csv"
    assert run(["eval", "--weights", str(weights[1]), "--data", str(dataset), "--confusion", str(cm),
                "--subset", "test", "--holdout", "0.5"]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["model"] == "LeNet2D" and report["samples"] == 10
    assert len(cm.read_text().splitlines()) == 11


def test_fuse_report(dataset, weights, capsys):
    w3, w2 = weights
    assert run(["fuse", "--weights3d", str(w3), "--weights2d", str(w2), "--data", str(dataset),
                "--w3", "0.6", "--w2", "0.4", "--sweep", "true"]) == 0
    report = json.loads(capsys.readouterr().out)
    assert len(report["per_class_accuracy"]) == 10
    assert (report["w3"], report["w2"]) == (0.6, 0.4)
    assert len(report["sweep"]) == 6
    assert np.asarray(report["confusion"]).sum() == 20


def test_predict_clip(dataset, weights, tmp_path):
    w3, w2 = weights
    out = tmp_path / "p.json"
    clip = sorted(dataset.glob("7/*"))[0]
    assert run(["predict", "--clip", str(clip), "--weights3d", str(w3), "--weights2d", str(w2),
                "--out", str(out)]) == 0
    report = json.loads(out.read_text())
    assert 0 <= report["class"] < 10 and report["class"] == int(np.argmax(report["scores"]))
    assert abs(sum(report["scores"]) - 1) < 1e-6
