import csv
import json
import subprocess
import sys

import pytest

from harmonic3d import config
from harmonic3d.cli import EXIT_CONTRACT, EXIT_OK, EXIT_USAGE, bench_csv, main

LINE = "Car 0.00 0 -1.58 587.01 173.33 614.12 200.12 1.65 1.67 3.64 -0.65 1.71 46.70 -1.59"
TINY = {"train.epochs": 1, "train.train_scenes": 2, "train.val_scenes": 1, "train.hidden": 4}


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


# -- config -----------------------------------------------------------------------------

def test_every_default_is_present():
    flat = config.default_flat()
    assert flat["loss.alpha"] == 0.25 and flat["loss.gamma"] == 2.0
    assert flat["train.loss_kind"] == "harmonic" and flat["scene.noise_sigma"] == 0.03
    assert flat["eval.thresholds"] == [0.7, 0.5] and flat["output.dir"] == "runs"
    assert all("." in k for k in flat)


def test_three_layer_precedence(tmp_path):
    f = tmp_path / "c.json"
    f.write_text(json.dumps({"train.epochs": 7, "train.lr": 0.05, "scene.seed": 3}))
    cfg = config.resolve(f, {"train.epochs": 2})
    assert cfg.train.epochs == 2  # flag beats file
    assert cfg.train.lr == 0.05  # file beats default
    assert cfg.scene.seed == 3
    assert cfg.train.momentum == 0.9  # default


def test_unknown_and_mistyped_keys(tmp_path):
    with pytest.raises(config.ConfigError, match="unknown config key"):
        config.build({"train.epoch": 3})
    with pytest.raises(config.ConfigError):
        config.build({"train.epochs": "many"})
    with pytest.raises(config.ConfigError):
        config.build({"scene.x_range": 4})
    with pytest.raises(config.ConfigError):
        config.build({"train.pos_iou": 0.1})
    bad = tmp_path / "bad.json"
    bad.write_text("[1, 2]")
    with pytest.raises(config.ConfigError):
        config.load_file(bad)
    bad.write_text("{nope")
    with pytest.raises(config.ConfigError, match="invalid JSON"):
        config.load_file(bad)


def test_coercion():
    cfg = config.build({"scene.x_range": [0, 16], "train.epochs": 3.0, "loss.beta_dir": 3})
    assert cfg.scene.x_range == (0, 16) and cfg.train.epochs == 3 and cfg.loss.beta_dir == 3.0


def test_parse_override():
    assert config.parse_override("train.lr=0.5") == ("train.lr", 0.5)
    assert config.parse_override("train.loss_kind=baseline") == ("train.loss_kind", "baseline")
    assert config.parse_override("scene.x_range=[0,8]") == ("scene.x_range", [0, 8])
    with pytest.raises(config.ConfigError):
        config.parse_override("novalue")


def test_flat_round_trip():
    cfg = config.build({"train.epochs": 4})
    assert config.build(cfg.to_flat()) == cfg


# -- iou -------------------------------------------------------------------------------

def test_iou_identical(capsys):
    code, out, err = run(capsys, "iou", "--box-a", "0,0,0,4,2,1.5,0", "--box-b", "0,0,0,4,2,1.5,0")
    assert code == EXIT_OK
    assert out == "bev 1.000000\n3d 1.000000\n" and err == ""


def test_iou_half_overlap(capsys):
    code, out, _ = run(capsys, "iou", "--box-a", "0.5,0.5,0,1,1,1,0", "--box-b", "1,0.5,0,1,1,1,0")
    assert code == EXIT_OK and out.splitlines() == ["bev 0.333333", "3d 0.333333"]


@pytest.mark.parametrize("box", ["1,2,3", "a,0,0,1,1,1,0", "0,0,0,0,1,1,0", "0,0,0,1,1,1,nan"])
def test_iou_malformed(capsys, box):
    code, out, err = run(capsys, "iou", "--box-a", box, "--box-b", "0,0,0,1,1,1,0")
    assert code == EXIT_USAGE and out == "" and "--box-a" in err


def test_usage_errors(capsys):
    with pytest.raises(SystemExit) as ei:
        main(["nonsense"])
    assert ei.value.code == EXIT_USAGE
    with pytest.raises(SystemExit) as ei:
        main(["iou", "--box-a", "0,0,0,1,1,1,0", "--bogus"])
    assert ei.value.code == EXIT_USAGE
    with pytest.raises(SystemExit) as ei:
        main([])
    assert ei.value.code == EXIT_USAGE
    out, err = capsys.readouterr()
    assert out == "" and "error" in err


# -- gradcheck / gradfield -----------------------------------------------------------------

def test_gradcheck_passes(capsys, tmp_path):
    rep = tmp_path / "rep.json"
    code, out, err = run(capsys, "gradcheck", "--n", "300", "--seed", "2", "--json", str(rep))
    assert code == EXIT_OK
    assert out.rstrip().endswith("PASS") and "failures: 0" in out and err == ""
    assert json.loads(rep.read_text())["failures"] == 0


def test_gradcheck_contract_failure(capsys, monkeypatch):
    from harmonic3d import losses as L
    real = L.focal_loss_grad
    monkeypatch.setattr(L, "focal_loss_grad", lambda p, cfg=L.DEFAULT_CONFIG: 1.001 * real(p, cfg))
    code, out, _ = run(capsys, "gradcheck", "--n", "50")
    assert code == EXIT_CONTRACT and out.rstrip().endswith("FAIL")


def test_gradcheck_bad_config(capsys, tmp_path):
    code, out, err = run(capsys, "gradcheck", "--n", "10", "--set", "loss.nope=1")
    assert code == EXIT_USAGE and "unknown config key" in err
    code, _, err = run(capsys, "gradcheck", "--n", "10", "--config", str(tmp_path / "missing.json"))
    assert code == EXIT_USAGE and "cannot read config" in err


def test_gradfield(capsys, tmp_path):
    out_csv = tmp_path / "f" / "cls.csv"
    code, out, _ = run(capsys, "gradfield", "--partial", "cls", "--loss", "harmonic", "--out", str(out_csv),
                       "--resolution", "4")
    assert code == EXIT_OK and "64 points" in out
    rows = list(csv.reader(out_csv.open()))
    assert rows[0] == ["axis1", "axis2", "axis3", "grad"] and len(rows) == 65
    assert out_csv.with_suffix(".json").exists()
    code, _, _ = run(capsys, "gradfield", "--partial", "cls", "--loss", "harmonic", "--out", str(out_csv),
                     "--resolution", "1")
    assert code == EXIT_USAGE


# -- training and benchmark ---------------------------------------------------------------

def test_synth_train_writes_artifacts(capsys, tmp_path):
    cfg_file = tmp_path / "run.json"
    cfg_file.write_text(json.dumps({**TINY, "train.epochs": 5, "output.dir": str(tmp_path / "ignored")}))
    code, out, err = run(capsys, "synth-train", "--config", str(cfg_file), "--set", "train.epochs=1",
                         "--loss", "baseline", "--out-dir", str(tmp_path / "run"))
    assert code == EXIT_OK, err
    hist = json.loads((tmp_path / "run" / "history.json").read_text())
    saved = json.loads((tmp_path / "run" / "config.json").read_text())
    model = json.loads((tmp_path / "run" / "model.json").read_text())
    assert len(hist) == 1 and saved["train.epochs"] == 1 and saved["train.loss_kind"] == "baseline"
    assert saved["train.hidden"] == 4 and model["params"]["W1"]["shape"] == [12, 4]
    assert "ap_07" in out


def test_synth_train_divergence(capsys, tmp_path, monkeypatch):
    from harmonic3d import detector

    def boom(*a, **k):
        raise detector.TrainingDiverged(3, [{"epoch": 1}])

    monkeypatch.setattr(detector, "train", boom)
    code, _, err = run(capsys, "synth-train", "--out-dir", str(tmp_path))
    assert code == EXIT_CONTRACT and "diverged at epoch 3" in err
    assert json.loads((tmp_path / "history.json").read_text()) == [{"epoch": 1}]


def test_synth_bench(capsys, tmp_path):
    out_csv = tmp_path / "bench.csv"
    sets = [a for k, v in TINY.items() for a in ("--set", f"{k}={v}")]
    code, out, err = run(capsys, "synth-bench", "--seeds", "0,1", "--out", str(out_csv), *sets)
    assert code == EXIT_OK, err
    rows = list(csv.DictReader(out_csv.open()))
    assert list(rows[0]) == ["seed", "loss_kind", "ap_07", "ap_05", "aos_07", "pearson_r"]
    assert [(r["seed"], r["loss_kind"]) for r in rows] == [("0", "baseline"), ("0", "harmonic"),
                                                             ("1", "baseline"), ("1", "harmonic")]
    assert json.loads(out_csv.with_suffix(".json").read_text())["seeds"] == [0, 1]
    assert "harmonic" in out


@pytest.mark.parametrize("text", ["x", "0", "3-a"])
def test_synth_bench_bad_seeds(capsys, text):
    code, _, err = run(capsys, "synth-bench", "--seeds", text)
    assert code == EXIT_USAGE and "seed" in err


def test_bench_csv_format():
    text = bench_csv([{"seed": 0, "loss_kind": "baseline", "ap_07": 0.5, "ap_05": 1.0, "aos_07": 0.25,
                       "pearson_r": None}])
    assert text == "seed,loss_kind,ap_07,ap_05,aos_07,pearson_r\n0,baseline,0.5,1.0,0.25,\n"


# -- evaluate ------------------------------------------------------------------------------

def write_frames(root, frames):
    root.mkdir(parents=True, exist_ok=True)
    for name, text in frames.items():
        (root / f"{name}.txt").write_text(text)
    return root


def test_evaluate_self(capsys, tmp_path):
    gt = write_frames(tmp_path / "gt", {
        "000000": LINE + "\nDontCare -1 -1 -10 0 0 1 1 -1 -1 -1 -1000 -1000 -1000 -10\n",
        "000001": "Car 0 0 0 0 0 0 0 1.5 1.6 3.9 5.0 1.5 20.0 0.3\nCar 0 0 0 0 0 0 0 1.5 1.6 3.9 -5 1.5 30 2.0\n",
    })
    summary = tmp_path / "s.json"
    code, out, err = run(capsys, "evaluate", "--gt-dir", str(gt), "--pred-dir", str(gt), "--out", str(summary))
    assert code == EXIT_OK, err
    d = json.loads(summary.read_text())
    assert d["ap"] == {"0.7": 1.0, "0.5": 1.0}
    assert d["counts"]["0.7"] == {"tp": 3, "fp": 0, "fn": 0}
    assert "AP@40" in out


def test_evaluate_missing_prediction_file_means_no_detections(capsys, tmp_path):
    gt = write_frames(tmp_path / "gt", {"a": LINE + "\n", "b": LINE + "\n"})
    pred = write_frames(tmp_path / "pred", {"a": LINE + " 0.9\n"})
    summary = tmp_path / "s.json"
    code, _, _ = run(capsys, "evaluate", "--gt-dir", str(gt), "--pred-dir", str(pred), "--thresholds", "0.5",
                     "--iou-kind", "3d", "--out", str(summary))
    assert code == EXIT_OK
    d = json.loads(summary.read_text())
    assert d["ap"] == {"0.5": 0.5} and d["iou_kind"] == "3d"


def test_evaluate_errors(capsys, tmp_path):
    gt = write_frames(tmp_path / "gt", {"a": "Car 1 2 3\n"})
    code, out, err = run(capsys, "evaluate", "--gt-dir", str(gt), "--pred-dir", str(gt))
    assert code == EXIT_USAGE and "line 1" in err and out == ""
    code, _, err = run(capsys, "evaluate", "--gt-dir", str(tmp_path / "nope"), "--pred-dir", str(gt))
    assert code == EXIT_USAGE and "not a directory" in err
    empty = write_frames(tmp_path / "empty", {})
    code, _, err = run(capsys, "evaluate", "--gt-dir", str(empty), "--pred-dir", str(empty))
    assert code == EXIT_USAGE
    code, _, err = run(capsys, "evaluate", "--gt-dir", str(gt), "--pred-dir", str(gt), "--thresholds", "1.5")
    assert code == EXIT_USAGE


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "harmonic3d", "iou", "--box-a", "0,0,0,1,1,1,0",
                        "--box-b", "5,0,0,1,1,1,0"], capture_output=True, text=True)
    assert r.returncode == 0 and r.stdout == "bev 0.000000\n3d 0.000000\n"
    r = subprocess.run([sys.executable, "-m", "harmonic3d", "frobnicate"], capture_output=True, text=True)
    assert r.returncode == 2 and r.stdout == ""
