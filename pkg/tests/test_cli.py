import json
import shutil
import subprocess
import sys

import numpy as np
import pytest

from glmeasure.cli import main
from glmeasure.imagegrid import BinaryMask, LabelField, save_image, save_label_field, save_mask
from glmeasure.synthetic import ruler_raster, two_class_image


def run_args(scene_bundle, report, *extra):
    image, head_dir, blaze_dir, cfg, _ = scene_bundle
    return [
        "run", "--image", str(image), "--head-dict", str(head_dir), "--blaze-dict", str(blaze_dir),
        "--ruler", "linear", "--config", str(cfg), "--report", str(report), *extra,
    ]


def test_run_writes_identical_reports(scene_bundle, tmp_path, capsys):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    assert main(run_args(scene_bundle, a, "--seed", "0", "--overlay-dir", str(tmp_path / "ov"))) == 0
    assert "area (mm^2)" in capsys.readouterr().out
    assert main(run_args(scene_bundle, b, "--seed", "0")) == 0
    assert a.read_bytes() == b.read_bytes()
    rep = json.loads(a.read_text())
    assert rep["scale"]["source"] == "linear_ruler"
    assert {p.name for p in (tmp_path / "ov").iterdir()} == {
        "blaze_overlay.png", "head_overlay.png", "ruler_overlay.png"
    }


def test_invalid_config_exit_code(scene_bundle, tmp_path, capsys):
    bad = tmp_path / "bad.txt"
    bad.write_text("sigma2 = -3\n")
    image, head_dir, blaze_dir, _, _ = scene_bundle
    args = ["run", "--image", str(image), "--head-dict", str(head_dir), "--blaze-dict", str(blaze_dir),
            "--ruler", "linear", "--config", str(bad)]
    assert main(args) == 3
    assert "invalid config" in capsys.readouterr().err
    bad.write_text("what = 1\n")
    assert main(args) == 3


def test_thread_env_validated(scene_bundle, tmp_path, monkeypatch):
    monkeypatch.setenv("GLMEASURE_THREADS", "zero")
    assert main(run_args(scene_bundle, tmp_path / "r.json")) == 3


def test_stage_failure_exit_code(scene_bundle, tmp_path, capsys):
    image, head_dir, _, cfg, _ = scene_bundle
    code = main(["run", "--image", str(image), "--head-dict", str(head_dir), "--blaze-dict",
                 str(tmp_path / "none"), "--ruler", "linear", "--config", str(cfg)])
    assert code == 2
    assert "[load]" in capsys.readouterr().err


def test_segment_subcommand(tmp_path, capsys):
    dimg, dtruth = two_class_image(32, seed=1)
    target, truth = two_class_image(32, seed=2)
    d = tmp_path / "dict"
    d.mkdir()
    save_image(dimg, d / "e.png")
    save_label_field(LabelField(np.where(dtruth.bits, 1, -1)), d / "e.labels.pgm")
    save_image(target, tmp_path / "t.png")
    cfg = tmp_path / "c.txt"
    cfg.write_text("sigma2 = 1.0\nepsilon = 1.0\n")
    out = tmp_path / "mask.pgm"
    assert main(["segment", "--image", str(tmp_path / "t.png"), "--dict", str(d), "--config", str(cfg),
                 "--out", str(out)]) == 0
    info = json.loads(capsys.readouterr().out)
    assert info["pixels"] > 0 and out.exists()


def test_scale_then_measure(tmp_path, monkeypatch, capsys):
    img, _ = ruler_raster()
    save_image(img, tmp_path / "ruler.png")
    monkeypatch.setenv("GLMEASURE_THREADS", "1")
    rep = tmp_path / "scale.json"
    assert main(["scale", "--image", str(tmp_path / "ruler.png"), "--ruler", "linear",
                 "--px-per-mm-prior", "14", "--report", str(rep)]) == 0
    data = json.loads(rep.read_text())
    assert data["scale"]["px_per_mm"] == pytest.approx(14.0, abs=0.5)

    bits = np.zeros((40, 40), dtype=bool)
    bits[5:33, 5:33] = True
    save_mask(BinaryMask(bits), tmp_path / "m.pgm")
    assert main(["measure", "--mask", str(tmp_path / "m.pgm"), "--scale-report", str(rep)]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["area_mm2"] == pytest.approx(784 / data["scale"]["px_per_mm"] ** 2)
    assert main(["measure", "--mask", str(tmp_path / "m.pgm"), "--px-per-mm", "14", "--rsd", "2"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["area_mm2"] == pytest.approx(4.0) and out["area_err_mm2"] == pytest.approx(0.16)


def test_scale_needs_a_prior(tmp_path):
    img, _ = ruler_raster(width=200, height=100)
    save_image(img, tmp_path / "r.png")
    assert main(["scale", "--image", str(tmp_path / "r.png"), "--ruler", "linear"]) == 3


def test_measure_missing_mask(tmp_path):
    assert main(["measure", "--mask", str(tmp_path / "none.pgm"), "--px-per-mm", "3"]) == 2


@pytest.mark.skipif(shutil.which("glmeasure") is None, reason="console script not installed")
def test_console_script_help():
    res = subprocess.run(["glmeasure", "--help"], capture_output=True, text=True)
    assert res.returncode == 0 and "run" in res.stdout


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "glmeasure.cli", "run", "--help"], capture_output=True, text=True)
    assert res.returncode == 0 and "--head-dict" in res.stdout
