import json
import os
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from pansharp_lab.cli import main
from pansharp_lab.raster import load_raster

GOLDEN = Path(__file__).parent / "golden"
GRID = ["--folds", "3", "--c-grid", "1,16,256", "--gamma-grid", "2^-3,1,8"]


def _simulate(tmp_path, seed=3):
    tmp_path.mkdir(parents=True, exist_ok=True)
    spec = tmp_path / "spec.json"
    spec.write_text(json.dumps({"width": 128, "height": 128, "seed": seed}))
    scene = tmp_path / "scene"
    assert main(["simulate", str(spec), "--out-dir", str(scene), "--samples-per-class", "40"]) == 0
    return scene


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    scene = _simulate(root)
    for m in ("ihs", "unb", "wavelet"):
        assert main(["fuse", str(scene / "ms.bin"), str(scene / "pan.bin"), "--method", m,
                     "--out", str(root / f"{m}.bin")]) == 0
    return root, scene


def _error(capsys):
    line = capsys.readouterr().err.strip().splitlines()[-1]
    return json.loads(line)


def test_simulate_outputs(pipeline):
    _, scene = pipeline
    for name in ("hr_ms", "ms", "pan", "labels"):
        assert (scene / f"{name}.bin").exists() and (scene / f"{name}.json").exists()
    assert (scene / "samples.csv").read_text().startswith("x,y,label\n")
    manifest = json.loads((scene / "manifest.json").read_text())
    assert manifest["scene_spec"]["seed"] == 3
    assert manifest["rng"].endswith("(PCG64)")
    assert load_raster(scene / "ms.bin").shape == (4, 32, 32)
    assert load_raster(scene / "pan.bin").pixel_size_m == 2.5


def test_simulate_is_deterministic(tmp_path):
    a = _simulate(tmp_path / "a")
    b = _simulate(tmp_path / "b")
    for name in ("hr_ms.bin", "ms.bin", "pan.bin", "labels.bin", "samples.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
    ma, mb = (json.loads((d / "manifest.json").read_text()) for d in (a, b))
    for m in (ma, mb):
        m.pop("created")
        m.pop("argv")
        m.pop("outputs")
        m.pop("inputs")
    assert ma == mb


def test_bad_spec_json(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{width: 12")
    assert main(["simulate", str(bad), "--out-dir", str(tmp_path / "o")]) != 0
    err = _error(capsys)
    assert err["error"] == "SceneSpecError" and "JSON" in err["message"]


def test_unknown_method(pipeline, capsys):
    root, scene = pipeline
    with pytest.raises(SystemExit) as exc:
        main(["fuse", str(scene / "ms.bin"), str(scene / "pan.bin"), "--method", "brovey", "--out", "x.bin"])
    assert exc.value.code != 0
    err = capsys.readouterr().err
    for m in ("ihs", "pca", "gs", "wavelet", "unb"):
        assert m in err


def test_fuse_manifest_records_unb_weights(pipeline):
    root, _ = pipeline
    manifest = json.loads((root / "unb.manifest.json").read_text())
    w = manifest["unb_weights"]["w"]
    assert len(w) == 4 and all(v >= 0 for v in w)
    np.testing.assert_allclose(w, [0.3, 0.3, 0.3, 0.1], atol=5e-3)
    wavelet = json.loads((root / "wavelet.manifest.json").read_text())
    assert wavelet["parameters"]["levels"] == 2


def test_assess_self_is_ideal(pipeline, tmp_path, capsys):
    root, scene = pipeline
    up = tmp_path / "up.bin"
    from pansharp_lab.raster import save_raster, upsample
    save_raster(upsample(load_raster(scene / "ms.bin"), 4), up)
    assert main(["assess", str(scene / "ms.bin"), str(up), "--out-json", str(tmp_path / "r.json")]) == 0
    rep = json.loads((tmp_path / "r.json").read_text())["reports"][0]["aggregate"]
    # the upsampled file went through float32; ERGAS and RASE carry a factor of 100
    for k in ("bias", "div", "rmse"):
        assert abs(rep[k]) < 1e-6
    for k in ("ergas", "rase"):
        assert abs(rep[k]) < 1e-4
    assert rep["cc"] == pytest.approx(1, abs=1e-6) and rep["uiqi"] == pytest.approx(1, abs=1e-6)


def test_assess_table_golden(pipeline, capsys):
    root, scene = pipeline
    capsys.readouterr()
    assert main(["assess", str(scene / "ms.bin"), *(str(root / f"{m}.bin") for m in ("ihs", "unb", "wavelet")),
                 "--labels", "IHS,UNB,Wavelet"]) == 0
    out = capsys.readouterr().out
    assert out == (GOLDEN / "assess_table.txt").read_text()
    assert out.splitlines()[0].split() == ["Bias", "DIV", "CC", "ERGA", "RASE", "UIQI", "RMSE"]


@pytest.fixture(scope="module")
def classified(pipeline):
    root, scene = pipeline
    out = root / "cls"
    assert main(["classify", str(root / "unb.bin"), str(scene / "samples.csv"), "--two-step",
                 "--name", "UNB", "--out-dir", str(out), *GRID]) == 0
    return out


def test_classify_golden_tables(classified):
    for name in ("binary_confusion.txt", "detail_confusion.txt"):
        assert (classified / name).read_text() == (GOLDEN / name).read_text()


def test_classify_outputs(classified):
    detail = json.loads((classified / "detail_confusion.json").read_text())
    counts = np.array(detail["counts"])
    assert counts.sum(axis=1).tolist() == [20] * 6
    assert detail["overall_accuracy"] == np.trace(counts) / counts.sum()
    assert load_raster(classified / "label_map.bin").shape == (1, 128, 128)
    model = json.loads((classified / "detail_model.json").read_text())
    assert model["format"] == "pansharp-lab-svm" and len(model["machines"]) == 15


def test_classify_same_seed_same_matrices(pipeline, classified, tmp_path):
    root, scene = pipeline
    assert main(["classify", str(root / "unb.bin"), str(scene / "samples.csv"), "--two-step",
                 "--name", "UNB", "--no-label-map", "--out-dir", str(tmp_path), *GRID]) == 0
    for name in ("binary_confusion.json", "detail_confusion.json", "detail_model.json"):
        assert (tmp_path / name).read_bytes() == (classified / name).read_bytes()


def test_classify_numpy_path_matches_golden(pipeline, tmp_path):
    root, scene = pipeline
    env = dict(os.environ, PANSHARP_LAB_NUMBA="0")
    cmd = [sys.executable, "-m", "pansharp_lab.cli", "classify", str(root / "unb.bin"), str(scene / "samples.csv"),
           "--two-step", "--name", "UNB", "--no-label-map", "--out-dir", str(tmp_path), *GRID]
    subprocess.run(cmd, env=env, check=True, capture_output=True)
    for name in ("binary_confusion.txt", "detail_confusion.txt"):
        assert (tmp_path / name).read_text() == (GOLDEN / name).read_text()


def test_unknown_label_in_samples(pipeline, tmp_path, capsys):
    root, _ = pipeline
    bad = tmp_path / "s.csv"
    bad.write_text("x,y,label\n1,1,ROAD\n")
    assert main(["classify", str(root / "unb.bin"), str(bad), "--out-dir", str(tmp_path / "o")]) != 0
    err = _error(capsys)
    assert err["error"] == "samples" and "ROAD" in err["message"]


def test_missing_raster(tmp_path, capsys):
    assert main(["fuse", str(tmp_path / "no.bin"), str(tmp_path / "pan.bin"), "--method", "ihs",
                 "--out", str(tmp_path / "f.bin")]) != 0
    assert "not found" in _error(capsys)["message"]


def test_rerun_reproduces_fuse(pipeline, tmp_path):
    root, _ = pipeline
    before = (root / "ihs.bin").read_bytes()
    assert main(["rerun", str(root / "ihs.manifest.json")]) == 0
    assert (root / "ihs.bin").read_bytes() == before


def test_composite_command(pipeline, tmp_path):
    root, _ = pipeline
    out = tmp_path / "fc.ppm"
    assert main(["composite", str(root / "ihs.bin"), "--bands", "3,2,1", "--out", str(out)]) == 0
    assert out.read_bytes().startswith(b"P6\n128 128\n255\n")
