import csv
import json
from pathlib import Path

import numpy as np
import pytest

from dualview_diff.cli import run
from dualview_diff.imagecore import load_gray16, save_gray16
from dualview_diff.manifest import FORMAT, Manifest, load_manifest
from dualview_diff.errors import ManifestError

TINY_CONFIG = {
    "train": {"learning_rate": 1e-3, "batch_size": 2, "epochs": 1, "seed": 0},
    "denoiser": {"base_width": 4, "depth": 1, "time_embed_dim": 8},
    "schedule": {"T": 4, "scaled": True},
}


def _files(d, pattern="*"):
    return sorted(p.name for p in Path(d).glob(pattern))


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    assert run(["phantom", "--n", "4", "--size", "16", "--seed", "1", "--out", str(root / "d")]) == 0
    assert run(["encode", "--manifest", str(root / "d" / "manifest.json"), "--out", str(root / "e")]) == 0
    (root / "cfg.json").write_text(json.dumps(TINY_CONFIG))
    assert run(["train", "--data", str(root / "e"), "--config", str(root / "cfg.json"), "--out", str(root / "m.npz")]) == 0
    return root


def test_phantom_encode_smoke(trained):
    e = trained / "e"
    assert len(_files(e, "*_cc.png")) == 4 and len(_files(e, "*_diff.png")) == 4
    m = load_manifest(e)
    assert [x["laterality"] for x in m.entries] == ["right-oriented"] * 4
    assert len(m.triples()) == 4


def test_train_outputs(trained):
    report = json.loads((trained / "m_report.json").read_text())
    assert len(report["epoch_losses"]) == 1 and report["steps"] == 2
    assert (trained / "m_losses.csv").read_text().startswith("epoch,mean_loss")


def test_sample_files_and_determinism(trained):
    a, b = trained / "s1", trained / "s2"
    args = ["sample", "--ckpt", str(trained / "m.npz"), "--n", "1", "--seed", "3", "--size", "16"]
    assert run(args + ["--out", str(a)]) == 0
    assert run(args + ["--out", str(b)]) == 0
    names = [n for n in _files(a) if n != "manifest.json"]
    assert names == ["sample_00000_cc.png", "sample_00000_diff.png", "sample_00000_mlo.png", "sample_00000_preview.png"]
    for n in names:
        assert (a / n).read_bytes() == (b / n).read_bytes()
    cc = load_gray16(a / "sample_00000_cc.png")
    assert cc.min() >= 0 and cc.max() <= 1


def test_full_chain(trained):
    s = trained / "syn"
    assert run(["sample", "--ckpt", str(trained / "m.npz"), "--n", "3", "--seed", "5", "--size", "16", "--out", str(s),
                "--clip-denoised"]) == 0
    assert run(["postprocess", "--in", str(s), "--out", str(trained / "pp")]) == 0
    assert run(["segment", "--in", str(trained / "pp"), "--out", str(trained / "masks")]) == 0
    assert len(_files(trained / "masks", "*_mask.png")) == 6
    assert run(["evaluate", "--in", str(trained / "pp"), "--source", "synthetic", "--out", str(trained / "syn.csv")]) == 0
    assert run(["evaluate", "--in", str(trained / "e"), "--source", "real", "--out", str(trained / "real.csv")]) == 0
    rows = list(csv.DictReader(open(trained / "syn.csv")))
    assert len(rows) == 3 and list(rows[0]) == ["subject_id", "source", "iou", "dsc", "degenerate"]
    assert run(["stats", "--real", str(trained / "real.csv"), "--synthetic", str(trained / "syn.csv"),
                "--out", str(trained / "report.json")]) == 0
    report = json.loads((trained / "report.json").read_text())
    assert set(report) >= {"descriptive", "distribution_tests", "plot_data"}


def test_preprocess_command(tmp_path, rng):
    src = tmp_path / "raw"
    src.mkdir()
    entries = []
    for i, lat in enumerate(["left", "right"]):
        sid = f"p{i}"
        save_gray16(rng.random((40, 30)), src / f"{sid}_cc.png")
        save_gray16(rng.random((40, 30)), src / f"{sid}_mlo.png")
        entries.append({"subject_id": sid, "laterality": lat, "cc_path": f"{sid}_cc.png", "mlo_path": f"{sid}_mlo.png"})
    Manifest(entries, {}, src).save()
    assert run(["preprocess", "--manifest", str(src / "manifest.json"), "--out", str(tmp_path / "pp"), "--size", "32"]) == 0
    m = load_manifest(tmp_path / "pp")
    assert [e["laterality"] for e in m.entries] == ["right-oriented", "right"]
    assert m.pairs()[0].cc.shape == (32, 32)
    assert run(["encode", "--manifest", str(tmp_path / "pp"), "--out", str(tmp_path / "enc")]) == 0


def test_schedule_dump(tmp_path):
    out = tmp_path / "s.csv"
    assert run(["schedule-dump", "--T", "10", "--out", str(out)]) == 0
    assert out.read_text().splitlines()[0] == "t,beta,alpha,alpha_bar"
    assert len(out.read_text().splitlines()) == 11


def test_exit_codes(tmp_path, capsys):
    assert run(["bogus"]) == 1
    assert run(["phantom", "--nope"]) == 1
    assert "usage" in capsys.readouterr().err
    assert run(["encode", "--manifest", str(tmp_path / "missing.json"), "--out", str(tmp_path / "x")]) == 2
    assert run(["sample", "--ckpt", str(tmp_path / "none.npz"), "--n", "1", "--seed", "0", "--out", str(tmp_path)]) == 2


def test_manifest_validation(tmp_path):
    with pytest.raises(ManifestError):
        Manifest([{"subject_id": "a", "triple_stem": "a"}, {"subject_id": "a", "triple_stem": "b"}])
    with pytest.raises(ManifestError):
        Manifest([{"subject_id": "a"}])
    Manifest([{"subject_id": "a", "triple_stem": "a"}], {}, tmp_path).save()
    with pytest.raises(ManifestError):
        load_manifest(tmp_path)
    doc = json.loads((tmp_path / "manifest.json").read_text())
    assert doc["format"] == FORMAT
