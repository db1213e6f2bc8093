import math
import os
import subprocess
import sys

import numpy as np
import pytest

from conftest import ridge_image
from fpsae import pipeline
from fpsae.classes import ClassLabel
from fpsae.cli import RunConfig, main
from fpsae.orientation import GrayImage, OrientationField, read_field, save_pgm, write_field
from fpsae.synthgen import SingularityLayout, zero_pole_field

FAST = ["--scale", "0.05", "--sae-max-iters", "60"]


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    data, model = d / "data", d / "model.txt"
    assert main(["gen", "--out", str(data), "--per-class", "12", "--noise", "0.1", "--seed", "3"]) == 0
    assert main(["train", "--data", str(data), "--model", str(model), "--seed", "3", *FAST]) == 0
    return data, model


# -- gen -------------------------------------------------------------------------


def test_gen_counts_and_reproducible(tmp_path, capsys):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        code, out, _ = run(capsys, "gen", "--out", d, "--per-class", 50, "--seed", 1)
        assert code == 0 and "wrote 200 samples" in out
    files = sorted(os.listdir(a))
    assert len(files) == 201 and "labels.tsv" in files
    for f in files:
        assert (a / f).read_bytes() == (b / f).read_bytes()


def test_gen_zero_per_class_warns(tmp_path, capsys):
    code, _, err = run(capsys, "gen", "--out", tmp_path / "e", "--per-class", 0)
    assert code == 0 and "warning" in err
    assert (tmp_path / "e" / "labels.tsv").read_text() == ""


# -- train -------------------------------------------------------------------------


def test_train_writes_model_and_reports(trained, tmp_path, capsys):
    data, _ = trained
    model = tmp_path / "m.txt"
    code, out, _ = run(capsys, "train", "--data", data, "--model", model, "--seed", 3, *FAST)
    assert code == 0
    assert "true\\assigned\tA\tL\tR\tW" in out
    assert "held-out accuracy\t" in out
    assert "train samples: 24  held-out samples: 24" in out
    text = model.read_text()
    assert text.startswith("SAEv1\nlayer 1250 20 0.0001 0.3 0.1\n")
    assert "\nSOFTMAXv1\n4 2 0.0001\n" in text


def test_train_layers_none_and_single(trained, tmp_path, capsys):
    data, _ = trained
    m0, m1 = tmp_path / "m0.txt", tmp_path / "m1.txt"
    assert run(capsys, "train", "--data", data, "--model", m0, "--layers", "none")[0] == 0
    assert m0.read_text().startswith("SAEv1\nSOFTMAXv1\n4 1250 ")
    assert run(capsys, "train", "--data", data, "--model", m1, "--layers", "600", "--scale", "0.01", "--sae-max-iters", "5")[0] == 0
    model = pipeline.load_model(m1)
    assert model.encoder.depth == 1 and model.encoder.code_dim == 6


def test_train_missing_data_is_error(tmp_path, capsys):
    code, out, err = run(capsys, "train", "--data", tmp_path / "nope", "--model", tmp_path / "m")
    assert code == 1
    assert err.startswith("error: ") and err.count("\n") == 1


def test_train_missing_class_is_error(tmp_path, capsys):
    d = tmp_path / "d"
    run(capsys, "gen", "--out", d, "--per-class", 2)
    lines = [ln for ln in (d / "labels.tsv").read_text().splitlines() if not ln.startswith("W_")]
    (d / "labels.tsv").write_text("\n".join(lines) + "\n")
    code, _, err = run(capsys, "train", "--data", d, "--model", tmp_path / "m", *FAST)
    assert code == 1 and "error:" in err and "class" in err


# -- classify --------------------------------------------------------------------------


def test_classify_report_line(trained, tmp_path, capsys):
    data, model = trained
    code, out, _ = run(capsys, "classify", "--model", model, data / "A_0000.of")
    assert code == 0
    fields = out.strip().split("\t")
    assert fields[0] == "A_0000.of"
    assert fields[1].startswith("class=") and fields[2].startswith("fp=")
    assert fields[4] in ("rescue=yes", "rescue=no")
    probs = [float(tok.split(":")[1]) for tok in fields[5].split()]
    assert probs == sorted(probs, reverse=True) and abs(sum(probs) - 1) < 1e-3


def test_classify_threshold_zero_no_secondary(trained, capsys):
    data, model = trained
    for name in ("A_0001.of", "L_0002.of", "W_0003.of"):
        _, out, _ = run(capsys, "classify", "--model", model, data / name, "--threshold", 0)
        assert "\tsecondary=-\t" in out
        _, out, _ = run(capsys, "classify", "--model", model, data / name, "--threshold", 1)
        assert "\tsecondary=-\t" not in out


def test_classify_wrong_grid(trained, tmp_path, capsys):
    _, model = trained
    path = tmp_path / "small.of"
    write_field(path, OrientationField.from_angles(np.zeros((10, 10))))
    code, _, err = run(capsys, "classify", "--model", model, path)
    assert code == 1
    assert err.startswith("error:") and "625 cells (25x25)" in err


def test_classify_corrupt_model(tmp_path, capsys):
    bad = tmp_path / "bad.txt"
    bad.write_text("garbage\n")
    f = tmp_path / "x.of"
    write_field(f, OrientationField.from_angles(np.zeros((25, 25))))
    code, _, err = run(capsys, "classify", "--model", bad, f)
    assert code == 1 and err.startswith("error:")


def test_arch_field_through_identity_model(tmp_path, capsys):
    # raw-feature softmax on clean zero-pole fields separates arches easily
    d = tmp_path / "d"
    run(capsys, "gen", "--out", d, "--per-class", 15, "--noise", 0.05, "--seed", 5)
    m = tmp_path / "m.txt"
    assert run(capsys, "train", "--data", d, "--model", m, "--layers", "none")[0] == 0
    arch = tmp_path / "arch.of"
    write_field(arch, zero_pole_field(SingularityLayout(), 25, 25))
    _, out, _ = run(capsys, "classify", "--model", m, arch)
    assert "\tclass=A\t" in out


# -- eval ----------------------------------------------------------------------------


def test_eval_reports(trained, tmp_path, capsys):
    data, model = trained
    out_dir = tmp_path / "rep"
    code, out, _ = run(capsys, "eval", "--model", model, "--data", data, "--out", out_dir, "--reject", 0.018)
    assert code == 0
    names = sorted(os.listdir(out_dir))
    assert names == sorted(
        ["confusion.tsv", "confusion_reject.tsv", "summary.tsv", "sweep.tsv", "sweep_reject.tsv", "recall.tsv"]
    )
    sweep_rows = (out_dir / "sweep.tsv").read_text().splitlines()
    assert len(sweep_rows) == 9
    assert [r.split("\t")[0] for r in sweep_rows[1:]] == ["0.60", "0.70", "0.75", "0.80", "0.85", "0.90", "0.95", "1.00"]
    summary = dict(ln.split("\t") for ln in (out_dir / "summary.tsv").read_text().splitlines())
    assert summary["samples"] == "24"
    assert summary["n_rejected"] == str(math.ceil(24 * 0.018))
    assert "# confusion" in out and "# recall" in out


def test_eval_empty_thresholds_matrix_only(trained, capsys):
    data, model = trained
    code, out, _ = run(capsys, "eval", "--model", model, "--data", data, "--thresholds", "")
    assert code == 0
    sections = [ln[2:] for ln in out.splitlines() if ln.startswith("# ")]
    assert sections == ["confusion", "summary"]


def test_eval_split_all(trained, capsys):
    data, model = trained
    _, out, _ = run(capsys, "eval", "--model", model, "--data", data, "--split", "all", "--thresholds", "")
    assert "samples\t48" in out


def test_eval_sweep_boundaries_consistent(trained, capsys):
    data, model = trained
    _, out, _ = run(capsys, "eval", "--model", model, "--data", data, "--thresholds", "0,1")
    lines = out.splitlines()
    top1 = float(next(ln for ln in lines if ln.startswith("top1_accuracy\t")).split("\t")[1])
    rows = [ln.split("\t") for ln in lines if ln.startswith(("0.00\t", "1.00\t"))]
    assert float(rows[0][-1]) == top1
    assert float(rows[1][-1]) >= top1


# -- reconstruct -----------------------------------------------------------------------


def test_reconstruct_identity_depth_zero(trained, tmp_path, capsys):
    data, _ = trained
    m = tmp_path / "m0.txt"
    run(capsys, "train", "--data", data, "--model", m, "--layers", "none")
    out = tmp_path / "rec.of"
    code, text, _ = run(capsys, "reconstruct", "--model", m, data / "R_0000.of", "--out", out)
    assert code == 0 and "mean_angular_error_deg=0.0000" in text
    a, b = read_field(data / "R_0000.of"), read_field(out)
    d = np.abs(a.angles - b.angles)
    assert np.minimum(d, math.pi - d).max() < 1e-9


def test_reconstruct_trained_reloadable(trained, tmp_path, capsys):
    data, model = trained
    out = tmp_path / "rec.of"
    code, text, _ = run(capsys, "reconstruct", "--model", model, data / "W_0001.of", "--out", out)
    assert code == 0
    err = float(text.strip().split("mean_angular_error_deg=")[1])
    assert 0 <= err <= 90
    assert read_field(out).shape == (25, 25)


# -- infogain --------------------------------------------------------------------------


def test_infogain_command(trained, tmp_path, capsys):
    data, _ = trained
    out = tmp_path / "ig.tsv"
    code, text, _ = run(capsys, "infogain", "--data", data, "--out", out)
    assert code == 0
    rows = out.read_text().splitlines()
    assert rows[0] == "scheme\tmean_gain\trank" and len(rows) == 7
    assert text == out.read_text()


# -- config and errors -------------------------------------------------------------------


def test_show_config_lists_defaults(capsys):
    code, out, _ = run(capsys, "--show-config")
    assert code == 0
    kv = dict(ln.split("=", 1) for ln in out.splitlines())
    assert kv["layers"] == "400,100,50"
    assert kv["thresholds"] == "0.6,0.7,0.75,0.8,0.85,0.9,0.95,1.0"
    assert set(kv) == {f for f in RunConfig.__dataclass_fields__}


def test_config_precedence(trained, tmp_path, capsys):
    data, model = trained
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# sweep grid\nthresholds = 0.5, 0.9\nreject=0.1\n")
    _, out, _ = run(capsys, "eval", "--model", model, "--data", data, "--config", cfg)
    assert "0.50\t" in out and "n_rejected\t3" in out
    _, out, _ = run(capsys, "eval", "--model", model, "--data", data, "--config", cfg, "--reject", 0)
    assert "n_rejected" not in out and "0.90\t" in out


def test_config_file_errors(trained, tmp_path, capsys):
    data, model = trained
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("colour=blue\n")
    code, _, err = run(capsys, "eval", "--model", model, "--data", data, "--config", cfg)
    assert code == 1 and "unknown setting" in err


@pytest.mark.parametrize(
    "argv",
    [
        ["classify", "--model", "m", "x", "--threshold", "2"],
        ["eval", "--model", "m", "--data", "d", "--reject", "1.0"],
        ["train", "--data", "d", "--model", "m", "--scale", "0"],
    ],
)
def test_invalid_settings(argv, capsys):
    code, _, err = run(capsys, *argv)
    assert code == 1 and err.startswith("error:")


def test_usage_errors_exit_2(capsys):
    with pytest.raises(SystemExit) as e:
        main(["train"])
    assert e.value.code == 2
    assert capsys.readouterr().err.startswith("error:")
    assert main([]) == 2


def test_module_entry_point(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "fpsae", "classify", "--model", str(tmp_path / "none"), "x.of"],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 1
    assert proc.stderr.startswith("error:") and proc.stderr.count("\n") == 1


# -- pipeline helpers ---------------------------------------------------------------------


def test_split_stratified_and_stable(trained):
    data, _ = trained
    entries = pipeline.load_dataset(data)
    train, test = pipeline.split_names(entries, 3)
    assert not train & test and len(train) == len(test) == 24
    for c in ClassLabel:
        assert sum(n.startswith(c.name) for n in train) == 6
    again = pipeline.split_names(list(reversed(entries)), 3)
    assert again == (train, test)
    assert pipeline.split_names(entries, 4) != (train, test)


def test_split_odd_counts():
    entries = [(f"A_{i}", None, ClassLabel.A) for i in range(5)]
    train, test = pipeline.split_names(entries, 0)
    assert (len(train), len(test)) == (3, 2)


def test_pgm_dataset_and_tented_arch_labels(tmp_path):
    for name, phi in (("a.pgm", 0.0), ("b.pgm", 0.5)):
        pix = ridge_image(512, phi).round().astype(np.uint8)
        (tmp_path / name).write_bytes(save_pgm(GrayImage.from_array(pix)))
    (tmp_path / "labels.tsv").write_text("a.pgm\tTA\nb.pgm\tW\n")
    entries = pipeline.load_dataset(tmp_path)
    assert [y for *_, y in entries] == [ClassLabel.A, ClassLabel.W]
    assert entries[0][1].shape == (25, 25)


def test_bad_labels_file(tmp_path):
    (tmp_path / "labels.tsv").write_text("a.of\tQ\n")
    with pytest.raises(ValueError):
        pipeline.read_labels(tmp_path)
    (tmp_path / "labels.tsv").write_text("a.of A\n")
    with pytest.raises(ValueError):
        pipeline.read_labels(tmp_path)


def test_model_file_roundtrip(trained):
    _, model = trained
    text = model.read_text()
    assert pipeline.format_model(pipeline.parse_model(text)) == text
    with pytest.raises(ValueError):
        pipeline.parse_model(text + "junk\n")
