"""
End-to-end tests of the command line, driven through main(argv).
"""

import csv
import json

import numpy as np
import pytest

from regcal.cli import FORMAT_VERSION, main
from regcal.config import reset_settings
from regcal.core import CauchyPrediction
from regcal.detection import DetectionRecord, GroundTruthRecord, write_detections, write_ground_truths, write_outputs

TINY_GP = ["--inducing", "5", "--epochs", "2", "--mc-samples", "4", "--batch-size", "32", "--seed", "1"]


def synth(tmp_path, name="data.jsonl", *extra):
    path = tmp_path / name
    assert main(["synth", "--kind", "gaussian-const-miscal", "--n", "60", "--seed", "2",
                 "--miscal", "2", "--output", str(path), *extra]) == 0
    return path


def lines(path):
    return [json.loads(line) for line in path.read_text().splitlines() if line.strip()]


def identity_model(tmp_path, k=1):
    path = tmp_path / "identity.json"
    path.write_text(json.dumps({"format_version": FORMAT_VERSION, "method": "var-scaling",
                                "payload": {"w": [1.0] * k}, "config": {}, "seed": 0}))
    return path


# ============================================================================
# synth
# ============================================================================

def test_synth_is_reproducible(tmp_path):
    first = synth(tmp_path, "a.jsonl")
    second = synth(tmp_path, "b.jsonl")
    assert first.read_bytes() == second.read_bytes()
    assert len(lines(first)) == 60


def test_seed_defaults_to_environment(tmp_path, monkeypatch):
    assert main(["synth", "--kind", "cosine", "--n", "20", "--seed", "11",
                 "--output", str(tmp_path / "explicit.jsonl")]) == 0
    monkeypatch.setenv("RECAL_SEED", "11")
    reset_settings()
    assert main(["synth", "--kind", "cosine", "--n", "20", "--output", str(tmp_path / "env.jsonl")]) == 0
    assert (tmp_path / "explicit.jsonl").read_bytes() == (tmp_path / "env.jsonl").read_bytes()


def test_invalid_synth_parameters(tmp_path, capsys):
    code = main(["synth", "--kind", "correlated-mv", "--rho", "1.5", "--output", str(tmp_path / "x.jsonl")])
    assert code == 2
    assert "rho" in capsys.readouterr().err


# ============================================================================
# fit / apply
# ============================================================================

def test_fit_variance_scaling(tmp_path, capsys):
    data = synth(tmp_path)
    model = tmp_path / "model.json"
    assert main(["fit", "--method", "var-scaling", "--input", str(data), "--output", str(model)]) == 0
    assert "train NLL:" in capsys.readouterr().out
    stored = json.loads(model.read_text())
    assert stored["format_version"] == FORMAT_VERSION
    assert stored["method"] == "var-scaling"
    samples = lines(data)
    z_sq = [(s["gt"][0] - s["mean"][0]) ** 2 / s["var"][0] for s in samples]
    assert stored["payload"]["w"][0] == pytest.approx(sum(z_sq) / len(z_sq), rel=1e-9)


def test_fit_missing_input(tmp_path, capsys):
    code = main(["fit", "--method", "isotonic", "--input", str(tmp_path / "none.jsonl"),
                 "--output", str(tmp_path / "m.json")])
    assert code == 2
    assert "not found" in capsys.readouterr().err
    assert not (tmp_path / "m.json").exists()


def test_invalid_training_config(tmp_path):
    data = synth(tmp_path)
    code = main(["fit", "--method", "gp-normal", "--input", str(data), "--output",
                 str(tmp_path / "m.json"), "--epochs", "0"])
    assert code == 2


def test_gp_fit_is_deterministic(tmp_path):
    data = synth(tmp_path)
    for name in ("a.json", "b.json"):
        assert main(["fit", "--method", "gp-normal", "--input", str(data),
                     "--output", str(tmp_path / name), *TINY_GP]) == 0
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()


def test_apply_identity_scaler(tmp_path):
    data = synth(tmp_path)
    out = tmp_path / "out.jsonl"
    assert main(["apply", "--model", str(identity_model(tmp_path)), "--input", str(data),
                 "--output", str(out)]) == 0
    before, after = lines(data), lines(out)
    assert len(after) == len(before)
    for src, dst in zip(before, after):
        assert dst["mean"] == pytest.approx(src["mean"])
        assert dst["var"] == pytest.approx(src["var"])
        assert dst["gt"] == src["gt"]


def test_apply_dimension_mismatch(tmp_path, capsys):
    data = synth(tmp_path)
    code = main(["apply", "--model", str(identity_model(tmp_path, k=2)), "--input", str(data),
                 "--output", str(tmp_path / "out.jsonl")])
    assert code == 2
    assert "K=2" in capsys.readouterr().err


def test_apply_rejects_bad_model_files(tmp_path):
    data = synth(tmp_path)
    broken = tmp_path / "broken.json"
    broken.write_text("{not json")
    future = tmp_path / "future.json"
    future.write_text(json.dumps({"format_version": FORMAT_VERSION + 1, "method": "var-scaling",
                                  "payload": {"w": [1.0]}}))
    for model in (broken, future):
        assert main(["apply", "--model", str(model), "--input", str(data),
                     "--output", str(tmp_path / "out.jsonl")]) == 2


def test_gp_beta_writes_cdf_grids(tmp_path):
    data = synth(tmp_path)
    model = tmp_path / "beta.json"
    out = tmp_path / "out.jsonl"
    assert main(["fit", "--method", "gp-beta", "--input", str(data), "--output", str(model), *TINY_GP]) == 0
    assert main(["apply", "--model", str(model), "--input", str(data), "--output", str(out),
                 "--grid-size", "16"]) == 0
    first = lines(out)[0]
    assert len(first["support"]) == 1 and len(first["support"][0]) == 16
    cdf = np.asarray(first["cdf"][0])
    assert np.all(np.diff(cdf) >= 0) and 0.0 <= cdf[0] and cdf[-1] <= 1.0
    assert np.all(np.diff(first["support"][0]) > 0)


# ============================================================================
# eval
# ============================================================================

def test_eval_prints_report(tmp_path, capsys):
    data = synth(tmp_path)
    capsys.readouterr()
    assert main(["eval", "--input", str(data)]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["input"] == "data.jsonl"
    assert report["metrics"]["meta/n"] == 60
    assert {"nll/mean", "pinball/mean", "qce/mean", "uce/mean", "ence/mean"} <= set(report["metrics"])


def test_eval_report_file_and_curves(tmp_path):
    data = synth(tmp_path)
    report_path = tmp_path / "report.json"
    curves_dir = tmp_path / "curves"
    assert main(["eval", "--input", str(data), "--report", str(report_path), "--bins", "4",
                 "--curves-dir", str(curves_dir)]) == 0
    assert json.loads(report_path.read_text())["config"]["bins"] == 4
    with (curves_dir / "reliability.csv").open() as handle:
        rows = list(csv.reader(handle))
    assert rows[0] == ["tau", "coverage_0"]
    assert len(rows) > 2
    with (curves_dir / "qce_map_0.csv").open() as handle:
        rows = list(csv.reader(handle))
    assert rows[0] == ["bin_lower", "bin_upper", "n_samples", "qce"]
    assert len(rows) == 5


def test_eval_single_level_and_subset(tmp_path, capsys):
    data = synth(tmp_path)
    capsys.readouterr()
    assert main(["eval", "--input", str(data), "--levels", "0.9", "--metrics", "pinball,qce"]) == 0
    metrics = json.loads(capsys.readouterr().out)["metrics"]
    assert metrics["meta/levels"] == [0.9]
    assert "nll/mean" not in metrics and "pinball/mean" in metrics


@pytest.mark.parametrize("args", [["--metrics", "nll,brier"], ["--levels", "0.1,1.2"], ["--bins", "0"]])
def test_eval_rejects_bad_options(tmp_path, args):
    data = synth(tmp_path)
    assert main(["eval", "--input", str(data), *args]) == 2


def test_eval_cauchy_outputs_note_missing_variance(tmp_path, capsys):
    rng = np.random.default_rng(0)
    dist = CauchyPrediction(loc=np.zeros((40, 1)), scale=np.ones((40, 1)))
    path = tmp_path / "cauchy.jsonl"
    write_outputs(path, dist, ground_truth=rng.standard_cauchy((40, 1)))
    assert main(["eval", "--input", str(path)]) == 0
    metrics = json.loads(capsys.readouterr().out)["metrics"]
    assert "uce/mean" not in metrics
    assert any("Cauchy" in note for note in metrics["meta/notes"])


# ============================================================================
# match
# ============================================================================

def _detection_files(tmp_path, n_images=6):
    detections, truths = [], []
    for i in range(n_images):
        for j in range(2):
            box = [20.0 * j + 10, 20.0 * i + 10, 8, 8]
            detections.append(DetectionRecord(image_id=f"im{i}", category="car", box_mean=box,
                                              box_var=[1, 1, 2, 2], score=0.5 + 0.01 * j))
            truths.append(GroundTruthRecord(image_id=f"im{i}", category="car",
                                            box=[box[0] + 0.5, box[1], 8, 8]))
    write_detections(tmp_path / "det.jsonl", detections)
    write_ground_truths(tmp_path / "gt.jsonl", truths)
    return tmp_path / "det.jsonl", tmp_path / "gt.jsonl"


def test_match_single_output(tmp_path, capsys):
    det, gt = _detection_files(tmp_path)
    out = tmp_path / "pairs.jsonl"
    assert main(["match", "--detections", str(det), "--ground-truth", str(gt), "--output", str(out)]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["matched"] == 12
    assert len(lines(out)) == 12 and len(lines(out)[0]["mean"]) == 4


def test_match_half_split(tmp_path):
    det, gt = _detection_files(tmp_path)
    train, held_out = tmp_path / "train.jsonl", tmp_path / "eval.jsonl"
    assert main(["match", "--detections", str(det), "--ground-truth", str(gt), "--split-half",
                 "--train", str(train), "--eval", str(held_out)]) == 0
    train_images = {line["image_id"] for line in lines(train)}
    eval_images = {line["image_id"] for line in lines(held_out)}
    assert train_images and eval_images and not train_images & eval_images
    assert len(train_images) == 3


def test_match_requires_output_paths(tmp_path):
    det, gt = _detection_files(tmp_path)
    assert main(["match", "--detections", str(det), "--ground-truth", str(gt), "--split-half",
                 "--train", str(tmp_path / "t.jsonl")]) == 2
    assert main(["match", "--detections", str(det), "--ground-truth", str(gt)]) == 2


def test_match_rejects_indefinite_box_covariance(tmp_path, capsys):
    det, gt = _detection_files(tmp_path)
    cov = np.eye(4)
    cov[0, 1] = cov[1, 0] = 2.0
    bad = DetectionRecord(image_id="im0", category="car", box_mean=[10, 10, 8, 8],
                          box_var=[1, 1, 1, 1], box_cov=cov.tolist(), score=0.9)
    write_detections(det, [bad])
    code = main(["match", "--detections", str(det), "--ground-truth", str(gt),
                 "--output", str(tmp_path / "pairs.jsonl")])
    assert code == 2
    assert "not positive definite" in capsys.readouterr().err


def test_match_with_nothing_matched(tmp_path):
    det, gt = _detection_files(tmp_path)
    assert main(["match", "--detections", str(det), "--ground-truth", str(gt), "--iou", "0.99",
                 "--output", str(tmp_path / "pairs.jsonl")]) == 2
