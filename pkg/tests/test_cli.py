import csv
import json

import numpy as np
import pytest

from csge.cli import main
from csge.core import Dataset
from csge.io import write_csv


@pytest.fixture
def workspace(tmp_path, small_regression):
    write_csv(small_regression, tmp_path / "train.csv", target="y")
    config = {
        "members": [
            {"kind": "linear_least_squares"},
            {"kind": "decision_tree", "hyper_params": {"max_depth": 3}},
        ],
        "data": {"path": str(tmp_path / "train.csv"), "target": "y"},
        "folds": {"k": 3},
        "objective": {"max_refine_iters": 30},
        "eval": {"n_folds": 3, "n_seeds": 1, "inner_folds": 3},
        "output_dir": str(tmp_path / "out"),
    }
    (tmp_path / "config.json").write_text(json.dumps(config))
    return tmp_path


def read(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_no_command_is_usage_error():
    assert main([]) == 1


def test_unknown_flag_is_usage_error():
    with pytest.raises(SystemExit) as exc:
        main(["fit", "--bogus"])
    assert exc.value.code == 1


def test_fit_without_config(tmp_path):
    assert main(["fit"]) == 1
    assert main(["fit", "--config", str(tmp_path / "nope.json")]) == 1


def test_predict_without_model(tmp_path):
    (tmp_path / "x.csv").write_text("x0\n1\n")
    assert main(["predict", "--model", str(tmp_path / "m.json"), "--data", str(tmp_path / "x.csv"),
                 "--out", str(tmp_path / "p.csv")]) == 2


def test_bad_data_exit_code(workspace):
    (workspace / "train.csv").write_text("x0,x1,x2,y\n1,2,oops,4\n")
    assert main(["fit", "--config", str(workspace / "config.json")]) == 2


def test_fit_predict_explain(workspace, small_regression):
    model = workspace / "out" / "model.json"
    assert main(["fit", "--config", str(workspace / "config.json"), "--trace", str(workspace / "trace.csv")]) == 0
    assert model.is_file() and (workspace / "trace.csv").is_file()

    q = Dataset(small_regression.features[:5], np.zeros(5), feature_names=small_regression.feature_names)
    write_csv(q, workspace / "query.csv", target="unused")
    out = workspace / "pred.csv"
    assert main(["predict", "--model", str(model), "--data", str(workspace / "query.csv"), "--out", str(out)]) == 0
    preds = read(out)
    weights = read(workspace / "pred_weights.csv")
    assert len(preds) == 5 and len(weights) == 10
    for i in range(5):
        rows = [r for r in weights if r["sample_id"] == str(i)]
        assert abs(sum(float(r["w_final"]) for r in rows) - 1) <= 1e-9
        fused = sum(float(r["w_final"]) * float(r["member_prediction"]) for r in rows)
        assert fused == pytest.approx(float(preds[i]["prediction"]), rel=1e-12)

    assert main(["explain", "--model", str(model), "--data", str(workspace / "query.csv"),
                 "--out", str(workspace / "explain.txt")]) == 0
    text = (workspace / "explain.txt").read_text()
    assert text.startswith("eta_global=") and "decision_tree,final" in text


def test_eval_writes_reports(workspace):
    stem = workspace / "report"
    assert main(["eval", "--config", str(workspace / "config.json"), "--out", str(stem)]) == 0
    rows = read(stem.with_suffix(".csv"))
    assert {r["model"] for r in rows} == {"linear_least_squares", "decision_tree", "averaging", "csge"}
    assert stem.with_suffix(".md").read_text().startswith("| model |")


def test_synthetic_global_report(tmp_path):
    out = tmp_path / "syn"
    assert main(["synthetic", "--which", "global", "--out", str(out)]) == 0
    report = json.loads((out / "report.json").read_text())
    assert report["rmse"] < 0.05
    np.testing.assert_allclose(report["w_final_mean"], [0.6, 0.4], atol=0.02)
    for name in ("target.xy", "csge.xy", "member_1.xy", "member_2.xy", "report.md"):
        assert (out / name).is_file()
    assert np.loadtxt(out / "csge.xy").shape == (1000, 2)
