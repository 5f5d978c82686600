from __future__ import annotations

import json
import subprocess
import sys

import numpy as np
import pytest

from qrnn_dm import io
from qrnn_dm.cli import EXIT_CONFIG, EXIT_NUMERICAL, EXIT_OK, EXIT_VERIFY, main
from qrnn_dm.training import QRNNModel


def run(*args):
    return main([str(a) for a in args])


def test_gen_data_outputs(tmp_path, capsys):
    assert run("gen-data", "--case", "a", "--out", tmp_path / "r") == EXIT_OK
    assert "50 windows" in capsys.readouterr().out
    header, rows, meta = io.read_csv(tmp_path / "r" / "series.csv")
    assert header == ["time", "x0", "target"] and len(rows) == 1000
    assert {"config_sha256", "data_seed", "init_seed", "case"} <= set(meta)
    split = io.read_json(tmp_path / "r" / "split.json")
    assert split["n_windows"] == 50 and split["splits"]["val"] == [0, 1, 2, 9, 11, 17, 21, 28]
    assert split["provenance"]["config_sha256"] == meta["config_sha256"]


def test_gen_data_is_byte_identical(tmp_path):
    for name in ("x", "y"):
        assert run("gen-data", "--case", "c", "--out", tmp_path / name) == EXIT_OK
    for f in ("series.csv", "split.json"):
        assert (tmp_path / "x" / f).read_bytes() == (tmp_path / "y" / f).read_bytes()


def test_series_csv_roundtrips_exactly(tmp_path):
    run("gen-data", "--case", "b", "--out", tmp_path)
    cfg = io.load_config(tmp_path / "config.json")
    ser = io.read_series(tmp_path / "series.csv", cfg.series)
    ref = io.build_dataset(cfg).series
    np.testing.assert_array_equal(ser.inputs, ref.inputs)
    np.testing.assert_array_equal(ser.target, ref.target)


def test_config_roundtrip_and_overrides(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"case": "b", "train": {"restarts": 3}, "series": {"params": {"mu": 1.5}}}))
    cfg = io.load_config(path)
    assert cfg.train.g_tol == 1e-4 and cfg.train.restarts == 3 and cfg.series.params["mu"] == 1.5
    assert cfg.ansatz.n_params == 43
    again = io.RunConfig.from_dict(json.loads(json.dumps(cfg.to_dict())))
    assert again.to_dict() == cfg.to_dict() and again.digest() == cfg.digest()


@pytest.mark.parametrize("payload", ['{"ansatz": {"L": 1}}', '{"case": "z"}', "[1, 2]", "not json",
                                     '{"case": "a", "train": {"gradient": "exact"}}',
                                     '{"case": "a", "series": {"params": {"bogus": 1}}}'])
def test_bad_configs_exit_1(tmp_path, payload):
    path = tmp_path / "cfg.json"
    path.write_text(payload)
    assert run("gen-data", path, "--out", tmp_path) == EXIT_CONFIG


def test_usage_errors_exit_1(tmp_path):
    assert run("gen-data") == EXIT_CONFIG
    assert run("gen-data", tmp_path / "missing.json") == EXIT_CONFIG
    with pytest.raises(SystemExit) as info:
        run("train", "--case", "a", "--bogus")
    assert info.value.code == EXIT_CONFIG
    with pytest.raises(SystemExit) as info:
        run("nope")
    assert info.value.code == EXIT_CONFIG


def test_unwritable_output(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert run("gen-data", "--case", "a", "--out", blocker / "sub") == EXIT_CONFIG


def test_train_evaluate_predict(tmp_path, capsys):
    out = tmp_path / "run"
    assert run("train", "--case", "a", "--restarts", 1, "--max-iter", 5, "--workers", 1, "--out", out) == EXIT_OK
    for f in ("model.json", "report.json", "loss_curve.csv", "predictions.csv"):
        assert (out / f).exists()
    report = io.read_json(out / "report.json")
    assert report["n_it"] == 5 and report["gradient"] == "analytical"
    assert {"rmse_train", "rmse_val", "rmse_test", "rmse_full_test"} <= set(report)
    header, rows, _ = io.read_csv(out / "loss_curve.csv")
    assert header == ["iteration", "train_rmse", "val_rmse"] and len(rows) == 6
    header, rows, _ = io.read_csv(out / "predictions.csv")
    assert header == io.PREDICTION_HEADER
    assert sum(r[0] == "full_test" for r in rows) == 200
    capsys.readouterr()

    assert run("evaluate", "--case", "a", "--out", out, "--output", tmp_path / "scores.json") == EXIT_OK
    scores = io.read_json(tmp_path / "scores.json")
    assert scores["rmse_train"] == pytest.approx(report["rmse_train"], abs=1e-15)
    assert run("predict", "--case", "a", "--out", out, "--output", tmp_path / "p.csv") == EXIT_OK
    assert io.read_csv(tmp_path / "p.csv")[:2] == io.read_csv(out / "predictions.csv")[:2]
    model = io.read_model(out / "model.json")
    assert isinstance(model, QRNNModel) and model.theta.shape == (31,)
    assert run("evaluate", "--case", "a", "--model", tmp_path / "none.json") == EXIT_CONFIG


def test_train_numerical_gradient(tmp_path):
    out = tmp_path / "num"
    assert run("train", "--case", "a", "--restarts", 1, "--max-iter", 2, "--workers", 1,
               "--gradient", "numerical", "--eps", 1e-8, "--out", out) == EXIT_OK
    report = io.read_json(out / "report.json")
    assert report["gradient"] == "numerical" and report["n_fev"] > 10 * report["n_jev"]


def test_train_failure_exit_code(tmp_path, monkeypatch):
    import qrnn_dm.training as training
    from qrnn_dm.optim import OptimizeResult

    monkeypatch.setattr(training, "minimize", lambda f, g, x0, **kw: OptimizeResult(
        x0, f(x0), g(x0), 0, 1, 1, False, True, "line search failed"))
    assert run("train", "--case", "a", "--restarts", 2, "--workers", 1, "--out", tmp_path) == EXIT_NUMERICAL
    assert "restarts" in io.read_json(tmp_path / "report.json")


def test_grad_check_pass_and_fault(capsys):
    assert run("grad-check", "--case", "a", "--samples", 2) == EXIT_OK
    assert "PASS" in capsys.readouterr().out
    assert run("grad-check", "--case", "a", "--samples", 1, "--fault-flip-sign", 7) == EXIT_VERIFY
    out = capsys.readouterr().out
    assert "param=7" in out and "FAIL" in out


def test_hessian_check(capsys):
    assert run("hessian-check") == EXIT_OK
    assert "circuits 1459/1459" in capsys.readouterr().out
    assert run("grad-check", "--case", "a", "--samples", 1, "--steps", 2, "--hessian") == EXIT_OK


def test_console_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "qrnn_dm.cli", "gen-data", "--case", "a", "--out", str(tmp_path)],
                         capture_output=True, text=True)
    assert res.returncode == 0 and "1000 points" in res.stdout
