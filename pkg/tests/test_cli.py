"""End-to-end command-line tests: artifacts, determinism, exit codes."""

import json

import pandas as pd
import pytest

import tsmom.cli as cli
from tsmom.cli import main
from tsmom.trainer import TrainingError


def run(argv):
    return main(argv)


@pytest.fixture()
def panel(tmp_path):
    out = tmp_path / "synth"
    assert run(["synth", "--out", str(out), "--seed", "7",
                "--n-assets", "3", "--periods", "700"]) == 0
    return out / "synthetic.csv"


def test_synth_writes_panel_and_manifest(tmp_path):
    out = tmp_path / "s"
    assert run(["synth", "--out", str(out), "--seed", "11",
                "--n-assets", "2", "--periods", "120", "--kind", "mixed"]) == 0
    manifest = json.loads((out / "synthetic_manifest.json").read_text())
    assert manifest["seed"] == 11
    assert manifest["kind"] == "mixed"
    frame = pd.read_csv(out / "synthetic.csv")
    assert list(frame.columns) == ["date", "T00", "N01"]
    assert len(frame) == 120


def test_synth_reruns_byte_identical(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        assert run(["synth", "--out", str(out), "--seed", "3",
                    "--n-assets", "2", "--periods", "150"]) == 0
    assert (a / "synthetic.csv").read_bytes() == (b / "synthetic.csv").read_bytes()
    assert (a / "synthetic_manifest.json").read_bytes() == \
        (b / "synthetic_manifest.json").read_bytes()


def test_ingest_writes_three_csvs_and_summary(panel, tmp_path):
    out = tmp_path / "ing"
    assert run(["ingest", "--data", str(panel), "--schema", "wide",
                "--out", str(out)]) == 0
    for name in ("features.csv", "returns.csv", "vol.csv"):
        assert (out / name).exists()
    summary = json.loads((out / "ingest_summary.json").read_text())
    assert summary["n_assets"] == 3
    assert summary["dropped_rows"] == 0


def test_ingest_rerun_is_byte_identical(panel, tmp_path):
    a, b = tmp_path / "i1", tmp_path / "i2"
    for out in (a, b):
        assert run(["ingest", "--data", str(panel), "--schema", "wide",
                    "--out", str(out)]) == 0
    for name in ("features.csv", "returns.csv", "vol.csv",
                 "ingest_summary.json"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_malformed_csv_exits_2_with_diagnostic(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("date,asset_id,price\n2020-01-01,A,100\n2020-01-01,A,101\n")
    rc = run(["ingest", "--data", str(bad), "--schema", "long",
              "--out", str(tmp_path / "o")])
    assert rc == 2
    err = capsys.readouterr().err
    assert "error" in err
    assert "line" in err


def test_missing_data_file_exits_2(tmp_path, capsys):
    rc = run(["ingest", "--data", str(tmp_path / "nope.csv"),
              "--schema", "wide", "--out", str(tmp_path / "o")])
    assert rc == 2
    assert "error" in capsys.readouterr().err


def test_backtest_sgn_artifacts_and_positive_sharpe(panel, tmp_path):
    out = tmp_path / "bt"
    assert run(["backtest", "--data", str(panel), "--schema", "wide",
                "--strategy", "sgn", "--out", str(out)]) == 0
    for name in ("positions.csv", "asset_returns.csv", "turnover.csv",
                 "cost_sweep.csv", "report.csv", "report.json",
                 "crossval.csv", "portfolio.csv"):
        assert (out / name).exists()
    report = pd.read_csv(out / "report.csv", index_col="strategy")
    assert set(report.index) == {"sgn_raw", "sgn_rescaled"}
    # seeded trending panel: the sign rule should be profitable
    assert report.loc["sgn_raw", "Sharpe"] > 0
    sweep = pd.read_csv(out / "cost_sweep.csv")
    assert list(sweep["cost_bps"]) == [0.0, 0.5, 1.0, 2.0, 3.0, 4.0, 5.0]


def test_backtest_rerun_is_byte_identical(panel, tmp_path):
    a, b = tmp_path / "b1", tmp_path / "b2"
    for out in (a, b):
        assert run(["backtest", "--data", str(panel), "--schema", "wide",
                    "--strategy", "macd", "--out", str(out)]) == 0
    for name in ("report.csv", "portfolio.csv", "positions.csv",
                 "turnover.csv", "cost_sweep.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_config_file_used_and_flags_win(panel, tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("strategy = long_only\nblock_years = 2  # inline comment\n")
    out = tmp_path / "bt"
    assert run(["backtest", "--config", str(cfg), "--data", str(panel),
                "--schema", "wide", "--strategy", "sgn",
                "--out", str(out)]) == 0
    report = pd.read_csv(out / "report.csv", index_col="strategy")
    assert "sgn_raw" in report.index          # flag beat the file
    assert "long_only_raw" not in report.index


def test_bad_config_line_exits_2(panel, tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("strategy sgn\n")
    rc = run(["backtest", "--config", str(cfg), "--data", str(panel),
              "--schema", "wide", "--out", str(tmp_path / "o")])
    assert rc == 2
    assert "key = value" in capsys.readouterr().err


def test_loss_flag_rejected_for_classical_strategy(panel, tmp_path, capsys):
    rc = run(["backtest", "--data", str(panel), "--schema", "wide",
              "--strategy", "sgn", "--loss", "sharpe",
              "--out", str(tmp_path / "o")])
    assert rc == 2
    assert "learned" in capsys.readouterr().err


def test_backtest_learned_linear_small_search(panel, tmp_path):
    cfg = tmp_path / "train.cfg"
    cfg.write_text("random_search_iters = 2\nmax_epochs = 3\npatience = 2\n")
    out = tmp_path / "btl"
    assert run(["backtest", "--config", str(cfg), "--data", str(panel),
                "--schema", "wide", "--strategy", "linear",
                "--loss", "sharpe", "--block-years", "1", "--seed", "3",
                "--out", str(out)]) == 0
    manifest = json.loads((out / "run_manifest.json").read_text())
    assert manifest["config"]["strategy"] == "linear"
    assert manifest["config"]["random_search_iters"] == 2
    assert len(manifest["blocks"]) >= 1
    boundary = manifest["blocks"][0]["boundary"]
    assert (out / f"checkpoint_{boundary}.json").exists()
    # tradeable positions exist only from the first trained boundary onward
    pos = pd.read_csv(out / "positions.csv", parse_dates=["date"])
    assert pos.loc[pos["valid"].astype(bool), "date"].min() >= \
        pd.Timestamp(boundary)


def test_training_failure_exits_3_and_writes_manifest(panel, tmp_path,
                                                      monkeypatch, capsys):
    def boom(*args, **kwargs):
        raise TrainingError("all random-search candidates diverged")
    monkeypatch.setattr(cli, "walk_forward", boom)
    out = tmp_path / "fail"
    rc = run(["backtest", "--data", str(panel), "--schema", "wide",
              "--strategy", "mlp", "--out", str(out)])
    assert rc == 3
    assert "diverged" in capsys.readouterr().err
    manifest = json.loads((out / "run_manifest.json").read_text())
    assert "diverged" in manifest["error"]


def test_report_command_summarises_portfolio(panel, tmp_path):
    bt = tmp_path / "bt"
    assert run(["backtest", "--data", str(panel), "--schema", "wide",
                "--strategy", "sgn", "--out", str(bt)]) == 0
    rep = tmp_path / "rep"
    assert run(["report", "--data", str(bt / "portfolio.csv"),
                "--out", str(rep)]) == 0
    report = pd.read_csv(rep / "report.csv", index_col="strategy")
    base = pd.read_csv(bt / "report.csv", index_col="strategy")
    assert report.loc["raw_return", "Sharpe"] == pytest.approx(
        base.loc["sgn_raw", "Sharpe"])


def test_report_missing_file_exits_2(tmp_path, capsys):
    rc = run(["report", "--data", str(tmp_path / "nope.csv"),
              "--out", str(tmp_path / "o")])
    assert rc == 2
    assert "error" in capsys.readouterr().err
