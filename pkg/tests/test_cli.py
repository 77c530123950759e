import csv
import json

import pytest

from setinv.cli import EXIT_CONFIG, EXIT_OK, EXIT_RESOURCE, EXIT_RUN, main


def test_oasis_writes_outputs(tmp_path, capsys):
    out = tmp_path / "run"
    code = main(["oasis", "--problem", "circle", "--n-init", "30", "--n-total", "40", "--seed", "2",
                 "--resolution", "41", "--timing-calls", "10", "--out", str(out)])
    assert code == EXIT_OK
    for name in ("samples.csv", "log.csv", "model.json", "summary.json"):
        assert (out / name).exists()
    summary = json.loads((out / "summary.json").read_text())
    assert 0 <= summary["accuracy"] <= 1 and summary["resolution"] == 41
    assert len(list(csv.DictReader(open(out / "samples.csv")))) == 40
    assert "accuracy=" in capsys.readouterr().out


def test_sivia_then_eval_and_plot(tmp_path, capsys):
    out = tmp_path / "sivia"
    assert main(["sivia", "--problem", "circle", "--epsilon", "0.2", "--out", str(out)]) == EXIT_OK
    assert (out / "subpaving.csv").exists()
    capsys.readouterr()
    code = main(["eval", "--problem", "circle", "--subpaving", str(out / "subpaving.csv"), "--index",
                 "--resolution", "31", "--timing-calls", "10", "--out", str(tmp_path / "eval.json")])
    assert code == EXIT_OK
    result = json.loads(capsys.readouterr().out)
    assert result["classifier"] == "subpaving-index" and 0.9 < result["accuracy"] <= 1
    plots = tmp_path / "plots"
    assert main(["plot", "--problem", "circle", "--subpaving", str(out / "subpaving.csv"),
                 "--out", str(plots)]) == EXIT_OK
    assert (plots / "circle-subpaving.svg").stat().st_size > 0


def test_config_file_is_read(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"problem": "ring", "sivia": {"epsilon": 0.3}}))
    assert main(["sivia", "--config", str(cfg), "--out", str(tmp_path / "o")]) == EXIT_OK
    assert json.loads((tmp_path / "o" / "summary.json").read_text())["epsilon"] == 0.3


@pytest.mark.parametrize("argv", [
    ["oasis", "--problem", "no-such-problem"],
    ["sivia", "--problem", "lotka-volterra"],
    ["frobnicate"],
    ["oasis"],
    ["oasis", "--problem", "circle", "--n-init", "50", "--n-total", "10"],
    ["eval", "--problem", "circle"],
    ["plot", "--problem", "circle"],
])
def test_config_errors_exit_1(argv, tmp_path, capsys):
    assert main(argv + ["--out", str(tmp_path)] if argv[0] != "frobnicate" else argv) == EXIT_CONFIG


def test_missing_config_file_exits_1(tmp_path):
    assert main(["sivia", "--config", str(tmp_path / "absent.json")]) == EXIT_CONFIG
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["sivia", "--config", str(bad)]) == EXIT_CONFIG


def test_box_budget_exits_3(tmp_path, capsys):
    code = main(["sivia", "--problem", "sphere-5d", "--epsilon", "0.05", "--max-boxes", "1000",
                 "--out", str(tmp_path)])
    assert code == EXIT_RESOURCE
    assert "resource error" in capsys.readouterr().err


def test_run_error_exits_2(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"problem": "circle",
                               "oasis": {"gamma0": 50.0, "growth": 1.01, "max_steps": 2}}))
    code = main(["oasis", "--config", str(cfg), "--n-init", "50", "--n-total", "60", "--out", str(tmp_path / "r")])
    assert code == EXIT_RUN
    assert (tmp_path / "r" / "samples.partial.csv").exists()
    assert "run error" in capsys.readouterr().err


def test_bench_subcommand(tmp_path, capsys):
    cfg = tmp_path / "suite.json"
    cfg.write_text(json.dumps({"problems": ["circle"], "methods": ["sivia"], "sivia": {"epsilon": 0.3},
                               "resolution": 31, "timing_calls": 10}))
    assert main(["bench", "--config", str(cfg), "--out", str(tmp_path / "b")]) == EXIT_OK
    assert (tmp_path / "b" / "report.csv").exists() and (tmp_path / "b" / "summary.csv").exists()
    assert main(["bench", "--problems", "nope", "--out", str(tmp_path / "c")]) == EXIT_CONFIG


def test_help_exits_0(capsys):
    assert main(["--help"]) == EXIT_OK
