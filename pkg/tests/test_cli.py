from __future__ import annotations

import json

import pytest

from nudgekit.cli import EXIT_DATA, EXIT_OK, EXIT_USAGE, run

DEMO = """[subjects]
n = 1
[sim]
learn_days = 10
act_days = 2
evaluate_sleep = false
"""


@pytest.fixture(scope="module")
def runs(tmp_path_factory):
    root = tmp_path_factory.mktemp("runs")
    cfg = root / "demo.cfg"
    cfg.write_text(DEMO)
    for name, extra in (("a", ["--traces"]), ("b", [])):
        assert run(["simulate", "--config", str(cfg), "--seed", "7", "--out", str(root / name), *extra]) == EXIT_OK
    return root


def test_simulate_is_byte_identical(runs):
    a = (runs / "a" / "report.json").read_bytes()
    assert a == (runs / "b" / "report.json").read_bytes()
    assert json.loads(a)["seed"] == 7


def test_report_single_figure(runs, tmp_path):
    assert run(["report", "--run", str(runs / "a"), "--figure", "fig13", "--out", str(tmp_path)]) == EXIT_OK
    assert sorted(p.name for p in tmp_path.iterdir()) == ["fig13_funnel.csv", "fig13_funnel.png"]


def test_sleep_pipeline_from_traces(runs, tmp_path):
    traces = runs / "a" / "traces"
    (trace,) = sorted(traces.glob("*.jsonl.gz"))
    sid = trace.name.split(".")[0]
    labels = traces / f"{sid}.truth.json"
    ing = tmp_path / "ingest"
    assert run(["ingest", "--input", str(trace), "--labels", str(labels), "--out", str(ing)]) == EXIT_OK
    model = tmp_path / "model"
    assert run(["train-sleep", "--corpus", str(ing / "corpus"), "--folds", "3", "--out", str(model)]) == EXIT_OK
    cv = json.loads((model / "sleep_cv.json").read_text())
    assert cv["accuracy"] > 0.8
    det = tmp_path / "detect"
    assert run(["detect-sleep", "--input", str(trace), "--model", str(model / "sleep_model.json"), "--out", str(det)]) == EXIT_OK
    episodes = (det / "episodes.jsonl").read_text().splitlines()
    assert len(episodes) >= 8
    cor = tmp_path / "cor"
    code = run(["correlate", "--input", str(trace), "--episodes", str(det / "episodes.jsonl"), "--out", str(cor)])
    assert code == EXIT_OK
    assert (cor / "correlation.csv").exists() and (cor / "best_profile.json").exists()


def test_detect_without_model_is_a_data_error(runs, tmp_path, capsys):
    (trace,) = sorted((runs / "a" / "traces").glob("*.jsonl.gz"))
    code = run(["detect-sleep", "--input", str(trace), "--model", str(tmp_path / "none.json"), "--out", str(tmp_path)])
    assert code == EXIT_DATA
    assert "train-sleep" in capsys.readouterr().err


def test_bad_config_is_a_usage_error(tmp_path):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("[subjects]\nn = 0\n")
    assert run(["simulate", "--config", str(cfg), "--seed", "1", "--out", str(tmp_path)]) == EXIT_USAGE


def test_missing_seed_is_a_usage_error(tmp_path):
    with pytest.raises(SystemExit) as exc:
        run(["simulate", "--out", str(tmp_path)])
    assert exc.value.code == EXIT_USAGE


def test_print_config(capsys):
    assert run(["--print-config"]) == EXIT_OK
    assert "[nudge]" in capsys.readouterr().out
