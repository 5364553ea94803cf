import json

import numpy as np
import pytest
import yaml

from presched.cli import (
    ConfigError,
    RunConfig,
    aggregate_reports,
    load_run_config,
    main,
    markdown_table,
    metric_table,
)
from presched.forecaster.data import ingest_taskflow
from presched.forecaster.experiment import DEFAULT_HORIZONS

TINY = {
    "seed": 1,
    "horizons": [3, 5],
    "synthetic": {"n_sectors": 4, "n_frames": 160, "periods": [8]},
    "model": {"hidden": 4, "n_centers": 3, "hetero_width": 4, "node_embed_dim": 2},
    "train": {"epochs": 1, "max_batches_per_epoch": 2},
    "scenario": {"shape": [225, 780, 3, 40], "robots": 3, "policy": "pred-enhanced", "horizon": 5},
}


@pytest.fixture
def config(tmp_path):
    path = tmp_path / "run.yaml"
    path.write_text(yaml.safe_dump(TINY))
    return str(path)


def run_ok(argv, capsys):
    assert main(argv) == 0
    return json.loads(capsys.readouterr().out)["result"]


def run_err(argv, capsys):
    code = main(argv)
    assert code != 0
    return json.loads(capsys.readouterr().err)


# ---------------------------------------------------------------- configs


def test_defaults_without_file():
    cfg = load_run_config(None)
    assert cfg.seed == 0 and cfg.horizons == DEFAULT_HORIZONS
    assert cfg.train_config().split == (0.7, 0.1, 0.2)


def test_seed_override_reaches_every_section(config):
    cfg = load_run_config(config, seed=9)
    assert cfg.seed == 9 and cfg.train_config().seed == 9 and cfg.scenario_config().seed == 9


@pytest.mark.parametrize(
    "doc",
    [
        {"nope": 1},
        {"model": {"hiddenn": 3}},
        {"train": {"lr": 1e-3, "momentum": 0.9}},
        {"scenario": {"speed_limit": 2}},
        {"synthetic": {"sectors": 3}},
        {"scenario": [1, 2]},
    ],
)
def test_unknown_keys_rejected(tmp_path, doc):
    path = tmp_path / "c.yaml"
    path.write_text(yaml.safe_dump(doc))
    with pytest.raises(ConfigError):
        load_run_config(str(path))


def test_missing_paths_rejected(tmp_path):
    with pytest.raises(ConfigError):
        RunConfig(dataset=str(tmp_path / "absent.csv"))
    with pytest.raises(ConfigError):
        load_run_config(str(tmp_path / "absent.yaml"))


def test_invalid_values_rejected():
    with pytest.raises(ConfigError):
        RunConfig(horizons=(0,))
    with pytest.raises(ConfigError):
        RunConfig(repeats=0)


# ---------------------------------------------------------------- tables


def test_metric_table_truth_fixture_is_zero():
    truth = np.random.default_rng(0).poisson(3.0, (6, 4, 15, 1)).astype(float)
    table = metric_table(truth, truth, DEFAULT_HORIZONS)
    assert sorted(table) == [3, 5, 10, 15]
    assert all(v == 0.0 for row in table.values() for v in row.values())


def test_metric_table_shape_mismatch():
    with pytest.raises(ValueError):
        metric_table(np.zeros((2, 3, 1)), np.zeros((2, 4, 1)), [1])


def write_report(path, policy, horizon, err, mpt, mtr):
    path.mkdir(parents=True)
    doc = {"policy": policy, "horizon": horizon, "ERR": err, "MPT": mpt, "MTR": mtr}
    (path / "report.json").write_text(json.dumps(doc))


def test_report_means_match_hand_average(tmp_path, capsys):
    errs = [0.30, 0.32, 0.28, 0.35, 0.25]
    for i, e in enumerate(errs):
        write_report(tmp_path / "runs" / f"p{i}", "pred-enhanced", 10, e, 1.0 + i, 0.01 * i)
        write_report(tmp_path / "runs" / f"c{i}", "classic", 0, 0.5, 2.0, 0.0)
    result = run_ok(["report", str(tmp_path / "runs"), "--out", str(tmp_path / "rep")], capsys)
    rows = {r["policy"]: r for r in result["rows"]}
    assert rows["pred-enhanced"]["repeats"] == 5
    assert rows["pred-enhanced"]["ERR"] == pytest.approx(sum(errs) / 5)
    assert rows["pred-enhanced"]["MPT"] == pytest.approx(3.0)
    assert rows["pred-enhanced"]["MTR"] == pytest.approx(0.02)
    assert rows["classic"]["MTR"] == 0.0
    md = (tmp_path / "rep" / "summary.md").read_text()
    assert "| classic | - | 5 | 50.00% |" in md


def test_report_handles_missing_metric(tmp_path):
    write_report(tmp_path / "a", "classic", 0, 1.0, None, 0.0)
    summary = aggregate_reports([tmp_path])
    assert summary["rows"][0]["MPT"] is None
    assert "n/a" in markdown_table(summary)


def test_report_without_files_fails(tmp_path, capsys):
    err = run_err(["report", str(tmp_path)], capsys)
    assert err["error"] == "ConfigError" and err["command"] == "report"


# ---------------------------------------------------------------- commands


def test_ingest_canonicalizes(tmp_path, capsys):
    src = tmp_path / "in.csv"
    src.write_text("# n_sectors=2 n_frames=2\n0,1,4\n1,0,2\n")
    run_ok(["ingest", str(src), str(tmp_path / "out.csv")], capsys)
    flow = ingest_taskflow(tmp_path / "out.csv")
    assert flow.data[:, :, 0].tolist() == [[0.0, 2.0], [4.0, 0.0]]
    run_ok(["ingest", str(tmp_path / "out.csv"), str(tmp_path / "again.csv")], capsys)
    assert (tmp_path / "out.csv").read_bytes() == (tmp_path / "again.csv").read_bytes()


def test_ingest_parse_failure_reports_line(tmp_path, capsys):
    src = tmp_path / "in.csv"
    src.write_text("0,0,1\n0,1,-3\n")
    err = run_err(["ingest", str(src), str(tmp_path / "out.csv")], capsys)
    assert err["line"] == 2 and err["error"] == "TaskFlowParseError"


def test_train_eval_pipeline_is_idempotent(tmp_path, config, capsys):
    outs = []
    for name in ("a", "b"):
        out = tmp_path / name
        res = run_ok(["train", "--config", config, "--out", str(out)], capsys)
        assert len(res["train_loss"]) == 1
        run_ok(["eval", "--config", config, "--out", str(out), "--checkpoint", str(out / "model.ckpt")], capsys)
        outs.append(out)
    for f in ("model.ckpt", "loss_history.json", "eval.json"):
        assert (outs[0] / f).read_bytes() == (outs[1] / f).read_bytes()
    ev = json.loads((outs[0] / "eval.json").read_text())
    assert ev["horizons"] == [3, 5] and set(ev["model"]["3"]) == {"MAE", "RMSE", "WMAPE"}


def test_train_from_dataset_file(tmp_path, config, capsys):
    run_ok(["make-data", "--config", config, str(tmp_path / "flow.csv")], capsys)
    doc = dict(TINY, dataset=str(tmp_path / "flow.csv"))
    path = tmp_path / "ds.yaml"
    path.write_text(yaml.safe_dump(doc))
    res = run_ok(["train", "--config", str(path), "--out", str(tmp_path / "m")], capsys)
    assert (tmp_path / "m" / "model.ckpt").exists() and res["best_epoch"] == 0


def test_eval_without_checkpoint_fails(config, capsys):
    err = run_err(["eval", "--config", config], capsys)
    assert "checkpoint" in err["message"]


def test_simulate_twice_is_byte_identical(tmp_path, config, capsys):
    for name in ("a", "b"):
        res = run_ok(["simulate", "--config", config, "--out", str(tmp_path / name), "--seed", "4"], capsys)
        assert res["runs"][0]["run"] == "pred-enhanced-h5-s4"
    for f in ("report.json", "trace.jsonl"):
        a = (tmp_path / "a" / "pred-enhanced-h5-s4" / f).read_bytes()
        assert a == (tmp_path / "b" / "pred-enhanced-h5-s4" / f).read_bytes()


def test_simulate_repeats_and_policy_flags(tmp_path, config, capsys):
    res = run_ok(["simulate", "--config", config, "--out", str(tmp_path), "--policy", "classic",
                  "--repeats", "2"], capsys)
    assert [r["run"] for r in res["runs"]] == ["classic-h0-s1", "classic-h0-s2"]
    assert all(r["MTR"] == 0.0 for r in res["runs"])


def test_simulate_bad_config_exits_nonzero(tmp_path, capsys):
    path = tmp_path / "c.yaml"
    path.write_text(yaml.safe_dump({"scenario": {"robots": 0}}))
    err = run_err(["simulate", "--config", str(path), "--out", str(tmp_path)], capsys)
    assert err["command"] == "simulate" and "robot" in err["message"]


def test_usage_error_exit_status(capsys):
    assert main(["simulate", "--policy", "auction"]) == 2
    assert main([]) == 2
