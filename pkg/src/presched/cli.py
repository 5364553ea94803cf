"""Command-line entry point: ingest, train, eval, simulate and report.

Every command reads an optional YAML run config. Unknown keys are rejected,
missing keys take the dataclass defaults, and ``--seed`` overrides the
config seed. Failures print one JSON error record to stderr and exit with a
nonzero status.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from presched.forecaster.checkpoint import load_checkpoint, save_checkpoint
from presched.forecaster.data import PeriodicFlowSpec, export_taskflow, ingest_taskflow, synthetic_taskflow
from presched.forecaster.experiment import DEFAULT_HORIZONS, evaluate, ring_sector_graph
from presched.forecaster.metrics import eval_metrics
from presched.forecaster.model import GraphContext, ModelConfig
from presched.forecaster.training import TrainConfig, chronological_split, new_model, train
from presched.rng import substream
from presched.simulator.engine import model_predictor, run_scenario
from presched.simulator.metrics import dumps_report, write_report, write_trace
from presched.simulator.scenario import ScenarioConfig, generate_scenario
from presched.warehouse import build_sector_graph, load_map

EXIT_USAGE = 2
EXIT_FAILURE = 1
REPORT_METRICS = ("ERR", "MPT", "MTR")


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    """One YAML document configuring any command.

    Sections ``synthetic``, ``model``, ``train`` and ``scenario`` hold keyword
    overrides for :class:`PeriodicFlowSpec`, :class:`ModelConfig`,
    :class:`TrainConfig` and :class:`ScenarioConfig`.
    """

    seed: int = 0
    output_dir: str = "runs"
    dataset: str | None = None
    map: str | None = None
    checkpoint: str | None = None
    horizons: tuple[int, ...] = DEFAULT_HORIZONS
    repeats: int = 1
    workers: int = 1
    synthetic: dict = field(default_factory=dict)
    model: dict = field(default_factory=dict)
    train: dict = field(default_factory=dict)
    scenario: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.horizons = tuple(int(h) for h in self.horizons)
        if not self.horizons or min(self.horizons) < 1:
            raise ConfigError("horizons must be positive integers")
        if self.repeats < 1 or self.workers < 1:
            raise ConfigError("repeats and workers must be >= 1")
        for name, cls in (("synthetic", PeriodicFlowSpec), ("model", ModelConfig), ("train", TrainConfig),
                          ("scenario", ScenarioConfig)):
            _check_keys(getattr(self, name), cls, name)
        for key in ("dataset", "map", "checkpoint"):
            path = getattr(self, key)
            if path is not None and not Path(path).exists():
                raise ConfigError(f"{key} path does not exist: {path}")

    def flow_spec(self) -> PeriodicFlowSpec:
        return PeriodicFlowSpec(**self.synthetic)

    def train_config(self) -> TrainConfig:
        return TrainConfig(**{**self.train, "seed": self.seed})

    def scenario_config(self, **overrides) -> ScenarioConfig:
        kw = {"seed": self.seed, **self.scenario, **{k: v for k, v in overrides.items() if v is not None}}
        if self.map and "map_path" not in kw:
            kw["map_path"] = self.map
        if self.checkpoint and "checkpoint_path" not in kw:
            kw["checkpoint_path"] = self.checkpoint
        return ScenarioConfig(**kw)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["horizons"] = list(self.horizons)
        return d


def _check_keys(section: Any, cls, name: str) -> None:
    if not isinstance(section, dict):
        raise ConfigError(f"section {name!r} must be a mapping")
    allowed = {f.name for f in fields(cls)}
    unknown = sorted(set(section) - allowed)
    if unknown:
        raise ConfigError(f"unknown key(s) in {name!r}: {', '.join(unknown)}")


def load_run_config(path: str | None, seed: int | None = None, output_dir: str | None = None) -> RunConfig:
    """Parse a YAML run config (or defaults) and apply command-line overrides."""
    doc: dict = {}
    if path is not None:
        p = Path(path)
        if not p.exists():
            raise ConfigError(f"config file does not exist: {path}")
        doc = yaml.safe_load(p.read_text(encoding="utf-8")) or {}
        if not isinstance(doc, dict):
            raise ConfigError("run config must be a mapping at top level")
    _check_keys(doc, RunConfig, "run config")
    if seed is not None:
        doc["seed"] = seed
    if output_dir is not None:
        doc["output_dir"] = output_dir
    try:
        return RunConfig(**doc)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


# ---------------------------------------------------------------- shared pieces


def load_flow(cfg: RunConfig) -> np.ndarray:
    if cfg.dataset:
        return ingest_taskflow(cfg.dataset).data
    return synthetic_taskflow(cfg.flow_spec(), substream(cfg.seed, "taskflow")).data


def load_graph(cfg: RunConfig, n_sectors: int) -> GraphContext:
    if cfg.map:
        graph = GraphContext.from_sector_graph(build_sector_graph(load_map(cfg.map)))
        if graph.n_sectors != n_sectors:
            raise ConfigError(f"map has {graph.n_sectors} sectors but the data has {n_sectors}")
        return graph
    return ring_sector_graph(n_sectors)


def metric_table(pred: np.ndarray, truth: np.ndarray, horizons) -> dict[int, dict[str, float]]:
    """MAE/RMSE/WMAPE per horizon step for ``(..., horizon, features)`` arrays."""
    pred, truth = np.asarray(pred, dtype=float), np.asarray(truth, dtype=float)
    if pred.shape != truth.shape:
        raise ValueError(f"prediction shape {pred.shape} does not match truth {truth.shape}")
    top = pred.shape[-2]
    return {h: eval_metrics(pred[..., h - 1, :], truth[..., h - 1, :]) for h in horizons if h <= top}


def _out(cfg: RunConfig) -> Path:
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_json(path: Path, doc: dict) -> None:
    path.write_text(dumps_report(doc), encoding="utf-8")


# ---------------------------------------------------------------- commands


def cmd_ingest(src: str, dst: str) -> dict:
    flow = ingest_taskflow(src)
    export_taskflow(flow, dst)
    return {"sectors": flow.n_sectors, "frames": flow.n_frames, "output": dst}


def cmd_make_data(cfg: RunConfig, dst: str) -> dict:
    flow = synthetic_taskflow(cfg.flow_spec(), substream(cfg.seed, "taskflow"))
    export_taskflow(flow, dst)
    return {"sectors": flow.n_sectors, "frames": flow.n_frames, "output": dst}


def cmd_train(cfg: RunConfig) -> dict:
    data = load_flow(cfg)
    tcfg = cfg.train_config()
    mcfg = ModelConfig(**{"n_sectors": data.shape[0], "horizon": max(cfg.horizons), **cfg.model})
    (t0, t1), _, _ = chronological_split(data.shape[1], tcfg.split)
    model = new_model(mcfg, load_graph(cfg, data.shape[0]), data[:, t0:t1], tcfg.seed)
    result = train(model, data, tcfg)
    out = _out(cfg)
    save_checkpoint(result.model, out / "model.ckpt", {"train": tcfg.to_dict(), "best_epoch": result.best_epoch})
    history = {"train_loss": result.train_loss, "val_loss": result.val_loss, "best_epoch": result.best_epoch}
    _write_json(out / "loss_history.json", history)
    return {"checkpoint": str(out / "model.ckpt"), **history}


def cmd_eval(cfg: RunConfig) -> dict:
    if not cfg.checkpoint:
        raise ConfigError("eval needs a checkpoint")
    model, _ = load_checkpoint(cfg.checkpoint)
    data = load_flow(cfg)
    if data.shape[0] != model.config.n_sectors:
        raise ConfigError(f"checkpoint expects {model.config.n_sectors} sectors, data has {data.shape[0]}")
    m, sn, ha, period = evaluate(model, data, cfg.train_config().split, cfg.horizons)
    doc = {"horizons": sorted(m), "model": m, "seasonal_naive": sn, "historical_average": ha, "period": period}
    _write_json(_out(cfg) / "eval.json", doc)
    return doc


def _simulate_one(scfg: ScenarioConfig, out: str) -> dict:
    predictor = None
    if scfg.policy == "pred-enhanced" and scfg.predictor == "model":
        if not scfg.checkpoint_path:
            raise ConfigError("the model predictor needs a checkpoint")
        model, _ = load_checkpoint(scfg.checkpoint_path)
        predictor = model_predictor(model)
    trace, report = run_scenario(generate_scenario(scfg), predictor)
    report["config"] = scfg.to_dict()
    tag = f"{scfg.policy}-h{scfg.horizon if scfg.policy == 'pred-enhanced' else 0}-s{scfg.seed}"
    run_dir = Path(out) / tag
    run_dir.mkdir(parents=True, exist_ok=True)
    write_trace(trace, run_dir / "trace.jsonl")
    write_report(report, run_dir / "report.json")
    return {"run": tag, **{k: report[k] for k in REPORT_METRICS}}


def cmd_simulate(cfg: RunConfig, policy: str | None = None, horizon: int | None = None) -> dict:
    base = cfg.scenario_config(policy=policy, horizon=horizon)
    configs = [dataclasses.replace(base, seed=base.seed + r) for r in range(cfg.repeats)]
    out = str(_out(cfg))
    if cfg.workers > 1 and len(configs) > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            runs = list(pool.map(_simulate_one, configs, [out] * len(configs)))
    else:
        runs = [_simulate_one(c, out) for c in configs]
    return {"runs": runs}


def aggregate_reports(paths) -> dict:
    """Mean ERR/MPT/MTR per (policy, horizon) over every report found under ``paths``."""
    files: list[Path] = []
    for p in map(Path, paths):
        if p.is_dir():
            files.extend(sorted(p.rglob("report.json")))
        elif p.exists():
            files.append(p)
        else:
            raise ConfigError(f"report path does not exist: {p}")
    if not files:
        raise ConfigError("no report.json files found")
    groups: dict[tuple[str, int], list[dict]] = {}
    for f in files:
        doc = json.loads(f.read_text(encoding="utf-8"))
        groups.setdefault((doc["policy"], int(doc["horizon"])), []).append(doc)
    rows = []
    for (policy, horizon), docs in sorted(groups.items()):
        row = {"policy": policy, "horizon": horizon, "repeats": len(docs)}
        for k in REPORT_METRICS:
            vals = [d[k] for d in docs if d.get(k) is not None]
            row[k] = float(np.mean(vals)) if vals else None
        rows.append(row)
    return {"rows": rows, "files": [str(f) for f in files]}


def markdown_table(summary: dict) -> str:
    head = "| policy | horizon (frames) | repeats | ERR | MPT (min) | MTR |\n|---|---|---|---|---|---|\n"
    fmt = lambda v, spec: "n/a" if v is None else format(v, spec)  # noqa: E731
    body = "".join(
        f"| {r['policy']} | {r['horizon'] or '-'} | {r['repeats']} | {fmt(r['ERR'], '.2%')} | "
        f"{fmt(r['MPT'], '.3f')} | {fmt(r['MTR'], '.2%')} |\n"
        for r in summary["rows"]
    )
    return head + body


def cmd_report(paths, output_dir: str) -> dict:
    summary = aggregate_reports(paths)
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "summary.json", summary)
    (out / "summary.md").write_text(markdown_table(summary), encoding="utf-8")
    return summary


# ---------------------------------------------------------------- argument parsing


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="presched", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="YAML run config")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--out", help="output directory")

    p = sub.add_parser("ingest", help="canonicalize a task-flow record file")
    p.add_argument("src")
    p.add_argument("dst")
    p = sub.add_parser("make-data", help="write a synthetic periodic task-flow file")
    common(p)
    p.add_argument("dst")
    common(sub.add_parser("train", help="train a forecaster and write a checkpoint"))
    p = sub.add_parser("eval", help="test-split metrics per horizon against baselines")
    common(p)
    p.add_argument("--checkpoint")
    p = sub.add_parser("simulate", help="run warehouse scenarios and write traces and reports")
    common(p)
    p.add_argument("--policy", choices=("classic", "pred-enhanced", "greedy"))
    p.add_argument("--horizon", type=int)
    p.add_argument("--repeats", type=int)
    p.add_argument("--workers", type=int)
    p = sub.add_parser("report", help="average simulation reports into tables")
    p.add_argument("paths", nargs="+")
    p.add_argument("--out", default="report")
    return parser


def run(argv=None) -> dict:
    args = build_parser().parse_args(argv)
    if args.command == "ingest":
        return cmd_ingest(args.src, args.dst)
    if args.command == "report":
        return cmd_report(args.paths, args.out)
    cfg = load_run_config(args.config, args.seed, args.out)
    if args.command == "make-data":
        return cmd_make_data(cfg, args.dst)
    if args.command == "train":
        return cmd_train(cfg)
    if args.command == "eval":
        if args.checkpoint:
            cfg = dataclasses.replace(cfg, checkpoint=args.checkpoint)
        return cmd_eval(cfg)
    for key in ("repeats", "workers"):
        if getattr(args, key) is not None:
            cfg = dataclasses.replace(cfg, **{key: getattr(args, key)})
    return cmd_simulate(cfg, args.policy, args.horizon)


def main(argv=None) -> int:
    command = None
    try:
        argv = sys.argv[1:] if argv is None else list(argv)
        command = next((a for a in argv if not a.startswith("-")), None)
        result = run(argv)
    except SystemExit as exc:  # argparse usage errors
        return int(exc.code or 0) and EXIT_USAGE
    except (ValueError, OSError, KeyError, TypeError, AssertionError, yaml.YAMLError) as exc:
        record = {"error": type(exc).__name__, "message": str(exc), "command": command}
        if getattr(exc, "line", None) is not None:
            record["line"] = exc.line
        sys.stderr.write(json.dumps(record, sort_keys=True) + "\n")
        return EXIT_FAILURE
    sys.stdout.write(dumps_report({"command": command, "status": "ok", "result": result}))
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
