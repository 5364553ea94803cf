"""Run trace and the empty-running, pickup-time and misguided-trip metrics."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

TRACE_SCHEMA = "presched-trace/1"
METRICS_SCHEMA = "presched-metrics/1"
UNDEFINED = float("nan")


@dataclass
class TaskRecord:
    id: int
    sector: int
    publish: int
    assigned: int | None = None
    pickup: int | None = None
    done: int | None = None
    heading_frames: int = 0
    absorbed: bool = False


@dataclass
class SimTrace:
    """Per-frame, per-robot flags plus task lifecycle records.

    ``tp``/``td`` are ``(frames, robots)`` 0/1 arrays (heading-or-idle and
    delivering). ``working`` marks robot-frames that count toward the
    empty-running rate; ``None`` means every robot-frame counts.
    """

    frame_length: float
    tp: np.ndarray
    td: np.ndarray
    distance: np.ndarray
    working: np.ndarray | None = None
    positions: np.ndarray | None = None
    task_ids: np.ndarray | None = None
    tasks: list[TaskRecord] = field(default_factory=list)
    misled: list[tuple[int, int, float]] = field(default_factory=list)  # (robot, predicted task, meters)
    events: list[tuple[int, str, int, int]] = field(default_factory=list)  # (frame, kind, task, robot)

    def __post_init__(self) -> None:
        self.tp = np.asarray(self.tp, dtype=np.int8).reshape(-1, np.shape(self.tp)[-1] if np.ndim(self.tp) else 1)
        self.td = np.asarray(self.td, dtype=np.int8).reshape(self.tp.shape)
        self.distance = np.asarray(self.distance, dtype=np.float64).reshape(self.tp.shape)
        if self.working is not None:
            self.working = np.asarray(self.working, dtype=bool).reshape(self.tp.shape)

    @classmethod
    def from_flags(cls, tp, td=None, frame_length: float = 30.0, distance=None, **kw) -> "SimTrace":
        """Single-robot (1-D) or multi-robot (2-D) hand trace."""
        tp = np.asarray(tp)
        if tp.ndim == 1:
            tp = tp[:, None]
        td = 1 - tp if td is None else np.asarray(td).reshape(tp.shape)
        distance = np.zeros(tp.shape) if distance is None else np.asarray(distance, dtype=np.float64).reshape(tp.shape)
        return cls(frame_length, tp, td, distance, **kw)

    @property
    def n_frames(self) -> int:
        return self.tp.shape[0]

    @property
    def n_robots(self) -> int:
        return self.tp.shape[1]

    @property
    def total_distance(self) -> float:
        return float(self.distance.sum())


def check_phase_partition(trace: SimTrace) -> None:
    if not np.all(trace.tp + trace.td == 1):
        bad = np.argwhere(trace.tp + trace.td != 1)[0]
        raise AssertionError(f"phase flags not a partition at frame {bad[0]}, robot {bad[1]}")
    if np.any(trace.distance < 0):
        raise AssertionError("negative distance increment")


def compute_err(trace: SimTrace, all_frames: bool = False) -> float:
    """Heading-or-idle share of robot-frames.

    Only robot-frames marked ``working`` count unless ``all_frames`` is set or
    the trace marks none, in which case every robot-frame counts. Empty
    traces give NaN.
    """
    if trace.tp.size == 0:
        return UNDEFINED
    mask = np.ones(trace.tp.shape, dtype=bool)
    if not all_frames and trace.working is not None and trace.working.any():
        mask = trace.working
    tp = trace.tp[mask].sum()
    td = trace.td[mask].sum()
    return float(tp / (tp + td)) if tp + td else UNDEFINED


def compute_mpt(trace: SimTrace) -> float:
    """Mean heading time per completed task, in minutes (NaN without completions)."""
    done = [t for t in trace.tasks if t.done is not None]
    if not done:
        return UNDEFINED
    return float(np.mean([t.heading_frames for t in done]) * trace.frame_length / 60.0)


def compute_mpt_eq10(trace: SimTrace) -> float:
    """Heading-or-idle minutes per robot summed over the run, averaged over robots."""
    if trace.tp.size == 0:
        return UNDEFINED
    return float(trace.tp.sum(axis=0).mean() * trace.frame_length / 60.0)


def compute_mtr(trace: SimTrace) -> float:
    """Misled distance over total distance, fleet-wide; 0 without movement."""
    total = trace.total_distance
    if total <= 0:
        return 0.0
    return float(min(1.0, sum(m for _, _, m in trace.misled) / total))


def metrics_report(trace: SimTrace, extra: dict | None = None) -> dict:
    done = sum(t.done is not None for t in trace.tasks)
    report = {
        "schema": METRICS_SCHEMA,
        "ERR": compute_err(trace),
        "ERR_all_frames": compute_err(trace, all_frames=True),
        "MPT": compute_mpt(trace),
        "mpt_eq10": compute_mpt_eq10(trace),
        "MTR": compute_mtr(trace),
        "frames": trace.n_frames,
        "robots": trace.n_robots,
        "tasks_published": len(trace.tasks),
        "tasks_completed": done,
        "tasks_absorbed": sum(t.absorbed for t in trace.tasks),
        "total_distance": trace.total_distance,
        "misled_distance": float(sum(m for _, _, m in trace.misled)),
    }
    report.update(extra or {})
    return report


def _jsonable(x):
    if isinstance(x, float) and not np.isfinite(x):
        return None
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.generic):
        return _jsonable(x.item())
    return x


def dumps_report(report: dict) -> str:
    """Canonical JSON text; NaN becomes null."""
    return json.dumps(_jsonable(report), sort_keys=True, indent=2) + "\n"


def write_report(report: dict, path) -> None:
    Path(path).write_text(dumps_report(report), encoding="utf-8")


PHASES = {(1, 0): "heading", (0, 1): "delivering"}


def write_trace(trace: SimTrace, path, phases: np.ndarray | None = None) -> None:
    """JSON lines: a schema header, then one record per (frame, robot)."""
    with Path(path).open("w", encoding="utf-8") as fh:
        header = {"schema": TRACE_SCHEMA, "frame_length": trace.frame_length, "robots": trace.n_robots,
                  "frames": trace.n_frames}
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for f in range(trace.n_frames):
            for r in range(trace.n_robots):
                rec = {
                    "frame": f,
                    "robot": r,
                    "phase": PHASES[(int(trace.tp[f, r]), int(trace.td[f, r]))] if phases is None else str(phases[f, r]),
                    "position": None if trace.positions is None else int(trace.positions[f, r]),
                    "task": None if trace.task_ids is None or trace.task_ids[f, r] < 0 else int(trace.task_ids[f, r]),
                    "distance": round(float(trace.distance[f, r]), 9),
                }
                if trace.working is not None:
                    rec["working"] = bool(trace.working[f, r])
                fh.write(json.dumps(rec, sort_keys=True) + "\n")
        for f, kind, task, robot in trace.events:
            fh.write(json.dumps({"event": kind, "frame": f, "task": task, "robot": robot}, sort_keys=True) + "\n")
