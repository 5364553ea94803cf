"""Task-flow datasets: synthetic periodic demand and the CSV record format.

The record format is one ``frame,sector,count`` line per nonzero cell::

    # n_sectors=3 n_frames=2
    frame,sector,count
    0,1,4
    1,0,2

The comment line declares the tensor extent; without it the extent is
inferred from the largest indices seen. Records must be grouped by frame in
nondecreasing order. Absent cells read as zero.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from presched.warehouse import TaskFlowTensor

_HEADER = re.compile(r"#\s*n_sectors\s*=\s*(\d+)\s+n_frames\s*=\s*(\d+)")


class TaskFlowParseError(ValueError):
    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


@dataclass
class PeriodicFlowSpec:
    """Per-sector rates ``base * (1 + amplitude * sin(2 pi (t + phase) / period))``."""

    n_sectors: int = 10
    n_frames: int = 5000
    periods: tuple[int, ...] = (24,)
    base_rate: float = 2.0
    amplitude: float = 0.8
    noise: float = 0.1


def periodic_rates(spec: PeriodicFlowSpec, rng: np.random.Generator) -> np.ndarray:
    """Nonnegative ``(sectors, frames)`` intensity with planted periods."""
    t = np.arange(spec.n_frames, dtype=np.float64)
    base = spec.base_rate * rng.uniform(0.5, 1.5, spec.n_sectors)
    shape = np.zeros((spec.n_sectors, spec.n_frames))
    for k, period in enumerate(spec.periods):
        phase = rng.uniform(0.0, period, spec.n_sectors)
        weight = 1.0 / (k + 1)
        shape += weight * np.sin(2.0 * np.pi * (t[None, :] + phase[:, None]) / period)
    shape /= sum(1.0 / (k + 1) for k in range(len(spec.periods)))
    jitter = spec.noise * rng.normal(size=(spec.n_sectors, spec.n_frames))
    return np.maximum(base[:, None] * (1.0 + spec.amplitude * shape + jitter), 0.0)


def synthetic_taskflow(spec: PeriodicFlowSpec, rng: np.random.Generator) -> TaskFlowTensor:
    """Poisson counts drawn from :func:`periodic_rates`."""
    rates = periodic_rates(spec, rng)
    return TaskFlowTensor(rng.poisson(rates).astype(np.float64)[:, :, None])


def ingest_taskflow(path, n_sectors: int | None = None, n_frames: int | None = None) -> TaskFlowTensor:
    """Read a ``frame,sector,count`` record file into a dense tensor."""
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    records: list[tuple[int, int, int, float]] = []
    seen: set[tuple[int, int]] = set()
    last_frame = -1
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            m = _HEADER.match(line)
            if m:
                n_sectors = int(m.group(1)) if n_sectors is None else n_sectors
                n_frames = int(m.group(2)) if n_frames is None else n_frames
            continue
        if line.replace(" ", "") == "frame,sector,count":
            continue
        parts = [p.strip() for p in line.split(",")]
        if len(parts) != 3:
            raise TaskFlowParseError(lineno, f"expected 3 fields, got {len(parts)}")
        try:
            frame, sector = int(parts[0]), int(parts[1])
            count = float(parts[2])
        except ValueError as exc:
            raise TaskFlowParseError(lineno, f"unparsable record {line!r}") from exc
        if frame < 0:
            raise TaskFlowParseError(lineno, f"negative frame {frame}")
        if frame < last_frame:
            raise TaskFlowParseError(lineno, f"frame {frame} after frame {last_frame}; records must be in frame order")
        if not np.isfinite(count) or count < 0:
            raise TaskFlowParseError(lineno, f"invalid count {parts[2]}")
        if sector < 0 or (n_sectors is not None and sector >= n_sectors):
            raise TaskFlowParseError(lineno, f"unknown sector {sector}")
        if n_frames is not None and frame >= n_frames:
            raise TaskFlowParseError(lineno, f"frame {frame} beyond declared {n_frames} frames")
        if (frame, sector) in seen:
            raise TaskFlowParseError(lineno, f"duplicate record for frame {frame}, sector {sector}")
        seen.add((frame, sector))
        last_frame = frame
        records.append((lineno, frame, sector, count))
    if n_sectors is None:
        n_sectors = 1 + max((r[2] for r in records), default=-1)
    if n_frames is None:
        n_frames = 1 + max((r[1] for r in records), default=-1)
    if n_sectors < 1 or n_frames < 1:
        raise TaskFlowParseError(0, "empty task flow with no declared extent")
    data = np.zeros((n_sectors, n_frames, 1))
    for _, frame, sector, count in records:
        data[sector, frame, 0] = count
    return TaskFlowTensor(data)


def _fmt(v: float) -> str:
    return str(int(v)) if float(v).is_integer() else repr(float(v))


def export_taskflow(flow: TaskFlowTensor, path) -> None:
    """Write the canonical record file (header, nonzero cells in frame-sector order)."""
    if flow.data.shape[2] != 1:
        raise ValueError("the record format holds a single feature")
    lines = [f"# n_sectors={flow.n_sectors} n_frames={flow.n_frames}", "frame,sector,count"]
    counts = flow.data[:, :, 0]
    for frame in range(flow.n_frames):
        for sector in np.flatnonzero(counts[:, frame]):
            lines.append(f"{frame},{int(sector)},{_fmt(counts[sector, frame])}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
