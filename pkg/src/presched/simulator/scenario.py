"""Synthetic warehouse maps and periodic task schedules."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.sparse.csgraph import connected_components

from presched.rng import substream
from presched.warehouse import Edge, Roadmap, load_map

SMALL_MAP = (2745, 9129, 6, 3601)
LARGE_MAP = (10155, 34616, 29, 12793)
POLICIES = ("classic", "pred-enhanced", "greedy")
PREDICTORS = ("oracle", "model", "history")


@dataclass
class ScenarioConfig:
    """Everything one simulation run depends on.

    ``shape`` is ``(nodes, arcs, sectors, tasks)``. ``n_frames`` of 0 picks
    the schedule length that loads the fleet to roughly ``utilization``.
    """

    shape: tuple[int, int, int, int] = SMALL_MAP
    robots: int = 30
    horizon: int = 10
    frame_length: float = 30.0
    speed: float = 1.0
    spacing: float = 5.0
    policy: str = "classic"
    predictor: str = "oracle"
    seed: int = 0
    period: int = 40
    amplitude: float = 0.8
    noise: float = 0.1
    utilization: float = 0.55
    n_frames: int = 0
    n_depots: int = 0
    alpha: float = 1.0
    beta: float = 1.0
    sigma_w: float = 1.0
    mu: float = 0.5
    delta_switch: float = 0.05
    tau_false: float = 0.5
    max_pred_per_sector: int = 30
    allow_switch: bool = True
    drain_limit: int = 100000
    map_path: str | None = None
    schedule_path: str | None = None
    checkpoint_path: str | None = None

    def __post_init__(self) -> None:
        self.shape = tuple(int(s) for s in self.shape)
        if len(self.shape) != 4:
            raise ValueError("shape must be (nodes, arcs, sectors, tasks)")
        if self.robots < 1:
            raise ValueError("robot count must be >= 1")
        if self.policy not in POLICIES:
            raise ValueError(f"unknown policy {self.policy!r}; choose from {POLICIES}")
        if self.predictor not in PREDICTORS:
            raise ValueError(f"unknown predictor {self.predictor!r}; choose from {PREDICTORS}")
        if self.policy == "pred-enhanced" and self.horizon < 1:
            raise ValueError("pred-enhanced needs a horizon >= 1")
        if self.frame_length <= 0 or self.speed <= 0 or self.spacing <= 0:
            raise ValueError("frame length, speed and spacing must be positive")
        if self.max_pred_per_sector < 0:
            raise ValueError("max_pred_per_sector must be >= 0")
        if not 0.0 < self.utilization <= 1.0:
            raise ValueError("utilization must lie in (0, 1]")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["shape"] = list(self.shape)
        return d


@dataclass(frozen=True)
class ScheduledTask:
    frame: int
    sector: int
    vertex: int
    drop: int


@dataclass
class Scenario:
    config: ScenarioConfig
    roadmap: Roadmap
    schedule: list[ScheduledTask] = field(default_factory=list)
    n_frames: int = 0

    def counts(self, n_frames: int | None = None) -> np.ndarray:
        """Per-(sector, frame) real task counts, shape ``(sectors, frames)``."""
        n_frames = self.n_frames if n_frames is None else n_frames
        sectors = self.roadmap.sectors
        pos = {s: i for i, s in enumerate(sectors)}
        out = np.zeros((len(sectors), max(n_frames, 1)))
        for t in self.schedule:
            if t.frame < out.shape[1]:
                out[pos[t.sector], t.frame] += 1
        return out


def _split_even(total: int, parts: int) -> list[int]:
    base, extra = divmod(total, parts)
    return [base + (1 if i < extra else 0) for i in range(parts)]


def generate_map(nodes: int, arcs: int, sectors: int, spacing: float = 5.0, n_depots: int = 0) -> Roadmap:
    """Truncated grid with exactly ``arcs`` directed arcs, split into block sectors.

    Vertices fill a ``ceil(sqrt(nodes))``-wide grid row by row. All links
    start two-way; horizontal links are then made one-way (alternating
    direction per row) until the arc count matches. Row 0 holds the depots.
    """
    if sectors < 1 or nodes < sectors:
        raise ValueError("invalid-parameter: need sectors >= 1 and nodes >= sectors")
    if nodes < 2:
        raise ValueError("invalid-parameter: need at least two vertices")
    cols = math.ceil(math.sqrt(nodes))
    rows = math.ceil(nodes / cols)
    pos = lambda v: divmod(v, cols)  # noqa: E731  (row, col)
    horizontal, vertical = [], []
    for v in range(nodes):
        r, c = pos(v)
        if c + 1 < cols and v + 1 < nodes:
            horizontal.append((v, v + 1))
        if v + cols < nodes:
            vertical.append((v, v + cols))
    full = 2 * (len(horizontal) + len(vertical))
    to_convert = full - arcs
    if to_convert < 0 or to_convert > len(horizontal):
        lo, hi = full - len(horizontal), full
        raise ValueError(f"invalid-parameter: {arcs} arcs infeasible for {nodes} nodes (need {lo}..{hi})")
    edges = []
    for k, (a, b) in enumerate(horizontal):
        if k < to_convert:
            r = pos(a)[0]
            src, dst = (a, b) if r % 2 == 0 else (b, a)
            edges.append(Edge(src, dst, spacing, True, "aisle"))
        else:
            edges.append(Edge(a, b, spacing, False, "road"))
    edges.extend(Edge(a, b, spacing, False, "cross") for a, b in vertical)

    bands = max(1, min(rows, round(math.sqrt(sectors * rows / cols))))
    per_band = _split_even(sectors, bands)
    band_rows = _split_even(rows, bands)
    row_band, acc = [], 0
    for b, h in enumerate(band_rows):
        row_band.extend([b] * h)
        acc += h
    first_id = np.cumsum([0] + per_band)
    sector_of, coords = {}, {}
    for v in range(nodes):
        r, c = pos(v)
        b = row_band[r]
        k = per_band[b]
        slot = min(c * k // cols, k - 1)
        sector_of[v] = int(first_id[b] + slot)
        coords[v] = (c * spacing, r * spacing)
    used = set(sector_of.values())
    if len(used) != sectors:
        raise ValueError("invalid-parameter: grid too small for the requested sectors")
    types = {s: ("storage" if s % 2 == 0 else "picking") for s in range(sectors)}
    n_depots = n_depots or max(1, cols // 8)
    depot_cols = sorted({int(round(x)) for x in np.linspace(0, cols - 1, n_depots + 2)[1:-1]}) or [0]
    depots = [c for c in depot_cols if c < nodes]
    roadmap = Roadmap(range(nodes), edges, sector_of, coords, types, depots)
    n_comp, _ = connected_components(roadmap.graph, directed=True, connection="strong")
    if n_comp != 1:
        raise ValueError("invalid-parameter: generated roadmap is not strongly connected")
    return roadmap


def _mean_trip(roadmap: Roadmap, rng: np.random.Generator, samples: int = 24) -> float:
    """Rough mean of (pickup approach + delivery) path length for a random task."""
    verts = np.asarray(roadmap.vertices)
    src = rng.choice(verts, size=min(samples, len(verts)), replace=False)
    dst = rng.choice(verts, size=min(samples, len(verts)), replace=False)
    approach = np.mean([roadmap.distances_to(int(b))[roadmap.index[int(a)]] for a, b in zip(src, dst)])
    deliver = np.mean([roadmap.distances_to(int(roadmap.depots[i % len(roadmap.depots)]))[roadmap.index[int(a)]]
                       for i, a in enumerate(src)])
    return float(approach + deliver)


def periodic_cell_weights(n_sectors: int, n_frames: int, period: int, amplitude: float, noise: float, rng) -> np.ndarray:
    t = np.arange(n_frames)
    base = rng.uniform(0.5, 1.5, n_sectors)
    phase = rng.uniform(0.0, period, n_sectors)
    shape = 1.0 + amplitude * np.sin(2.0 * np.pi * (t[None, :] + phase[:, None]) / period)
    jitter = 1.0 + noise * rng.normal(size=(n_sectors, n_frames))
    return np.maximum(base[:, None] * shape * jitter, 0.0)


def generate_schedule(
    roadmap: Roadmap,
    n_tasks: int,
    n_frames: int,
    period: int,
    amplitude: float,
    noise: float,
    rng: np.random.Generator,
) -> list[ScheduledTask]:
    """Exactly ``n_tasks`` tasks spread over (frame, sector) cells by periodic weights."""
    sectors = roadmap.sectors
    w = periodic_cell_weights(len(sectors), n_frames, period, amplitude, noise, rng)
    p = (w / w.sum()).ravel()
    counts = rng.multinomial(n_tasks, p).reshape(len(sectors), n_frames)
    depots = roadmap.depots or roadmap.vertices[:1]
    out = []
    for f in range(n_frames):
        for i, s in enumerate(sectors):
            members = roadmap.members[s]
            for _ in range(int(counts[i, f])):
                v = int(members[rng.integers(len(members))])
                d = int(depots[rng.integers(len(depots))])
                out.append(ScheduledTask(f, s, v, d))
    return out


def load_schedule(path, roadmap: Roadmap) -> list[ScheduledTask]:
    """Read ``frame,vertex[,drop]`` records; the sector comes from the map.

    A missing drop column cycles through the map's depots in record order.
    """
    depots = roadmap.depots or roadmap.vertices[:1]
    out = []
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#") or line.lower().startswith("frame"):
            continue
        parts = [p.strip() for p in line.split(",")]
        try:
            nums = [int(p) for p in parts]
        except ValueError:
            raise ValueError(f"schedule line {lineno}: expected integers, got {line!r}") from None
        if len(nums) not in (2, 3) or nums[0] < 0:
            raise ValueError(f"schedule line {lineno}: expected frame,vertex[,drop] with frame >= 0")
        frame, vertex = nums[0], nums[1]
        drop = nums[2] if len(nums) == 3 else int(depots[len(out) % len(depots)])
        for v in (vertex, drop):
            if v not in roadmap.index:
                raise ValueError(f"schedule line {lineno}: unknown vertex {v}")
        out.append(ScheduledTask(frame, roadmap.sector_of[vertex], vertex, drop))
    out.sort(key=lambda t: t.frame)
    return out


def save_schedule(schedule: list[ScheduledTask], path) -> None:
    lines = ["frame,vertex,drop"] + [f"{t.frame},{t.vertex},{t.drop}" for t in schedule]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def generate_scenario(config: ScenarioConfig) -> Scenario:
    """Map plus schedule for ``config``; identical for identical seeds.

    ``map_path`` and ``schedule_path`` replace the generated map and
    schedule when set.
    """
    nodes, arcs, n_sectors, n_tasks = config.shape
    if n_tasks < 0:
        raise ValueError("invalid-parameter: negative task count")
    if config.map_path:
        roadmap = load_map(config.map_path)
    else:
        roadmap = generate_map(nodes, arcs, n_sectors, config.spacing, config.n_depots)
    if config.schedule_path:
        schedule = load_schedule(config.schedule_path, roadmap)
        n_frames = max(config.n_frames, max((t.frame for t in schedule), default=-1) + 1)
        return Scenario(config, roadmap, schedule, n_frames)
    rng = substream(config.seed, "schedule")
    n_frames = config.n_frames
    if n_frames <= 0:
        per_task = _mean_trip(roadmap, substream(config.seed, "trip-estimate")) / (config.speed * config.frame_length)
        n_frames = max(1, math.ceil(n_tasks * (per_task + 1.0) / (config.robots * config.utilization)))
    schedule = generate_schedule(roadmap, n_tasks, n_frames, config.period, config.amplitude, config.noise, rng)
    return Scenario(config, roadmap, schedule, n_frames)
