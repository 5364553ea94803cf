"""Hybrid real/predicted task allocation on top of a Hungarian matcher."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from presched.warehouse import Roadmap

SENTINEL = 1e9
REAL, PREDICTED = "real", "predicted"
IDLE, TO_PICKUP, DELIVERING = "idle", "to_pickup", "delivering"
TASK_STATUSES = ("pending", "assigned", "executing", "done", "falsified", "expired", "absorbed")


@dataclass
class HybridTask:
    id: int
    kind: str
    location: int
    sector: int
    publish_frame: int
    horizon_frame: int | None = None
    uncertainty: float = 0.0
    status: str = "pending"
    drop: int | None = None

    def __post_init__(self) -> None:
        if self.kind not in (REAL, PREDICTED):
            raise ValueError(f"unknown task kind {self.kind!r}")
        if self.kind == REAL and self.horizon_frame is not None:
            raise ValueError("real tasks carry no horizon frame")
        if self.kind == PREDICTED and self.horizon_frame is None:
            raise ValueError("predicted tasks need a horizon frame")
        if self.status not in TASK_STATUSES:
            raise ValueError(f"unknown task status {self.status!r}")

    @property
    def is_real(self) -> bool:
        return self.kind == REAL


@dataclass
class RobotState:
    id: int
    position: int
    phase: str = IDLE
    task: int | None = None
    cost: float = 0.0

    def __post_init__(self) -> None:
        if (self.phase != IDLE) != (self.task is not None):
            raise ValueError(f"robot {self.id}: phase {self.phase} inconsistent with task {self.task}")


@dataclass
class AssignmentRound:
    matches: list[tuple[int, int]] = field(default_factory=list)
    reassigned: list[int] = field(default_factory=list)
    costs: dict[tuple[int, int], float] = field(default_factory=dict)
    cost_matrix: np.ndarray | None = None

    def __post_init__(self) -> None:
        robots = [r for r, _ in self.matches]
        tasks = [t for _, t in self.matches]
        if len(set(robots)) != len(robots) or len(set(tasks)) != len(tasks):
            raise ValueError("a robot or task appears in two matches")

    @property
    def empty(self) -> bool:
        return not self.matches


@dataclass
class CostWeights:
    alpha: float = 1.0
    beta: float = 1.0
    sigma_w: float = 1.0
    normalize: bool = True

    def __post_init__(self) -> None:
        if min(self.alpha, self.beta, self.sigma_w) < 0:
            raise ValueError("cost weights must be nonnegative")


# ---------------------------------------------------------------- hungarian


def _solve_wide(c: np.ndarray) -> np.ndarray:
    """Shortest augmenting path assignment for ``n <= m``; returns the column per row."""
    n, m = c.shape
    inf = np.inf
    u = np.zeros(n + 1)
    v = np.zeros(m + 1)
    p = np.zeros(m + 1, dtype=np.int64)  # p[j] = row (1-based) assigned to column j
    way = np.zeros(m + 1, dtype=np.int64)
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        minv = np.full(m + 1, inf)
        used = np.zeros(m + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = p[j0]
            cur = c[i0 - 1] - u[i0] - v[1:]
            free = ~used[1:]
            better = free & (cur < minv[1:])
            minv[1:][better] = cur[better]
            way[1:][better] = j0
            masked = np.where(free, minv[1:], inf)
            j1 = int(np.argmin(masked)) + 1  # lowest index on ties
            delta = masked[j1 - 1]
            u[p[used]] += delta
            v[used] -= delta
            minv[1:][free] -= delta
            j0 = j1
            if p[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1
    col = np.full(n, -1, dtype=np.int64)
    for j in range(1, m + 1):
        if p[j]:
            col[p[j] - 1] = j - 1
    return col


def hungarian(cost) -> list[tuple[int, int]]:
    """Minimum-cost assignment of ``min(n, m)`` (row, column) pairs, sorted by row.

    Entries must be finite; encode forbidden pairs with a large sentinel.
    Ties between optimal assignments are settled deterministically by the
    lowest-index scan order of the augmenting-path search.
    """
    c = np.asarray(cost, dtype=np.float64)
    if c.size == 0:
        return []
    if c.ndim != 2:
        raise ValueError("cost must be a 2-D matrix")
    if not np.all(np.isfinite(c)):
        raise ValueError("cost entries must be finite; use a sentinel for forbidden pairs")
    n, m = c.shape
    if n <= m:
        col = _solve_wide(c)
        return [(i, int(col[i])) for i in range(n)]
    row = _solve_wide(c.T)
    return sorted((int(row[j]), j) for j in range(m))


def assignment_cost(cost, pairs: Sequence[tuple[int, int]]) -> float:
    c = np.asarray(cost, dtype=np.float64)
    return float(sum(c[i, j] for i, j in pairs))


# ---------------------------------------------------------------- costs


def uncertainty(con: float, enscore: float, mu: float = 0.5) -> float:
    """``mu * Con - (1 - mu) * EnScore``; may be negative."""
    if not 0.0 <= mu <= 1.0:
        raise ValueError("mu must lie in [0, 1]")
    return mu * con - (1.0 - mu) * enscore


def build_cost_matrix(
    robots: Sequence[RobotState],
    tasks: Sequence[HybridTask],
    eta: Mapping[int, float],
    weights: CostWeights,
    roadmap: Roadmap,
) -> np.ndarray:
    """``(robots, tasks)`` matrix ``alpha*u + beta*d + sigma_w*eta``.

    ``alpha`` is dropped for real tasks. ``d`` is the shortest-path distance
    from the robot to the task location; unreachable pairs get the sentinel.
    With ``weights.normalize`` the distance is divided by the largest finite
    distance of the round and ``u`` is mapped from ``[-1, 1]`` to ``[0, 1]``.
    """
    n, m = len(robots), len(tasks)
    d = np.empty((n, m))
    for j, t in enumerate(tasks):
        to_t = roadmap.distances_to(t.location)
        for i, r in enumerate(robots):
            d[i, j] = to_t[roadmap.index[r.position]]
    reachable = np.isfinite(d)
    u = np.array([t.uncertainty if not t.is_real else 0.0 for t in tasks])
    e = np.array([eta.get(t.sector, 1.0) for t in tasks])
    if weights.normalize:
        top = d[reachable].max(initial=0.0)
        if top > 0:
            d = np.where(reachable, d / top, d)
        u = (u + 1.0) / 2.0
    alpha = np.array([0.0 if t.is_real else weights.alpha for t in tasks])
    c = (alpha * u)[None, :] + weights.beta * np.where(reachable, d, 0.0) + (weights.sigma_w * e)[None, :]
    return np.where(reachable, c, SENTINEL)


# ---------------------------------------------------------------- completion rate


class CompletionTracker:
    """Per-sector, per-frame counts of published and completed real tasks."""

    def __init__(self, sectors: Sequence[int]):
        self.sectors = tuple(sectors)
        self.published: dict[int, dict[int, int]] = {s: {} for s in self.sectors}
        self.completed: dict[int, dict[int, int]] = {s: {} for s in self.sectors}

    def _check(self, sector: int) -> None:
        if sector not in self.published:
            raise ValueError(f"unknown sector {sector}")

    def publish(self, sector: int, frame: int, count: int = 1) -> None:
        self._check(sector)
        self.published[sector][frame] = self.published[sector].get(frame, 0) + count

    def complete(self, sector: int, frame: int, count: int = 1) -> None:
        self._check(sector)
        self.completed[sector][frame] = self.completed[sector].get(frame, 0) + count


def sector_completion_rate(tracker: CompletionTracker, sector: int, frame: int, window: int) -> float:
    """Completed over published tasks in ``(frame - window, frame]``; 1 when nothing was published."""
    if window < 1:
        raise ValueError("window must cover at least one frame")
    tracker._check(sector)
    lo = frame - window
    pub = sum(c for f, c in tracker.published[sector].items() if lo < f <= frame)
    done = sum(c for f, c in tracker.completed[sector].items() if lo < f <= frame)
    if pub == 0:
        return 1.0
    return float(min(1.0, done / pub))


# ---------------------------------------------------------------- rounds


def allocate_round(
    robots: Sequence[RobotState],
    tasks: Mapping[int, HybridTask],
    roadmap: Roadmap,
    eta: Mapping[int, float],
    weights: CostWeights,
    frame: int,
    delta_switch: float = 0.05,
    allow_switch: bool = True,
) -> AssignmentRound:
    """One allocation round over a snapshot of the world.

    Idle robots are matched against every pending task with the Hungarian
    solver. Robots heading to a real pickup may then trade it for a still
    unmatched predicted task whose cost (same round, same normalisation) is
    lower than their current one by the relative margin ``delta_switch``.
    Robots holding predicted tasks are left alone. Matches made only of
    sentinel entries are dropped. Nothing is mutated.
    """
    pending = [t for t in tasks.values() if t.status == "pending" and _live(t, frame)]
    idle = [r for r in robots if r.phase == IDLE]
    switchable = []
    if allow_switch and any(not t.is_real for t in pending):
        switchable = [
            r for r in robots if r.phase == TO_PICKUP and r.task is not None and tasks[r.task].is_real
        ]
    if not pending or not (idle or switchable):
        return AssignmentRound()
    pool = idle + switchable
    columns = pending + [tasks[r.task] for r in switchable]
    c = build_cost_matrix(pool, columns, eta, weights, roadmap)
    out = AssignmentRound(cost_matrix=c[:, : len(pending)].copy())
    taken: set[int] = set()
    if idle:
        for i, j in hungarian(c[: len(idle), : len(pending)]):
            if c[i, j] >= SENTINEL:
                continue
            out.matches.append((idle[i].id, pending[j].id))
            out.costs[(idle[i].id, pending[j].id)] = float(c[i, j])
            taken.add(j)
    for k, r in enumerate(switchable):
        i = len(idle) + k
        current = c[i, len(pending) + k]
        best_j, best = -1, np.inf
        for j, t in enumerate(pending):
            if j in taken or t.is_real:
                continue
            if c[i, j] < best:
                best_j, best = j, c[i, j]
        if best_j >= 0 and best < SENTINEL and best < (1.0 - delta_switch) * current:
            out.matches.append((r.id, pending[best_j].id))
            out.costs[(r.id, pending[best_j].id)] = float(best)
            out.reassigned.append(r.id)
            taken.add(best_j)
    return out


def _live(t: HybridTask, frame: int) -> bool:
    return t.is_real or t.horizon_frame >= frame


def greedy_round(
    robots: Sequence[RobotState], queue: Sequence[HybridTask], roadmap: Roadmap
) -> AssignmentRound:
    """First-come tasks each take the nearest idle robot (lowest id on ties)."""
    idle = [r for r in robots if r.phase == IDLE]
    out = AssignmentRound()
    used: set[int] = set()
    for t in queue:
        if len(used) == len(idle):
            break
        to_t = roadmap.distances_to(t.location)
        best, best_d = None, np.inf
        for r in idle:
            if r.id in used:
                continue
            d = to_t[roadmap.index[r.position]]
            if d < best_d:
                best, best_d = r, d
        if best is None:
            continue
        used.add(best.id)
        out.matches.append((best.id, t.id))
        out.costs[(best.id, t.id)] = float(best_d)
    return out
