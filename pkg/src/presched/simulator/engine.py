"""Frame-stepped warehouse simulation with rolling prediction and hybrid allocation."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from presched.allocator import (
    DELIVERING,
    IDLE,
    PREDICTED,
    REAL,
    TO_PICKUP,
    CompletionTracker,
    CostWeights,
    HybridTask,
    RobotState,
    allocate_round,
    greedy_round,
    sector_completion_rate,
    uncertainty,
)
from presched.forecaster.metrics import dominant_period
from presched.forecaster.training import Prediction, make_prediction
from presched.simulator.metrics import SimTrace, TaskRecord, check_phase_partition, metrics_report
from presched.simulator.scenario import Scenario
from presched.warehouse import sector_center

Predictor = Callable[["World", int, int], Prediction]


class InvariantViolation(AssertionError):
    pass


@dataclass
class RobotExtra:
    carry: float = 0.0
    origin: int | None = None  # position when a predicted task was taken
    premove: float = 0.0  # meters driven while holding that prediction
    open_detour: tuple[int, int, float, int] | None = None  # (pred task, origin, premove, release point)


@dataclass
class World:
    scenario: Scenario
    robots: list[RobotState]
    extras: list[RobotExtra]
    centers: dict[int, int]
    frame: int = 0
    tasks: dict[int, HybridTask] = field(default_factory=dict)
    records: dict[int, TaskRecord] = field(default_factory=dict)
    observed: np.ndarray | None = None  # (sectors, frames) published real counts
    next_id: int = 0
    queue: list[int] = field(default_factory=list)
    tracker: CompletionTracker | None = None
    published_real: int = 0
    spawned_pred: int = 0
    by_frame: dict[int, list] = field(default_factory=dict)
    # per-frame logs
    tp: list = field(default_factory=list)
    td: list = field(default_factory=list)
    working: list = field(default_factory=list)
    dist: list = field(default_factory=list)
    pos_log: list = field(default_factory=list)
    task_log: list = field(default_factory=list)
    misled: list = field(default_factory=list)
    events: list = field(default_factory=list)
    eta_history: list = field(default_factory=list)

    @property
    def roadmap(self):
        return self.scenario.roadmap

    @property
    def config(self):
        return self.scenario.config

    def sector_index(self, s: int) -> int:
        return self.roadmap.sectors.index(s)


# ---------------------------------------------------------------- predictors


def oracle_predictor(world: World, frame: int, horizon: int) -> Prediction:
    """True future counts for frames ``frame+1 .. frame+horizon``."""
    n = len(world.roadmap.sectors)
    values = np.zeros((n, horizon, 1))
    for k in range(1, horizon + 1):
        for t in world.by_frame.get(frame + k, ()):
            values[world.sector_index(t.sector), k - 1, 0] += 1
    hist = world.observed[:, : frame + 1]
    return make_prediction(values, hist[:, :, None], 1.0, max(horizon, 1))


def history_predictor(world: World, frame: int, horizon: int) -> Prediction:
    """Seasonal average of the counts observed so far."""
    hist = world.observed[:, : frame + 1]
    n, t = hist.shape
    values = np.zeros((n, horizon, 1))
    if t >= 8:
        period = dominant_period(hist, fallback=t) if hist.sum() > 0 else t
        period = max(1, min(period, t))
        for k in range(1, horizon + 1):
            phase = (frame + k) % period
            cols = np.arange(phase, t, period)
            values[:, k - 1, 0] = hist[:, cols].mean(axis=1) if cols.size else hist.mean(axis=1)
    elif t > 0:
        values[:, :, 0] = hist.mean(axis=1, keepdims=True)
    nz = hist[hist > 0]
    tau = float(np.percentile(nz, 75)) if nz.size else 1.0
    return make_prediction(values, hist[:, :, None], tau, max(horizon, 1))


def model_predictor(model) -> Predictor:
    from presched.forecaster.training import predict

    def run(world: World, frame: int, horizon: int) -> Prediction:
        hist = world.observed[:, : frame + 1]
        need = model.config.input_window
        if hist.shape[1] < need:
            hist = np.concatenate([np.zeros((hist.shape[0], need - hist.shape[1])), hist], axis=1)
        return predict(model, hist[:, :, None], horizon)

    return run


# ---------------------------------------------------------------- world


def init_world(scenario: Scenario) -> World:
    cfg = scenario.config
    roadmap = scenario.roadmap
    if not roadmap.depots:
        raise ValueError("invalid-config: the map has no depots")
    starts = [roadmap.depots[i % len(roadmap.depots)] for i in range(cfg.robots)]
    robots = [RobotState(i, int(v)) for i, v in enumerate(starts)]
    centers = {s: sector_center(roadmap, s) for s in roadmap.sectors}
    horizon_pad = max(cfg.horizon, 1) + 1
    last = max((t.frame for t in scenario.schedule), default=-1)
    width = max(scenario.n_frames, last + 1) + horizon_pad + cfg.drain_limit
    world = World(
        scenario,
        robots,
        [RobotExtra() for _ in robots],
        centers,
        observed=np.zeros((len(roadmap.sectors), min(width, max(scenario.n_frames, last + 1) + 1))),
        tracker=CompletionTracker(roadmap.sectors),
    )
    for t in scenario.schedule:
        roadmap.check_vertex(t.vertex)
        roadmap.check_vertex(t.drop)
        world.by_frame.setdefault(t.frame, []).append(t)
    return world


def _new_task(world: World, **kw) -> HybridTask:
    t = HybridTask(id=world.next_id, **kw)
    world.tasks[t.id] = t
    world.next_id += 1
    return t


def _event(world: World, kind: str, task: int, robot: int = -1) -> None:
    world.events.append((world.frame, kind, task, robot))


def _release(world: World, robot: RobotState, reason: str) -> None:
    """Free a robot holding a predicted task and open its detour account."""
    ex = world.extras[robot.id]
    task = world.tasks[robot.task]
    ex.open_detour = (task.id, ex.origin, ex.premove, robot.position)
    ex.origin, ex.premove = None, 0.0
    task.status = reason
    _event(world, reason, task.id, robot.id)
    robot.phase, robot.task, robot.cost = IDLE, None, 0.0
    ex.carry = 0.0


def _close_detour(world: World, robot: RobotState, next_target: int | None) -> None:
    ex = world.extras[robot.id]
    if ex.open_detour is None:
        return
    task_id, origin, premove, release = ex.open_detour
    if next_target is None:
        misled = premove
    else:
        d = world.roadmap.distance
        misled = premove + d(release, next_target) - d(origin, next_target)
    world.misled.append((robot.id, task_id, max(0.0, float(misled))))
    ex.open_detour = None


def _assign(world: World, robot: RobotState, task: HybridTask, cost: float) -> None:
    ex = world.extras[robot.id]
    chained = task.kind == PREDICTED and ex.open_detour is not None
    if chained:
        # one detour spans a chain of predictions until a real task is taken
        _, origin, premove, _ = ex.open_detour
        ex.open_detour = None
    else:
        _close_detour(world, robot, task.location)
    if robot.task is not None:
        old = world.tasks[robot.task]
        old.status = "pending"
        _event(world, "unassigned", old.id, robot.id)
    robot.task, robot.phase, robot.cost = task.id, TO_PICKUP, cost
    task.status = "assigned"
    if chained:
        ex.origin, ex.premove = origin, premove
    elif task.kind == PREDICTED:
        ex.origin, ex.premove = robot.position, 0.0
    else:
        rec = world.records[task.id]
        rec.assigned = world.frame if rec.assigned is None else rec.assigned
    _event(world, "assigned", task.id, robot.id)


def _holder(world: World) -> dict[int, RobotState]:
    return {r.task: r for r in world.robots if r.task is not None}


def prediction_round(world: World, predictor: Predictor) -> None:
    cfg = world.config
    f, horizon = world.frame, cfg.horizon
    pred = predictor(world, f, horizon)
    values = pred.values.sum(axis=-1) if pred.values.ndim == 3 else pred.values
    holders = _holder(world)
    live: dict[tuple[int, int], list[HybridTask]] = {}
    for t in world.tasks.values():
        if t.kind == PREDICTED and t.status in ("pending", "assigned") and f < t.horizon_frame <= f + horizon:
            live.setdefault((t.sector, t.horizon_frame), []).append(t)
    for i, s in enumerate(world.roadmap.sectors):
        room = cfg.max_pred_per_sector
        for k in range(1, horizon + 1):
            h = f + k
            v = float(values[i, k - 1])
            existing = live.get((s, h), [])
            if v < cfg.tau_false:
                for t in existing:
                    if t.id in holders:
                        _release(world, holders[t.id], "falsified")
                    else:
                        t.status = "falsified"
                        _event(world, "falsified", t.id)
                continue
            held = sum(t.id in holders for t in existing)
            want = max(min(int(round(v)), room), held)
            spare = [t for t in existing if t.id not in holders]
            while len(existing) > want and spare:
                t = spare.pop()
                existing.remove(t)
                t.status = "falsified"
                _event(world, "falsified", t.id)
            room = max(0, room - len(existing))
            u = uncertainty(float(pred.confidence[i, k - 1]), pred.enscore, cfg.mu)
            for t in existing:
                t.uncertainty = u
            for _ in range(want - len(existing)):
                t = _new_task(world, kind=PREDICTED, location=world.centers[s], sector=s, publish_frame=f,
                              horizon_frame=h, uncertainty=u)
                world.spawned_pred += 1
                room = max(0, room - 1)
                _event(world, "predicted", t.id)


def publish(world: World) -> None:
    f = world.frame
    pred_mode = world.config.policy == "pred-enhanced"
    for st in world.by_frame.get(f, ()):
        t = _new_task(world, kind=REAL, location=st.vertex, sector=st.sector, publish_frame=f, drop=st.drop)
        world.records[t.id] = TaskRecord(t.id, st.sector, f)
        world.published_real += 1
        world.tracker.publish(st.sector, f)
        if f < world.observed.shape[1]:
            world.observed[world.sector_index(st.sector), f] += 1
        _event(world, "published", t.id)
        if world.config.policy == "greedy":
            world.queue.append(t.id)
        if pred_mode:
            _absorb(world, t)


def _absorb(world: World, real: HybridTask) -> None:
    """Serve a fresh real task from a robot already holding a prediction for its sector.

    The nearest such robot takes the real task. The prediction it gives up is
    the one for this frame when some robot holds it; that robot then inherits
    the absorbing robot's prediction, so no outstanding forecast is dropped.
    """
    f = world.frame
    holders = _holder(world)
    best, key, exact = None, None, None
    for pid, robot in holders.items():
        p = world.tasks[pid]
        if p.kind != PREDICTED or p.sector != real.sector:
            continue
        d = world.roadmap.distance(robot.position, real.location)
        k = (d, p.horizon_frame != f, abs(p.horizon_frame - f), robot.id)
        if key is None or k < key:
            best, key = robot, k
        ek = (abs(p.horizon_frame - f), p.horizon_frame, robot.id)
        if exact is None or ek < exact[0]:
            exact = (ek, robot)
    if best is not None:
        other = exact[1]
        if other is not best and world.tasks[other.task].horizon_frame == f:
            # hand the absorbing robot's later prediction to the exact-frame holder
            mine, theirs = best.task, other.task
            other.task = mine
            best.task = theirs
            ex_b, ex_o = world.extras[best.id], world.extras[other.id]
            ex_o.premove += ex_b.premove
            ex_b.premove = 0.0
            ex_o.origin = ex_o.origin if ex_o.origin is not None else ex_b.origin
            _event(world, "handover", mine, other.id)
        p = world.tasks[best.task]
        p.status = "absorbed"
        _event(world, "absorbed", p.id, best.id)
        ex = world.extras[best.id]
        ex.origin, ex.premove = None, 0.0
        best.task = None
        best.phase = IDLE
        _assign(world, best, real, key[0])
        world.records[real.id].absorbed = True
        return
    for t in world.tasks.values():
        if t.kind == PREDICTED and t.status == "pending" and t.sector == real.sector and t.horizon_frame == f:
            t.status = "absorbed"
            _event(world, "absorbed", t.id)
            return


def expire(world: World) -> None:
    f = world.frame
    holders = _holder(world)
    for t in world.tasks.values():
        if t.kind == PREDICTED and t.status in ("pending", "assigned") and t.horizon_frame <= f:
            if t.id in holders:
                _release(world, holders[t.id], "expired")
            else:
                t.status = "expired"
                _event(world, "expired", t.id)


def _weights(world: World) -> CostWeights:
    cfg = world.config
    if cfg.policy == "classic":
        return CostWeights(alpha=0.0, beta=1.0, sigma_w=0.0, normalize=False)
    return CostWeights(cfg.alpha, cfg.beta, cfg.sigma_w, normalize=True)


def allocate(world: World) -> None:
    cfg = world.config
    f = world.frame
    if cfg.policy == "greedy":
        queue = [world.tasks[i] for i in world.queue if world.tasks[i].status == "pending"]
        rnd = greedy_round(world.robots, queue, world.roadmap)
    else:
        window = max(cfg.horizon, 1)
        eta = {s: sector_completion_rate(world.tracker, s, f, window) for s in world.roadmap.sectors}
        if cfg.horizon and f % window == 0:
            world.eta_history.append([f] + [eta[s] for s in world.roadmap.sectors])
        rnd = allocate_round(
            world.robots, world.tasks, world.roadmap, eta, _weights(world), f,
            cfg.delta_switch, cfg.allow_switch and cfg.policy == "pred-enhanced",
        )
    for rid, tid in rnd.matches:
        _assign(world, world.robots[rid], world.tasks[tid], rnd.costs[(rid, tid)])
    if cfg.policy == "greedy":
        world.queue = [i for i in world.queue if world.tasks[i].status == "pending"]


def _pickup(world: World, robot: RobotState, task: HybridTask) -> None:
    robot.phase = DELIVERING
    task.status = "executing"
    world.records[task.id].pickup = world.frame
    _event(world, "pickup", task.id, robot.id)


def _deliver(world: World, robot: RobotState, task: HybridTask) -> None:
    task.status = "done"
    world.records[task.id].done = world.frame
    world.tracker.complete(task.sector, world.frame)
    _event(world, "done", task.id, robot.id)
    robot.phase, robot.task, robot.cost = IDLE, None, 0.0
    world.extras[robot.id].carry = 0.0


def resolve_arrivals(world: World) -> None:
    """Handle robots already standing on their pickup (or drop) vertex."""
    for r in world.robots:
        if r.task is None:
            continue
        t = world.tasks[r.task]
        if r.phase == TO_PICKUP and t.kind == REAL and r.position == t.location:
            _pickup(world, r, t)
        if r.phase == DELIVERING and r.position == t.drop:
            _deliver(world, r, t)


def record(world: World) -> None:
    backlog = any(t.kind == REAL and t.status == "pending" for t in world.tasks.values())
    tp, td, work, pos, held = [], [], [], [], []
    for r in world.robots:
        delivering = r.phase == DELIVERING
        tp.append(0 if delivering else 1)
        td.append(1 if delivering else 0)
        real = r.task is not None and world.tasks[r.task].kind == REAL
        work.append(real or backlog)
        pos.append(r.position)
        held.append(-1 if r.task is None else r.task)
        if real and r.phase == TO_PICKUP:
            world.records[r.task].heading_frames += 1
    world.tp.append(tp)
    world.td.append(td)
    world.working.append(work)
    world.pos_log.append(pos)
    world.task_log.append(held)


def move(world: World) -> None:
    cfg = world.config
    roadmap = world.roadmap
    moved = []
    for r in world.robots:
        ex = world.extras[r.id]
        travelled = 0.0
        if r.task is None:
            moved.append(0.0)
            continue
        budget = cfg.speed * cfg.frame_length + ex.carry
        ex.carry = 0.0
        while r.task is not None:
            t = world.tasks[r.task]
            target = t.location if r.phase == TO_PICKUP else t.drop
            if r.position == target:
                if r.phase == TO_PICKUP and t.kind == REAL:
                    _pickup(world, r, t)
                    continue
                if r.phase == DELIVERING:
                    _deliver(world, r, t)
                break  # waiting at a predicted location
            hop = roadmap.next_hop(r.position, target)
            if hop is None:
                raise InvariantViolation(f"robot {r.id} cannot reach vertex {target}")
            nxt, length = hop
            if length > budget + 1e-9:
                ex.carry = budget
                break
            budget -= length
            travelled += length
            if t.kind == PREDICTED:
                ex.premove += length
            r.position = nxt
        moved.append(travelled)
    world.dist.append(moved)


def check_invariants(world: World) -> None:
    held = [r.task for r in world.robots if r.task is not None]
    if len(held) != len(set(held)):
        raise InvariantViolation(f"frame {world.frame}: a task is held by two robots")
    for r in world.robots:
        if (r.phase != IDLE) != (r.task is not None):
            raise InvariantViolation(f"frame {world.frame}: robot {r.id} phase/task mismatch")
        if r.task is not None and world.tasks[r.task].status not in ("assigned", "executing"):
            raise InvariantViolation(f"frame {world.frame}: robot {r.id} holds a {world.tasks[r.task].status} task")
    status_real: dict[str, int] = {}
    status_pred: dict[str, int] = {}
    for t in world.tasks.values():
        bucket = status_real if t.kind == REAL else status_pred
        bucket[t.status] = bucket.get(t.status, 0) + 1
    real_total = sum(status_real.get(k, 0) for k in ("done", "pending", "assigned", "executing"))
    if real_total != world.published_real:
        raise InvariantViolation(f"frame {world.frame}: real task conservation broken {status_real}")
    pred_total = sum(status_pred.get(k, 0) for k in ("pending", "assigned", "falsified", "expired", "absorbed"))
    if pred_total != world.spawned_pred:
        raise InvariantViolation(f"frame {world.frame}: predicted task conservation broken {status_pred}")
    if len(world.tp[-1]) != len(world.robots) or any(a + b != 1 for a, b in zip(world.tp[-1], world.td[-1])):
        raise InvariantViolation(f"frame {world.frame}: phase flags are not a partition")


def step(world: World, predictor: Predictor | None = None) -> World:
    """Advance one frame in place (and return the world)."""
    cfg = world.config
    if cfg.policy == "pred-enhanced" and predictor is not None and world.frame % cfg.horizon == 0:
        prediction_round(world, predictor)
    publish(world)
    if cfg.policy == "pred-enhanced":
        expire(world)
    allocate(world)
    resolve_arrivals(world)
    record(world)
    move(world)
    check_invariants(world)
    world.frame += 1
    return world


def _unfinished(world: World) -> bool:
    return any(t.kind == REAL and t.status != "done" for t in world.tasks.values())


def build_trace(world: World) -> SimTrace:
    n = len(world.robots)
    shape = (len(world.tp), n)
    trace = SimTrace(
        world.config.frame_length,
        np.asarray(world.tp, dtype=np.int8).reshape(shape),
        np.asarray(world.td, dtype=np.int8).reshape(shape),
        np.asarray(world.dist, dtype=np.float64).reshape(shape),
        working=np.asarray(world.working, dtype=bool).reshape(shape),
        positions=np.asarray(world.pos_log, dtype=np.int64).reshape(shape),
        task_ids=np.asarray(world.task_log, dtype=np.int64).reshape(shape),
        tasks=[world.records[k] for k in sorted(world.records)],
        misled=list(world.misled),
        events=list(world.events),
    )
    check_phase_partition(trace)
    return trace


def run_scenario(scenario: Scenario, predictor: Predictor | None = None) -> tuple[SimTrace, dict]:
    """Simulate the schedule's frames, then until every published task is delivered.

    The pred-enhanced policy uses ``predictor`` (the oracle by default).
    """
    cfg = scenario.config
    world = init_world(scenario)
    if cfg.policy == "pred-enhanced" and predictor is None:
        predictor = {"oracle": oracle_predictor, "history": history_predictor}.get(cfg.predictor)
        if predictor is None:
            raise ValueError("invalid-config: the model predictor needs a loaded checkpoint")
    last = max(world.by_frame, default=-1)
    limit = max(last + 1, scenario.n_frames) + cfg.drain_limit
    while world.frame <= last or world.frame < scenario.n_frames or _unfinished(world):
        if world.frame >= limit:
            raise InvariantViolation(f"tasks still open after {limit} frames")
        step(world, predictor)
    for r in world.robots:
        _close_detour(world, r, None)
    trace = build_trace(world)
    extra = {
        "policy": cfg.policy,
        "horizon": cfg.horizon if cfg.policy == "pred-enhanced" else 0,
        "predictor": cfg.predictor if cfg.policy == "pred-enhanced" else None,
        "seed": cfg.seed,
        "shape": list(cfg.shape),
        "predicted_tasks": world.spawned_pred,
        "eta_history": world.eta_history,
    }
    return trace, metrics_report(trace, extra)
