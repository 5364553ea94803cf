from presched.simulator.engine import (
    InvariantViolation,
    World,
    history_predictor,
    init_world,
    model_predictor,
    oracle_predictor,
    run_scenario,
    step,
)
from presched.simulator.metrics import (
    SimTrace,
    TaskRecord,
    compute_err,
    compute_mpt,
    compute_mpt_eq10,
    compute_mtr,
    dumps_report,
    metrics_report,
    write_report,
    write_trace,
)
from presched.simulator.scenario import (
    LARGE_MAP,
    SMALL_MAP,
    Scenario,
    ScenarioConfig,
    ScheduledTask,
    generate_map,
    generate_scenario,
    load_schedule,
    save_schedule,
)

__all__ = [
    "LARGE_MAP",
    "SMALL_MAP",
    "InvariantViolation",
    "Scenario",
    "ScenarioConfig",
    "ScheduledTask",
    "SimTrace",
    "TaskRecord",
    "World",
    "compute_err",
    "compute_mpt",
    "compute_mpt_eq10",
    "compute_mtr",
    "dumps_report",
    "generate_map",
    "generate_scenario",
    "history_predictor",
    "init_world",
    "load_schedule",
    "metrics_report",
    "model_predictor",
    "oracle_predictor",
    "run_scenario",
    "save_schedule",
    "step",
    "write_report",
    "write_trace",
]
