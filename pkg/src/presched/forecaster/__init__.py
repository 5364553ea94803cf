from presched.forecaster.checkpoint import load_checkpoint, save_checkpoint
from presched.forecaster.data import PeriodicFlowSpec, TaskFlowParseError, export_taskflow, ingest_taskflow
from presched.forecaster.experiment import SkillReport, evaluate, forecast_skill, ring_sector_graph, train_and_evaluate
from presched.forecaster.metrics import eval_metrics, horizon_metrics
from presched.forecaster.model import GraphContext, ModelConfig, tdtgcn_forward
from presched.forecaster.training import ForecastModel, Prediction, TrainConfig, new_model, predict, train

__all__ = [
    "ForecastModel",
    "GraphContext",
    "ModelConfig",
    "PeriodicFlowSpec",
    "Prediction",
    "SkillReport",
    "TaskFlowParseError",
    "TrainConfig",
    "eval_metrics",
    "evaluate",
    "export_taskflow",
    "forecast_skill",
    "horizon_metrics",
    "ingest_taskflow",
    "load_checkpoint",
    "new_model",
    "predict",
    "ring_sector_graph",
    "save_checkpoint",
    "tdtgcn_forward",
    "train",
    "train_and_evaluate",
]
