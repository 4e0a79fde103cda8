"""Two-level tabular RL that learns to compose subtasks in labeled gridworlds."""

from ._validation import LayoutError, UsageError
from .baselines import Baseline, BaselineConfig
from .envs import GridPos, LabeledGridEnv, build_env, list_tasks, load_task
from .trainer import ALCS, RunLog, TrainConfig, evaluate, train

__all__ = [
    "ALCS",
    "Baseline",
    "BaselineConfig",
    "GridPos",
    "LabeledGridEnv",
    "LayoutError",
    "RunLog",
    "TrainConfig",
    "UsageError",
    "build_env",
    "evaluate",
    "list_tasks",
    "load_task",
    "train",
]
