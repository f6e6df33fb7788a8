"""Two-stage training, checkpoints and evaluation."""
from .checkpoint import Checkpoint
from .config import DEFAULT_LR, ConfigError, TrainConfig
from .evaluate import Evaluation, default_views, evaluate_net, mean_metric, reconstruct
from .loops import (FreezeViolation, NumericAbort, TrainResult, build_teacher, evaluate, stage1_losses,
                    stage2_losses, train_stage1, train_stage2)
from .optim import OptimizerState, adamw_step, global_norm
from .rundir import LOSS_HEADER, RunDir, read_losses
from .views import spread_views, window

__all__ = [
    "Checkpoint", "ConfigError", "DEFAULT_LR", "Evaluation", "FreezeViolation", "LOSS_HEADER", "NumericAbort",
    "OptimizerState", "RunDir", "TrainConfig", "TrainResult", "adamw_step", "build_teacher", "default_views",
    "evaluate", "evaluate_net", "global_norm", "mean_metric", "read_losses", "reconstruct", "spread_views",
    "stage1_losses", "stage2_losses", "train_stage1", "train_stage2", "window",
]
