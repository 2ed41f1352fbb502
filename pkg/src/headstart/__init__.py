"""Continual learning for linear classifier heads over frozen features.

Provides closed-form (ridge) and class-mean initialization for newly
encountered classes, rehearsal training under compute/storage budgets,
and the diagnostic suite: least-square deviation, feature-collapse
metrics, continual-evaluation accuracies, and efficiency gain.
"""

from .datastore import (
    FeatureDataset,
    ReplayBuffer,
    Task,
    TaskSchedule,
    add_bias_column,
    buffer_update,
    load_features,
    partition_tasks,
    sample_rehearsal_batch,
    save_features,
)
from .evaluation import (
    EfficiencyGain,
    EvalLog,
    EvalRecord,
    average_accuracy,
    efficiency_gain,
    split_eval,
    top1_accuracy,
)
from .initializers import (
    ClassifierHead,
    InitStrategy,
    class_mean_weights,
    direct_ridge_weights,
    expand_head,
    least_square_weights,
    random_weights,
)
from .losses import (
    LossKind,
    batch_loss_and_grad,
    ce_loss_and_grad,
    loss_and_grad,
    mse_loss_and_grad,
    squentropy_loss_and_grad,
)
from .numerics import log_sum_exp, spd_solve, sym_pinv
from .stats import ClassStatistics, compute_stats, ls_deviation, nc1, nc2, nc3, nc4
from .synth import SynthSpec, gen_simplex_etf_means, gen_stream
from .trainer import (
    BoundaryDiagnostics,
    EvalContext,
    ExperimentResult,
    OptimizerState,
    TrainConfig,
    adamw_step,
    load_head,
    pretrain_head,
    run_continual,
    save_head,
    train_task,
)

__version__ = "0.1.0"

__all__ = [
    "BoundaryDiagnostics",
    "ClassStatistics",
    "ClassifierHead",
    "EfficiencyGain",
    "EvalContext",
    "EvalLog",
    "EvalRecord",
    "ExperimentResult",
    "FeatureDataset",
    "InitStrategy",
    "LossKind",
    "OptimizerState",
    "ReplayBuffer",
    "SynthSpec",
    "Task",
    "TaskSchedule",
    "TrainConfig",
    "adamw_step",
    "add_bias_column",
    "average_accuracy",
    "batch_loss_and_grad",
    "buffer_update",
    "ce_loss_and_grad",
    "class_mean_weights",
    "compute_stats",
    "direct_ridge_weights",
    "efficiency_gain",
    "expand_head",
    "gen_simplex_etf_means",
    "gen_stream",
    "least_square_weights",
    "load_features",
    "load_head",
    "log_sum_exp",
    "loss_and_grad",
    "ls_deviation",
    "mse_loss_and_grad",
    "nc1",
    "nc2",
    "nc3",
    "nc4",
    "partition_tasks",
    "pretrain_head",
    "random_weights",
    "run_continual",
    "sample_rehearsal_batch",
    "save_features",
    "save_head",
    "spd_solve",
    "split_eval",
    "squentropy_loss_and_grad",
    "sym_pinv",
    "top1_accuracy",
    "train_task",
]
