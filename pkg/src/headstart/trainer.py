"""Rehearsal training of the classifier head under compute and storage budgets.

The backbone is frozen: gradients stop at the stored feature vectors and only
the head weights move. Each task runs exactly ``iterations_per_task``
optimizer steps on 50/50 rehearsal batches, evaluates on a fixed cadence,
and admits its samples to the replay buffer after training completes. All
randomness is derived from the config seed and task id, never from the
initialization strategy, so runs that differ only in the initializer share
identical batch sequences.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field, replace

import numpy as np

from .datastore import (
    FeatureDataset,
    ReplayBuffer,
    Task,
    TaskSchedule,
    add_bias_column,
    sample_rehearsal_batch,
)
from .exceptions import (
    BadMagicError,
    DataFormatError,
    DimensionMismatchError,
    NonFiniteGradientError,
)
from .evaluation import EvalRecord, split_eval
from .initializers import ClassifierHead, InitStrategy, expand_head, least_square_weights, random_weights
from .losses import LossKind, batch_loss_and_grad
from .stats import ClassStatistics, compute_stats, ls_deviation, nc1, nc2, nc3, nc4

HEAD_MAGIC = b"NCHD"
HEAD_VERSION = 1

# Substream tags so every consumer of randomness gets an independent stream.
_RNG_BUFFER = 1
_RNG_REHEARSAL = 2
_RNG_PRETRAIN_INIT = 3
_RNG_PRETRAIN_BATCH = 4
_RNG_EXPAND = 5


@dataclass(frozen=True)
class TrainConfig:
    """Budgets, optimizer recipe, loss, and initializer for a continual run."""

    iterations_per_task: int
    buffer_capacity: int
    batch_size: int = 256
    learning_rate: float = 1e-3
    weight_decay: float = 0.05
    loss: LossKind = field(default_factory=LossKind)
    init: InitStrategy = field(default_factory=InitStrategy)
    eval_every: int = 50
    seed: int = 0
    track_ls_deviation: bool = True

    def __post_init__(self) -> None:
        if self.iterations_per_task < 0:
            raise ValueError("iterations_per_task must be non-negative")
        if self.batch_size < 2 or self.batch_size % 2:
            raise ValueError("batch_size must be even and positive")
        if self.eval_every < 1:
            raise ValueError("eval_every must be at least 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.buffer_capacity < 0:
            raise ValueError("buffer_capacity must be non-negative")


@dataclass(frozen=True)
class OptimizerState:
    """Adam moment estimates; decay hyperparameters ride along."""

    first_moment: np.ndarray
    second_moment: np.ndarray
    step_count: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    @classmethod
    def zeros_like(cls, weights: np.ndarray) -> "OptimizerState":
        return cls(np.zeros_like(weights), np.zeros_like(weights))


def adamw_step(
    weights: np.ndarray,
    grad: np.ndarray,
    state: OptimizerState,
    lr: float,
    wd: float,
) -> tuple[np.ndarray, OptimizerState]:
    """One decoupled-weight-decay Adam step; returns new weights and state.

    Decay first (weights *= 1 - lr*wd, covering the bias column too), then
    the bias-corrected moment update.
    """
    if grad.shape != weights.shape or state.first_moment.shape != weights.shape:
        raise DimensionMismatchError("weights, grad, and state shapes must match")
    if not np.all(np.isfinite(grad)):
        raise NonFiniteGradientError("gradient contains NaN or Inf")
    step = state.step_count + 1
    m = state.beta1 * state.first_moment + (1 - state.beta1) * grad
    v = state.beta2 * state.second_moment + (1 - state.beta2) * grad**2
    m_hat = m / (1 - state.beta1**step)
    v_hat = v / (1 - state.beta2**step)
    new_weights = weights * (1 - lr * wd) - lr * m_hat / (np.sqrt(v_hat) + state.epsilon)
    return new_weights, replace(state, first_moment=m, second_moment=v, step_count=step)


@dataclass
class EvalContext:
    """Evaluation-side inputs shared by every task of a run.

    ``extended`` caches the bias-extended float64 training features and
    ``dense_labels`` the introduction-order labels. ``boundary_stats`` (with
    ``ls_lambda``) enables per-checkpoint deviation tracking for the task
    being trained.
    """

    test_dataset: FeatureDataset
    schedule: TaskSchedule
    extended: np.ndarray
    dense_labels: np.ndarray
    boundary_stats: ClassStatistics | None = None
    ls_lambda: float = 0.05

    @classmethod
    def build(
        cls,
        train_dataset: FeatureDataset,
        test_dataset: FeatureDataset,
        schedule: TaskSchedule,
    ) -> "EvalContext":
        return cls(
            test_dataset=test_dataset,
            schedule=schedule,
            extended=add_bias_column(train_dataset.features),
            dense_labels=schedule.remap_labels(train_dataset.labels),
        )


@dataclass
class TaskRunResult:
    head: ClassifierHead
    buffer: ReplayBuffer
    records: list[EvalRecord]
    ls_deviations: list[float]
    steps_taken: int


def train_task(
    head: ClassifierHead,
    task: Task,
    buffer: ReplayBuffer,
    dataset: FeatureDataset,
    config: TrainConfig,
    eval_ctx: EvalContext,
) -> TaskRunResult:
    """Run one task's rehearsal updates; the head must already be expanded.

    Emits an iteration-0 record (probe batch loss, no step) and a record
    every ``eval_every`` steps; admits the task's samples to the buffer
    after the final step. Exactly ``iterations_per_task`` optimizer steps.
    """
    rng = np.random.default_rng([config.seed, _RNG_REHEARSAL, task.task_id])
    weights = head.weights
    state = OptimizerState.zeros_like(weights)
    records: list[EvalRecord] = []
    deviations: list[float] = []
    window: list[float] = []

    def checkpoint(iteration: int, batch_loss: float) -> None:
        record = split_eval(
            ClassifierHead(weights), eval_ctx.test_dataset, eval_ctx.schedule,
            task.task_id, config.loss,
        )
        record.iteration = iteration
        record.global_step = state.step_count
        record.loss_new = batch_loss
        record.buffer_size = buffer.num_stored
        records.append(record)
        if config.track_ls_deviation and eval_ctx.boundary_stats is not None:
            deviations.append(
                ls_deviation(weights, eval_ctx.boundary_stats, eval_ctx.ls_lambda)
            )

    def batch_loss_grad() -> tuple[float, np.ndarray]:
        batch = sample_rehearsal_batch(
            buffer, task.sample_indices, config.batch_size, rng
        )
        z = eval_ctx.extended[batch]
        labels = eval_ctx.dense_labels[batch]
        loss, grads = batch_loss_and_grad(z @ weights.T, labels, config.loss)
        return loss, grads.T @ z / len(batch)

    probe_loss, _ = batch_loss_grad()
    checkpoint(0, probe_loss)
    for iteration in range(1, config.iterations_per_task + 1):
        loss, grad = batch_loss_grad()
        weights, state = adamw_step(
            weights, grad, state, config.learning_rate, config.weight_decay
        )
        window.append(loss)
        if iteration % config.eval_every == 0:
            checkpoint(iteration, float(np.mean(window)))
            window = []
    buffer.update(task.class_ids, task.sample_indices, dataset.labels)
    return TaskRunResult(
        head=ClassifierHead(weights),
        buffer=buffer,
        records=records,
        ls_deviations=deviations,
        steps_taken=state.step_count,
    )


@dataclass
class BoundaryDiagnostics:
    """Head geometry right after expanding for a task, before any step."""

    task_id: int
    ls_dev: float
    nc1: float
    nc2: float
    nc3: float
    nc4: float
    checkpoint_ls_devs: list[float] = field(default_factory=list)


@dataclass
class ExperimentResult:
    records: list[EvalRecord]
    boundaries: list[BoundaryDiagnostics]
    steps_per_task: dict[int, int]
    buffer_size_per_task: dict[int, int]
    head: ClassifierHead


def pretrain_head(
    dataset: FeatureDataset,
    schedule: TaskSchedule,
    config: TrainConfig,
    method: str = "train",
) -> ClassifierHead:
    """Produce the task-1 head: trained with the configured loss, or the
    closed-form fast path fit on task-1 features."""
    task = schedule.tasks[0]
    extended = add_bias_column(dataset.features)
    dense = schedule.remap_labels(dataset.labels)
    dim = extended.shape[1]
    num_classes = len(task.class_ids)
    if method == "least_square":
        stats = compute_stats(extended[task.sample_indices], dense[task.sample_indices])
        return ClassifierHead(least_square_weights(stats, config.init.lam))
    if method != "train":
        raise ValueError(f"unknown pretraining method {method!r}")
    weights = random_weights(
        num_classes, dim, np.random.default_rng([config.seed, _RNG_PRETRAIN_INIT])
    )
    state = OptimizerState.zeros_like(weights)
    rng = np.random.default_rng([config.seed, _RNG_PRETRAIN_BATCH])
    for _ in range(config.iterations_per_task):
        batch = rng.choice(task.sample_indices, size=config.batch_size, replace=True)
        z = extended[batch]
        _, grads = batch_loss_and_grad(z @ weights.T, dense[batch], config.loss)
        grad = grads.T @ z / len(batch)
        weights, state = adamw_step(
            weights, grad, state, config.learning_rate, config.weight_decay
        )
    return ClassifierHead(weights)


def run_continual(
    config: TrainConfig,
    train_dataset: FeatureDataset,
    test_dataset: FeatureDataset,
    schedule: TaskSchedule,
    pretrained_head: ClassifierHead,
) -> ExperimentResult:
    """Full incremental run: seed the buffer with task 1, then for each task
    expand the head, snapshot boundary diagnostics, train, and admit the
    task to the buffer."""
    if pretrained_head.class_count != len(schedule.pretrain_classes):
        raise DimensionMismatchError("pretrained head does not cover task-1 classes")
    ctx = EvalContext.build(train_dataset, test_dataset, schedule)
    task1 = schedule.tasks[0]
    buffer = ReplayBuffer(config.buffer_capacity, seed=[config.seed, _RNG_BUFFER])
    buffer.update(task1.class_ids, task1.sample_indices, train_dataset.labels)

    head = pretrained_head
    first = split_eval(head, test_dataset, schedule, 1, config.loss)
    first.buffer_size = buffer.num_stored
    records = [first]
    boundaries: list[BoundaryDiagnostics] = []
    steps_per_task: dict[int, int] = {1: 0}
    buffer_size_per_task: dict[int, int] = {1: buffer.num_stored}
    global_step = 0

    for task in schedule.tasks[1:]:
        stat_indices = np.concatenate([buffer.stored_indices(), task.sample_indices])
        stats = compute_stats(ctx.extended[stat_indices], ctx.dense_labels[stat_indices])
        start, stop = schedule.remapped_range(task.task_id)
        strategy = replace(
            config.init, seed=abs(hash((config.init.seed, _RNG_EXPAND, task.task_id)))
        ) if config.init.kind == "random" else config.init
        head = expand_head(head, np.arange(start, stop), strategy, stats)
        ctx.boundary_stats = stats
        ctx.ls_lambda = config.init.lam
        boundary = BoundaryDiagnostics(
            task_id=task.task_id,
            ls_dev=ls_deviation(head.weights, stats, config.init.lam),
            nc1=nc1(stats),
            nc2=nc2(head.linear),
            nc3=nc3(head.linear, stats),
            nc4=nc4(head.linear, head.bias, stats),
        )
        result = train_task(head, task, buffer, train_dataset, config, ctx)
        head, buffer = result.head, result.buffer
        for record in result.records:
            record.global_step += global_step
        global_step += result.steps_taken
        boundary.checkpoint_ls_devs = result.ls_deviations
        boundaries.append(boundary)
        records.extend(result.records)
        steps_per_task[task.task_id] = result.steps_taken
        buffer_size_per_task[task.task_id] = buffer.num_stored
    return ExperimentResult(records, boundaries, steps_per_task, buffer_size_per_task, head)


def save_head(head: ClassifierHead, path) -> None:
    """Write a head checkpoint (magic, version, C, dim, float64 rows)."""
    with open(path, "wb") as fh:
        fh.write(HEAD_MAGIC)
        fh.write(struct.pack("<I", HEAD_VERSION))
        fh.write(struct.pack("<II", head.class_count, head.dim))
        fh.write(head.weights.astype("<f8").tobytes())


def load_head(path) -> ClassifierHead:
    """Read a head checkpoint written by :func:`save_head`."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:4] != HEAD_MAGIC:
        raise BadMagicError(f"expected {HEAD_MAGIC!r}, got {raw[:4]!r}")
    (version,) = struct.unpack_from("<I", raw, 4)
    if version != HEAD_VERSION:
        raise DataFormatError(f"unsupported head version {version}")
    num_classes, dim = struct.unpack_from("<II", raw, 8)
    expected = 16 + num_classes * dim * 8
    if len(raw) != expected:
        raise DataFormatError("head payload size disagrees with header")
    weights = np.frombuffer(raw, dtype="<f8", count=num_classes * dim, offset=16)
    return ClassifierHead(weights.reshape(num_classes, dim).copy())
