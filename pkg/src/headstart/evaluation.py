"""Continual-evaluation metrics: subset accuracies, averages, efficiency gain."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .datastore import FeatureDataset, TaskSchedule, add_bias_column
from .exceptions import EmptyInputError, GridMismatchError
from .initializers import ClassifierHead
from .losses import LossKind, batch_loss_and_grad


@dataclass
class EvalRecord:
    """One checkpoint of the continual run.

    ``acc_pre`` covers the pretraining classes, ``acc_new`` the current
    task's classes, ``acc_old`` everything learned before the current task
    (pretraining classes plus past incremental tasks; absent while the
    pretraining task itself is current), and ``acc_all`` every class
    encountered so far. ``loss_new`` is the training-batch loss averaged
    since the previous checkpoint; ``loss_new_test`` is the same loss
    measured on the current task's test samples.
    """

    task_id: int
    iteration: int
    global_step: int
    acc_pre: float
    acc_new: float
    acc_old: float | None
    acc_all: float
    loss_new: float
    loss_new_test: float
    buffer_size: int = 0


@dataclass
class EvalLog:
    """Checkpoint records in (task, iteration) order plus a config fingerprint."""

    records: list[EvalRecord] = field(default_factory=list)
    config_fingerprint: str = ""

    def __post_init__(self) -> None:
        keys = [(r.task_id, r.iteration) for r in self.records]
        if any(b <= a for a, b in zip(keys, keys[1:])):
            raise ValueError("records must be strictly increasing in (task, iteration)")

    def task_ids(self) -> list[int]:
        return sorted({r.task_id for r in self.records})

    def task_records(self, task_id: int) -> list[EvalRecord]:
        return [r for r in self.records if r.task_id == task_id]


def top1_accuracy(head: ClassifierHead, features, labels, class_mask=None) -> float:
    """Percentage of samples whose argmax logit matches the label.

    ``class_mask`` selects which samples to evaluate (by label); the argmax
    always runs over every head class. Ties break toward the lowest index.
    """
    features = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if class_mask is not None:
        keep = np.isin(labels, np.asarray(class_mask, dtype=np.int64))
        features, labels = features[keep], labels[keep]
    if len(labels) == 0:
        raise EmptyInputError("empty evaluation set")
    predictions = np.argmax(head.logits(add_bias_column(features)), axis=1)
    return 100.0 * float((predictions == labels).mean())


def average_accuracy(log: EvalLog, field_name: str = "acc_all") -> float:
    """Unweighted mean of one accuracy field over all records carrying it."""
    values = [getattr(r, field_name) for r in log.records]
    values = [v for v in values if v is not None]
    if not values:
        raise EmptyInputError(f"no records with {field_name}")
    return float(np.mean(values))


def split_eval(
    head: ClassifierHead,
    test_dataset: FeatureDataset,
    schedule: TaskSchedule,
    current_task_id: int,
    loss: LossKind,
) -> EvalRecord:
    """Accuracies over the pre/new/old/all splits plus the new-task test loss.

    Works in the schedule's dense (introduction-order) label space and
    considers only test samples of classes encountered through the current
    task. ``loss_new`` is initialized to the test-side value; the training
    loop overwrites it with the training-batch running mean.
    """
    dense = schedule.remap_labels(test_dataset.labels)
    seen = schedule.classes_through(current_task_id)
    start, stop = schedule.remapped_range(current_task_id)
    keep = (dense >= 0) & (dense < seen)
    features = np.asarray(test_dataset.features[keep], dtype=np.float64)
    labels = dense[keep]
    if len(labels) == 0:
        raise EmptyInputError("test split has no samples of encountered classes")
    extended = add_bias_column(features)
    predictions = np.argmax(head.logits(extended), axis=1)
    hits = predictions == labels

    pretrain = labels < len(schedule.pretrain_classes)
    new = (labels >= start) & (labels < stop)
    old = labels < start

    def subset_acc(mask: np.ndarray) -> float:
        if not mask.any():
            raise EmptyInputError("empty evaluation subset")
        return 100.0 * float(hits[mask].mean())

    new_logits = head.logits(extended[new])
    loss_new_test, _ = batch_loss_and_grad(new_logits, labels[new], loss)
    return EvalRecord(
        task_id=current_task_id,
        iteration=0,
        global_step=0,
        acc_pre=subset_acc(pretrain),
        acc_new=subset_acc(new),
        acc_old=subset_acc(old) if old.any() else None,
        acc_all=subset_acc(np.ones_like(hits, dtype=bool)),
        loss_new=loss_new_test,
        loss_new_test=loss_new_test,
    )


@dataclass(frozen=True)
class TaskGain:
    """Speedup for one task: reference vs test iterations to the threshold."""

    task_id: int
    gain: float
    threshold: float
    reference_iteration: int
    test_iteration: int
    threshold_unreachable: bool = False


@dataclass(frozen=True)
class EfficiencyGain:
    per_task: tuple[TaskGain, ...]
    mean: float


def _first_crossing(records: list[EvalRecord], threshold: float) -> int | None:
    """Iteration of the first checkpoint at or above threshold; 0 maps to 1."""
    for record in records:
        if record.acc_new >= threshold:
            return max(record.iteration, 1)
    return None


def efficiency_gain(reference_log: EvalLog, test_log: EvalLog) -> EfficiencyGain:
    """Per-task and mean speedup of a data-driven run over a reference run.

    For each incremental task the threshold is 95% of the reference run's
    best new-task accuracy; the gain is the ratio of first-crossing
    iterations (reference over test). A test run that never reaches the
    threshold is flagged and scored as if it crossed at the compute budget.
    """
    ref_tasks = [t for t in reference_log.task_ids() if t >= 2]
    test_tasks = [t for t in test_log.task_ids() if t >= 2]
    if ref_tasks != test_tasks or not ref_tasks:
        raise GridMismatchError(f"task grids differ: {ref_tasks} vs {test_tasks}")
    gains = []
    for task_id in ref_tasks:
        ref = reference_log.task_records(task_id)
        test = test_log.task_records(task_id)
        if [r.iteration for r in ref] != [r.iteration for r in test]:
            raise GridMismatchError(f"checkpoint grids differ in task {task_id}")
        threshold = 0.95 * max(r.acc_new for r in ref)
        ref_iter = _first_crossing(ref, threshold)
        test_iter = _first_crossing(test, threshold)
        unreachable = test_iter is None
        if unreachable:
            test_iter = max(max(r.iteration for r in test), 1)
        gains.append(
            TaskGain(
                task_id=task_id,
                gain=ref_iter / test_iter,
                threshold=threshold,
                reference_iteration=ref_iter,
                test_iteration=test_iter,
                threshold_unreachable=unreachable,
            )
        )
    return EfficiencyGain(tuple(gains), float(np.mean([g.gain for g in gains])))
