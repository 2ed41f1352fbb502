"""Feature datasets, disjoint task schedules, and the class-balanced replay buffer."""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .exceptions import (
    BadMagicError,
    DataFormatError,
    DimensionMismatchError,
    EmptyInputError,
    InvalidLabelError,
    MissingClassError,
    NonFiniteValueError,
    NotEnoughClassesError,
)

FEATURE_MAGIC = b"NCFB"
FEATURE_VERSION = 1


def add_bias_column(features: np.ndarray) -> np.ndarray:
    """Append the constant-1 bias coordinate, promoting to float64."""
    features = np.asarray(features, dtype=np.float64)
    ones = np.ones((features.shape[0], 1))
    return np.hstack([features, ones])


@dataclass
class FeatureDataset:
    """Labeled feature vectors. Features are stored float32, labels int32.

    The bias coordinate is never stored; it is appended at use time via
    :func:`add_bias_column`. Labels must be the contiguous range 0..C-1
    with at least one sample per class.
    """

    features: np.ndarray
    labels: np.ndarray
    split: str = "train"

    def __post_init__(self) -> None:
        self.features = np.ascontiguousarray(self.features, dtype=np.float32)
        self.labels = np.ascontiguousarray(self.labels, dtype=np.int32)
        if self.features.ndim != 2:
            raise DimensionMismatchError("features must be a 2-D array")
        if self.labels.shape != (self.features.shape[0],):
            raise DimensionMismatchError(
                f"{self.labels.shape[0]} labels for {self.features.shape[0]} rows"
            )
        bad = ~np.isfinite(self.features).all(axis=1)
        if bad.any():
            raise NonFiniteValueError(f"non-finite feature at row {int(bad.argmax())}")
        if self.labels.size:
            if int(self.labels.min()) < 0:
                raise InvalidLabelError("negative class label")
            counts = np.bincount(self.labels)
            if (counts == 0).any():
                raise MissingClassError(
                    f"class {int((counts == 0).argmax())} has no samples"
                )

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    @property
    def num_samples(self) -> int:
        return self.features.shape[0]

    @property
    def num_classes(self) -> int:
        return int(self.labels.max()) + 1 if self.labels.size else 0


def save_features(dataset: FeatureDataset, path) -> None:
    """Write a dataset in the binary feature format (little-endian)."""
    with open(path, "wb") as fh:
        fh.write(FEATURE_MAGIC)
        fh.write(struct.pack("<I", FEATURE_VERSION))
        fh.write(struct.pack("<Q", dataset.num_samples))
        fh.write(struct.pack("<I", dataset.dim))
        fh.write(dataset.labels.astype("<i4").tobytes())
        fh.write(dataset.features.astype("<f4").tobytes())


def load_features(path, format: str = "binary", split: str = "train") -> FeatureDataset:
    """Load a dataset from the binary format or from label-first CSV rows."""
    if format == "binary":
        return _load_binary(path, split)
    if format == "csv":
        return _load_csv(path, split)
    raise ValueError(f"unknown format {format!r}")


def _load_binary(path, split: str) -> FeatureDataset:
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:4] != FEATURE_MAGIC:
        raise BadMagicError(f"expected {FEATURE_MAGIC!r}, got {raw[:4]!r}")
    if len(raw) < 20:
        raise DataFormatError("truncated header")
    (version,) = struct.unpack_from("<I", raw, 4)
    if version != FEATURE_VERSION:
        raise DataFormatError(f"unsupported version {version}")
    (n,) = struct.unpack_from("<Q", raw, 8)
    (dim,) = struct.unpack_from("<I", raw, 16)
    expected = 20 + n * 4 + n * dim * 4
    if len(raw) != expected:
        raise DimensionMismatchError(
            f"file holds {len(raw) - 20} payload bytes, header implies {expected - 20}"
        )
    labels = np.frombuffer(raw, dtype="<i4", count=n, offset=20)
    features = np.frombuffer(raw, dtype="<f4", count=n * dim, offset=20 + n * 4)
    return FeatureDataset(features.reshape(n, dim).copy(), labels.copy(), split)


def _load_csv(path, split: str) -> FeatureDataset:
    labels: list[int] = []
    rows: list[list[float]] = []
    dim = None
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh):
            line = line.strip()
            if not line:
                continue
            cells = line.split(",")
            if dim is None:
                dim = len(cells) - 1
                if dim < 1:
                    raise DataFormatError("csv rows need a label plus features")
            elif len(cells) - 1 != dim:
                raise DimensionMismatchError(
                    f"row {lineno} has {len(cells) - 1} features, expected {dim}"
                )
            try:
                labels.append(int(cells[0]))
                rows.append([float(c) for c in cells[1:]])
            except ValueError as exc:
                raise DataFormatError(f"row {lineno}: {exc}") from exc
    if dim is None:
        raise DataFormatError("empty csv file")
    return FeatureDataset(np.array(rows, dtype=np.float32), np.array(labels), split)


@dataclass(frozen=True)
class Task:
    """One task of the incremental stream: a set of classes and their samples."""

    task_id: int
    class_ids: np.ndarray
    sample_indices: np.ndarray


@dataclass(frozen=True)
class TaskSchedule:
    """Ordered disjoint tasks plus the class introduction order.

    Task 1 is the pretraining task. ``class_order`` maps dense position to
    original class id, in order of introduction; heads and statistics index
    classes by that dense position so expanding classifiers stay contiguous
    even when the stream permutes class ids.
    """

    tasks: tuple[Task, ...]
    class_order: np.ndarray

    @property
    def pretrain_classes(self) -> np.ndarray:
        return self.tasks[0].class_ids

    @property
    def num_scheduled_classes(self) -> int:
        return len(self.class_order)

    def remap_labels(self, labels: np.ndarray) -> np.ndarray:
        """Map original class ids to introduction order; unscheduled -> -1."""
        lookup = np.full(int(self.class_order.max()) + 1, -1, dtype=np.int64)
        lookup[self.class_order] = np.arange(len(self.class_order))
        labels = np.asarray(labels)
        out = np.full(labels.shape, -1, dtype=np.int64)
        known = labels <= self.class_order.max()
        out[known] = lookup[labels[known]]
        return out

    def remapped_range(self, task_id: int) -> tuple[int, int]:
        """Dense class-id interval [start, stop) introduced by a task."""
        start = 0
        for task in self.tasks:
            stop = start + len(task.class_ids)
            if task.task_id == task_id:
                return start, stop
            start = stop
        raise KeyError(f"no task {task_id} in schedule")

    def classes_through(self, task_id: int) -> int:
        """Number of dense classes encountered up to and including a task."""
        return self.remapped_range(task_id)[1]


def partition_tasks(
    dataset: FeatureDataset,
    pretrain_class_count: int,
    num_cl_tasks: int,
    classes_per_task: int,
    order_seed: int,
) -> TaskSchedule:
    """Split a dataset into a pretraining task plus disjoint incremental tasks.

    Task 1 takes the first ``pretrain_class_count`` class ids unchanged; the
    remaining ids are permuted by ``order_seed`` and chunked into
    ``num_cl_tasks`` groups of ``classes_per_task``. Classes beyond the
    schedule are left out entirely.
    """
    total = dataset.num_classes
    needed = pretrain_class_count + num_cl_tasks * classes_per_task
    if needed > total:
        raise NotEnoughClassesError(f"need {needed} classes, dataset has {total}")
    rng = np.random.default_rng(order_seed)
    rest = np.arange(pretrain_class_count, total)
    perm = rng.permutation(rest)
    order = [np.arange(pretrain_class_count, dtype=np.int64)]
    tasks = [_make_task(1, order[0], dataset)]
    for j in range(num_cl_tasks):
        ids = np.sort(perm[j * classes_per_task : (j + 1) * classes_per_task])
        ids = ids.astype(np.int64)
        order.append(ids)
        tasks.append(_make_task(j + 2, ids, dataset))
    return TaskSchedule(tuple(tasks), np.concatenate(order))


def _make_task(task_id: int, class_ids: np.ndarray, dataset: FeatureDataset) -> Task:
    member = np.isin(dataset.labels, class_ids)
    return Task(task_id, class_ids, np.flatnonzero(member).astype(np.int64))


class ReplayBuffer:
    """Class-balanced store of dataset sample indices, capped at a capacity.

    Stores indices, not copies: features are read-only for the lifetime of a
    run, so the capacity is a true sample count. Every update recomputes the
    per-class quota floor(capacity / classes seen) and rebalances by uniform
    down-sampling, so per-class counts never differ by more than one except
    for classes too small to fill their quota.
    """

    def __init__(self, capacity: int, seed=0):
        if capacity < 0:
            raise ValueError("capacity must be non-negative")
        self.capacity = int(capacity)
        self._rng = np.random.default_rng(seed)
        self._per_class: dict[int, np.ndarray] = {}

    @property
    def num_stored(self) -> int:
        return sum(len(v) for v in self._per_class.values())

    @property
    def classes(self) -> list[int]:
        return sorted(self._per_class)

    def class_counts(self) -> dict[int, int]:
        return {c: len(v) for c, v in sorted(self._per_class.items())}

    def stored_indices(self) -> np.ndarray:
        """All stored sample indices, grouped by class id (deterministic order)."""
        if not self._per_class:
            return np.empty(0, dtype=np.int64)
        return np.concatenate([self._per_class[c] for c in sorted(self._per_class)])

    def update(self, class_ids, sample_indices, labels) -> "ReplayBuffer":
        """Admit a finished task's samples and rebalance everything stored.

        ``sample_indices`` index into the dataset whose ``labels`` are given;
        only rows labeled with ``class_ids`` are considered.
        """
        class_ids = [int(c) for c in np.asarray(class_ids).ravel()]
        for c in class_ids:
            if c in self._per_class:
                raise ValueError(f"class {c} is already buffered")
        sample_indices = np.asarray(sample_indices, dtype=np.int64)
        labels = np.asarray(labels)
        quota = self.capacity // (len(self._per_class) + len(class_ids))
        for c in sorted(self._per_class):
            kept = self._per_class[c]
            if len(kept) > quota:
                pick = self._rng.choice(len(kept), size=quota, replace=False)
                self._per_class[c] = kept[np.sort(pick)]
        for c in sorted(class_ids):
            pool = sample_indices[labels[sample_indices] == c]
            if len(pool) > quota:
                pick = self._rng.choice(len(pool), size=quota, replace=False)
                pool = pool[np.sort(pick)]
            self._per_class[c] = np.sort(pool)
        return self


def buffer_update(buffer: ReplayBuffer, new_task, dataset: FeatureDataset) -> ReplayBuffer:
    """Admit a (class_ids, sample_indices) pair into the buffer."""
    class_ids, sample_indices = new_task
    return buffer.update(class_ids, sample_indices, dataset.labels)


def sample_rehearsal_batch(
    buffer: ReplayBuffer,
    current_task_indices,
    batch_size: int,
    rng,
) -> np.ndarray:
    """Draw a 50/50 rehearsal batch of dataset indices, order shuffled.

    Half the indices come uniformly with replacement from the current task,
    half from the buffer (which includes the pretraining task's samples).
    """
    current = np.asarray(current_task_indices, dtype=np.int64).ravel()
    stored = buffer.stored_indices()
    if current.size == 0 or stored.size == 0:
        raise EmptyInputError("rehearsal needs a nonempty task and buffer")
    if batch_size % 2 != 0:
        raise ValueError("batch_size must be even")
    rng = np.random.default_rng(rng)
    half = batch_size // 2
    batch = np.concatenate([
        rng.choice(current, size=half, replace=True),
        rng.choice(stored, size=half, replace=True),
    ])
    return batch[rng.permutation(batch_size)]
