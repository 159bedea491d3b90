"""Evaluation harness: top-1, binary F1, and teacher-agreement metrics.

Evaluators built here are pure functions Model -> float; any subsampling
of the validation set is drawn once, from an explicit seed, when the
evaluator is created, so fitness comparisons within a run are consistent.
"""
from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import ConfigError
from .netgraph import Model, forward
from .model_io import DatasetHandle
from .tensor_ops import Tensor

__all__ = ["EvalReport", "METRICS", "metric_value", "make_evaluator", "evaluate"]

METRICS = ("top1", "f1", "agreement")

EvalFn = Callable[[Model], float]


@dataclass(frozen=True)
class EvalReport:
    metric: str
    value: float
    n_samples: int
    dataset_id: str
    seed: int
    wall_time_s: float

    def __post_init__(self):
        if not 0.0 <= self.value <= 1.0:
            raise ConfigError(f"metric value must be in [0, 1], got {self.value}")
        if self.n_samples <= 0:
            raise ConfigError("n_samples must be positive")


def _top1(outputs: np.ndarray, labels: np.ndarray) -> float:
    pred = np.argmax(outputs, axis=1)
    return float(np.mean(pred == labels))


def _f1(outputs: np.ndarray, labels: np.ndarray, threshold: float) -> float:
    # Positive class = anomaly (label 1); score = first output column.
    scores = outputs[:, 0]
    pred = scores >= threshold
    pos = labels == 1
    tp = int(np.sum(pred & pos))
    fp = int(np.sum(pred & ~pos))
    fn = int(np.sum(~pred & pos))
    denom = 2 * tp + fp + fn
    return 0.0 if denom == 0 else 2 * tp / denom


def metric_value(metric: str, outputs: np.ndarray, labels: np.ndarray, threshold: float = 0.5) -> float:
    """Score a batch of model outputs against labels.

    `agreement` is top-1 against teacher labels; the computation is the
    same, the name records provenance.
    """
    if metric not in METRICS:
        raise ConfigError(f"unknown metric '{metric}', expected one of {METRICS}")
    if metric == "f1":
        return _f1(outputs, labels, threshold)
    return _top1(outputs, labels)


def _subset(data: DatasetHandle, subset_size: int | None, seed: int) -> tuple[np.ndarray, np.ndarray]:
    inputs = data.inputs.data
    labels = data.labels
    n = inputs.shape[0]
    if subset_size is not None and subset_size < n:
        if subset_size <= 0:
            raise ConfigError(f"subset size must be positive, got {subset_size}")
        rng = np.random.Generator(np.random.PCG64(seed))
        idx = rng.choice(n, size=subset_size, replace=False)
        inputs = inputs[idx]
        labels = labels[idx]
    return inputs, labels


def make_evaluator(
    data: DatasetHandle,
    metric: str = "top1",
    *,
    subset_size: int | None = None,
    seed: int = 0,
    threshold: float = 0.5,
) -> EvalFn:
    """Pure evaluator Model -> metric over a frozen (sub)sample."""
    if metric not in METRICS:
        raise ConfigError(f"unknown metric '{metric}', expected one of {METRICS}")
    inputs, labels = _subset(data, subset_size, seed)
    batch = Tensor(inputs)

    def evaluator(model: Model) -> float:
        outputs = forward(model, batch)
        return metric_value(metric, outputs.data, labels, threshold)

    return evaluator


def evaluate(
    model: Model,
    data: DatasetHandle,
    metric: str = "top1",
    *,
    subset_size: int | None = None,
    seed: int = 0,
    threshold: float = 0.5,
) -> EvalReport:
    """Run the metric and wrap the result with its provenance."""
    start = time.perf_counter()
    fn = make_evaluator(data, metric, subset_size=subset_size, seed=seed, threshold=threshold)
    value = fn(model)
    n = data.inputs.shape[0] if subset_size is None else min(subset_size, data.inputs.shape[0])
    return EvalReport(
        metric=metric,
        value=value,
        n_samples=n,
        dataset_id=data.id,
        seed=seed,
        wall_time_s=time.perf_counter() - start,
    )
