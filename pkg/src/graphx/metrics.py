"""Evaluation metrics: MSE, Pearson correlation, ranking AUC, residual norms."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import ShapeError, ValidationError

Array = np.ndarray


class PccResult(NamedTuple):
    """Pearson correlation with an explicit defined flag.

    ``defined`` is False (and ``value`` 0.0) when either vector has zero
    variance, where the correlation does not exist.
    """

    value: float
    defined: bool


def mse_metric(pred, truth) -> float:
    pred = np.asarray(pred, dtype=np.float64).ravel()
    truth = np.asarray(truth, dtype=np.float64).ravel()
    if pred.shape != truth.shape:
        raise ShapeError(f"mse_metric lengths differ: {pred.shape} vs {truth.shape}")
    if pred.size == 0:
        raise ShapeError("mse_metric of empty vectors")
    diff = pred - truth
    return float((diff * diff).mean())


def pcc_metric(pred, truth) -> PccResult:
    pred = np.asarray(pred, dtype=np.float64).ravel()
    truth = np.asarray(truth, dtype=np.float64).ravel()
    if pred.shape != truth.shape:
        raise ShapeError(f"pcc_metric lengths differ: {pred.shape} vs {truth.shape}")
    if pred.size < 2:
        raise ShapeError("pcc_metric needs at least two entries")
    a = pred - pred.mean()
    b = truth - truth.mean()
    na = np.sqrt((a * a).sum())
    nb = np.sqrt((b * b).sum())
    if na == 0.0 or nb == 0.0:
        return PccResult(0.0, False)
    return PccResult(float((a * b).sum() / (na * nb)), True)


def auc_metric(pos_scores, neg_scores) -> float:
    """Probability that a positive outranks a negative (ties count half)."""
    pos = np.asarray(pos_scores, dtype=np.float64).ravel()
    neg = np.asarray(neg_scores, dtype=np.float64).ravel()
    if pos.size == 0 or neg.size == 0:
        raise ValidationError("auc_metric needs both positive and negative scores")
    merged = np.concatenate([pos, neg])
    order = np.argsort(merged, kind="mergesort")
    ranks = np.empty(merged.size)
    i = 0
    while i < merged.size:
        j = i
        while j < merged.size and merged[order[j]] == merged[order[i]]:
            j += 1
        ranks[order[i:j]] = 0.5 * (i + j + 1)
        i = j
    u = ranks[: pos.size].sum() - pos.size * (pos.size + 1) / 2.0
    return float(u / (pos.size * neg.size))


def generalization_errors(pred: Array, truth: Array) -> Array:
    """Per-sample squared L2 norm of the residual over all other axes."""
    pred = np.asarray(pred, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if pred.shape != truth.shape:
        raise ShapeError(f"residual shapes differ: {pred.shape} vs {truth.shape}")
    diff = (pred - truth).reshape(pred.shape[0], -1)
    return (diff * diff).sum(axis=1)


@dataclass(frozen=True)
class TargetMetrics:
    """Fit quality of one target mode's predictions at known-truth rows."""

    mse: float
    pcc: float
    pcc_defined: bool
    generalization_errors: tuple[float, ...]
    n_rows: int


@dataclass(frozen=True)
class MetricReport:
    """Per-target metrics plus aggregate means for one evaluated episode."""

    targets: dict[str, TargetMetrics]
    mean_mse: float
    mean_generalization_error: float

    def to_mapping(self) -> dict:
        return {
            "mean_mse": self.mean_mse,
            "mean_generalization_error": self.mean_generalization_error,
            "targets": {
                k: {
                    "mse": t.mse,
                    "pcc": t.pcc,
                    "pcc_defined": t.pcc_defined,
                    "n_rows": t.n_rows,
                    "generalization_errors": list(t.generalization_errors),
                }
                for k, t in sorted(self.targets.items())
            },
        }


def build_metric_report(
    per_target: dict[str, tuple[Array, Array]]
) -> MetricReport:
    """Assemble a MetricReport from {target: (pred, truth)} sample blocks."""
    targets = {}
    for name, (pred, truth) in per_target.items():
        pcc = pcc_metric(pred, truth) if np.asarray(pred).size >= 2 else PccResult(0.0, False)
        errors = generalization_errors(pred, truth)
        targets[name] = TargetMetrics(
            mse=mse_metric(pred, truth),
            pcc=pcc.value,
            pcc_defined=pcc.defined,
            generalization_errors=tuple(float(e) for e in errors),
            n_rows=int(np.asarray(pred).shape[1]) if np.asarray(pred).ndim > 1 else 1,
        )
    if not targets:
        raise ValidationError("metric report needs at least one target")
    mean_mse = float(np.mean([t.mse for t in targets.values()]))
    mean_gen = float(
        np.mean([e for t in targets.values() for e in t.generalization_errors])
    )
    return MetricReport(
        targets=targets, mean_mse=mean_mse, mean_generalization_error=mean_gen
    )
