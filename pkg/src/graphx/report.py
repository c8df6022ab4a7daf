"""Deterministic run artifacts: report.json, CSV tables, and figures.

JSON output is canonical (sorted keys, repr floats) so identical runs produce
byte-identical reports. Figures are rendered with the Agg backend straight to
files; matplotlib is imported lazily so library users who never render pay no
import cost.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import ValidationError

Array = np.ndarray


def _jsonable(obj):
    """Recursively convert numpy/dataclass values into plain JSON types."""
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return _jsonable(dataclasses.asdict(obj))
    if isinstance(obj, float) and not np.isfinite(obj):
        raise ValidationError("report values must be finite")
    return obj


def canonical_json(obj) -> str:
    """Canonical serialization: sorted keys, no whitespace variation."""
    return json.dumps(_jsonable(obj), sort_keys=True, separators=(",", ":"))


def canonical_hash(obj) -> str:
    """Hex digest of the canonical JSON form; stable across runs."""
    return hashlib.sha256(canonical_json(obj).encode("utf-8")).hexdigest()


def write_report_json(path, mapping: dict) -> None:
    payload = json.dumps(_jsonable(mapping), sort_keys=True, indent=2) + "\n"
    Path(path).write_text(payload, encoding="utf-8")


def read_report_json(path) -> dict:
    return json.loads(Path(path).read_text(encoding="utf-8"))


def write_metrics_csv(path, rows: Sequence[dict]) -> None:
    """One row per target: name plus its scalar metrics."""
    if len(rows) == 0:
        raise ValidationError("metrics.csv needs at least one row")
    fields = list(rows[0].keys())
    for row in rows[1:]:
        if list(row.keys()) != fields:
            raise ValidationError("metrics rows have inconsistent columns")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: _format_cell(v) for k, v in row.items()})


def _format_cell(value):
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value)).lower()
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return str(value)


def write_loss_history_csv(path, history: Iterable) -> None:
    """Columns step, attribute_loss, link_loss, total; accepts tuples too."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "attribute_loss", "link_loss", "total"])
        for entry in history:
            if hasattr(entry, "step"):
                row = (entry.step, entry.attribute_loss, entry.link_loss, entry.total)
            else:
                row = tuple(entry)
            writer.writerow([_format_cell(v) for v in row])


def read_loss_history_csv(path) -> list[tuple]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != ["step", "attribute_loss", "link_loss", "total"]:
            raise ValidationError(f"unexpected loss history header: {header}")
        return [
            (int(r[0]), float(r[1]), float(r[2]), float(r[3])) for r in reader
        ]


# ---------------------------------------------------------------------------
# Figures
# ---------------------------------------------------------------------------


def _new_figure():
    import matplotlib

    matplotlib.use("Agg", force=False)
    import matplotlib.pyplot as plt

    return plt


def render_loss_curve(path, history: Iterable) -> None:
    steps, attr, link, total = [], [], [], []
    for entry in history:
        if hasattr(entry, "step"):
            steps.append(entry.step)
            attr.append(entry.attribute_loss)
            link.append(entry.link_loss)
            total.append(entry.total)
        else:
            s, a, l, t = entry
            steps.append(s)
            attr.append(a)
            link.append(l)
            total.append(t)
    if not steps:
        raise ValidationError("loss curve needs at least one step")
    plt = _new_figure()
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(steps, total, label="total", color="black")
    ax.plot(steps, attr, label="attribute", color="tab:blue", alpha=0.8)
    ax.plot(steps, link, label="link", color="tab:orange", alpha=0.8)
    ax.set_xlabel("step")
    ax.set_ylabel("loss")
    if min(total) > 0 and max(total) / max(min(total), 1e-300) > 50:
        ax.set_yscale("log")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_pred_scatter(path, pred: Array, truth: Array, title: str = "") -> None:
    pred = np.asarray(pred, dtype=np.float64).ravel()
    truth = np.asarray(truth, dtype=np.float64).ravel()
    if pred.size == 0 or pred.shape != truth.shape:
        raise ValidationError("scatter needs matching non-empty vectors")
    plt = _new_figure()
    fig, ax = plt.subplots(figsize=(4.5, 4.5))
    ax.scatter(truth, pred, s=12, alpha=0.6, edgecolors="none")
    lo = float(min(truth.min(), pred.min()))
    hi = float(max(truth.max(), pred.max()))
    pad = 0.05 * max(hi - lo, 1e-9)
    ax.plot([lo - pad, hi + pad], [lo - pad, hi + pad], color="gray", lw=1, ls="--")
    ax.set_xlabel("truth")
    ax.set_ylabel("prediction")
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_error_bars(
    path, true_errors: Sequence[float], permuted_errors: Sequence[float]
) -> None:
    """Paired per-trial bars comparing true-descriptor vs permuted errors."""
    true_errors = [float(v) for v in true_errors]
    permuted_errors = [float(v) for v in permuted_errors]
    if len(true_errors) != len(permuted_errors) or not true_errors:
        raise ValidationError("error bars need matching non-empty sequences")
    plt = _new_figure()
    fig, ax = plt.subplots(figsize=(6, 4))
    idx = np.arange(len(true_errors))
    width = 0.4
    ax.bar(idx - width / 2, true_errors, width, label="true descriptor")
    ax.bar(idx + width / 2, permuted_errors, width, label="permuted descriptor")
    ax.set_xlabel("trial")
    ax.set_ylabel("generalization error")
    ax.set_xticks(idx)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
