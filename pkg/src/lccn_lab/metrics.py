"""Evaluation metrics, per-step metric records, and plot-ready CSV emission."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .classifier import ClassifierParams, forward_proba
from .datagen import OOD_LABEL, LabeledDataset
from .errors import ParameterError
from .noise_model import TransitionMatrix


@dataclass
class MetricsRecord:
    """One evaluation row; optional fields stay None where they do not apply."""

    step: int
    split: str
    accuracy: float
    loss: float
    correction_ratio: float | None = None
    phi_l1_error: float | None = None
    max_phi_row_variation: float | None = None
    bound_value: float | None = None


CSV_COLUMNS = (
    "step",
    "split",
    "accuracy",
    "loss",
    "correction_ratio",
    "phi_l1_error",
    "max_phi_row_variation",
    "bound_value",
)


def test_accuracy(
    params: ClassifierParams, ds: LabeledDataset, n_classes: int | None = None
) -> float:
    """Share of in-distribution samples whose top predicted class is the true one.

    n_classes restricts the argmax to the first n_classes outputs, for models
    that carry an extra outlier class.
    """
    keep = ~ds.ood_mask
    if not np.any(keep):
        raise ParameterError("dataset has no in-distribution samples to score")
    probs = forward_proba(params, ds.features[keep])
    if n_classes is not None:
        probs = probs[:, :n_classes]
    predicted = probs.argmax(axis=1)
    return float(np.mean(predicted == ds.true_labels[keep]))


def correction_ratio(assignment_labels, true_labels: np.ndarray) -> float:
    """Share of in-distribution samples whose latent label matches the truth.

    Accepts either a LatentAssignment or a plain label array.
    """
    if hasattr(assignment_labels, "labels"):
        assignment_labels = assignment_labels.labels
    assignment_labels = np.asarray(assignment_labels, dtype=np.int64)
    true_labels = np.asarray(true_labels, dtype=np.int64)
    if assignment_labels.shape != true_labels.shape:
        raise ParameterError("assignment and true labels must have the same length")
    keep = true_labels != OOD_LABEL
    if not np.any(keep):
        raise ParameterError("no in-distribution samples to evaluate")
    if np.any(assignment_labels[keep] < 0):
        raise ParameterError("assignment must be complete on in-distribution samples")
    return float(np.mean(assignment_labels[keep] == true_labels[keep]))


def _as_matrix(phi) -> np.ndarray:
    if isinstance(phi, TransitionMatrix):
        return phi.matrix
    return np.asarray(phi, dtype=np.float64)


def transition_l1_error(phi_a, phi_b) -> float:
    """Largest per-row L1 distance between two transition matrices (symmetric)."""
    a, b = _as_matrix(phi_a), _as_matrix(phi_b)
    if a.shape != b.shape:
        raise ParameterError("transition matrices must have the same shape")
    return float(np.abs(a - b).sum(axis=1).max())


def transition_frobenius_error(phi_a, phi_b) -> float:
    """Frobenius-norm distance between two transition matrices."""
    a, b = _as_matrix(phi_a), _as_matrix(phi_b)
    if a.shape != b.shape:
        raise ParameterError("transition matrices must have the same shape")
    return float(np.sqrt(((a - b) ** 2).sum()))


@dataclass
class Histogram:
    bin_lo: np.ndarray
    bin_hi: np.ndarray
    counts: np.ndarray


def variation_histogram(run_or_values, bins: int = 50) -> Histogram:
    """Histogram of per-batch max-row transition variations from a finished run.

    Accepts a RunResult (reads its batch_variations) or a plain sequence of
    values. A degenerate value range collapses to a single bin.
    """
    values = getattr(run_or_values, "batch_variations", run_or_values)
    measured = np.asarray(
        [v.measured if hasattr(v, "measured") else float(v) for v in values],
        dtype=np.float64,
    )
    if measured.size == 0:
        raise ParameterError("no variation values were logged")
    if bins < 1:
        raise ParameterError("bins must be >= 1")
    lo, hi = float(measured.min()), float(measured.max())
    if lo == hi:
        return Histogram(
            bin_lo=np.array([lo]),
            bin_hi=np.array([hi]),
            counts=np.array([measured.size], dtype=np.int64),
        )
    counts, edges = np.histogram(measured, bins=bins, range=(lo, hi))
    return Histogram(bin_lo=edges[:-1], bin_hi=edges[1:], counts=counts.astype(np.int64))


def _format_optional(value: float | None) -> str:
    return "" if value is None else repr(float(value))


def write_metrics_csv(records: list[MetricsRecord], path: str | Path) -> None:
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(CSV_COLUMNS)
        for rec in records:
            writer.writerow(
                [
                    rec.step,
                    rec.split,
                    repr(float(rec.accuracy)),
                    repr(float(rec.loss)),
                    _format_optional(rec.correction_ratio),
                    _format_optional(rec.phi_l1_error),
                    _format_optional(rec.max_phi_row_variation),
                    _format_optional(rec.bound_value),
                ]
            )


def read_metrics_csv(path: str | Path) -> list[MetricsRecord]:
    records = []
    with open(path, newline="") as handle:
        for row in csv.DictReader(handle):
            records.append(
                MetricsRecord(
                    step=int(row["step"]),
                    split=row["split"],
                    accuracy=float(row["accuracy"]),
                    loss=float(row["loss"]),
                    correction_ratio=float(row["correction_ratio"]) if row["correction_ratio"] else None,
                    phi_l1_error=float(row["phi_l1_error"]) if row["phi_l1_error"] else None,
                    max_phi_row_variation=float(row["max_phi_row_variation"])
                    if row["max_phi_row_variation"]
                    else None,
                    bound_value=float(row["bound_value"]) if row["bound_value"] else None,
                )
            )
    return records


def write_histogram_csv(hist: Histogram, path: str | Path) -> None:
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["bin_lo", "bin_hi", "count"])
        for lo, hi, count in zip(hist.bin_lo, hist.bin_hi, hist.counts):
            writer.writerow([repr(float(lo)), repr(float(hi)), int(count)])
