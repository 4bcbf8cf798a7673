"""Confusion matrices, per-class recall diagonals, and Pearson correlation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError, NumericError, ShapeError


@dataclass
class ConfusionMatrix:
    counts: np.ndarray  # KxK int64, rows = true class, cols = predicted
    taxonomy: tuple[str, ...]

    @classmethod
    def empty(cls, taxonomy: tuple[str, ...]) -> "ConfusionMatrix":
        k = len(taxonomy)
        return cls(np.zeros((k, k), dtype=np.int64), taxonomy)

    def add(self, true_label: int, predicted: int) -> None:
        self.counts[true_label, predicted] += 1

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def accuracy(self) -> float:
        return float(np.trace(self.counts)) / self.total if self.total else 0.0


def row_normalize(counts: np.ndarray) -> np.ndarray:
    """Each row divided by its sum; all-zero rows stay all-zero."""
    counts = np.asarray(counts, dtype=np.float64)
    sums = counts.sum(axis=1, keepdims=True)
    return np.divide(counts, sums, out=np.zeros_like(counts), where=sums > 0)


@dataclass
class EvalReport:
    confusion: ConfusionMatrix

    @property
    def accuracy(self) -> float:
        return self.confusion.accuracy

    @property
    def normalized(self) -> np.ndarray:
        return row_normalize(self.confusion.counts)

    @property
    def diagonal(self) -> np.ndarray:
        """Per-class recall: the diagonal of the row-normalized matrix."""
        return np.diag(self.normalized)

    @property
    def chance_level(self) -> float:
        return 1.0 / len(self.confusion.taxonomy)


def pearson(x, y) -> float:
    """Pearson correlation coefficient of two equal-length vectors."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim != 1 or y.ndim != 1 or len(x) != len(y):
        raise ShapeError(f"pearson needs equal-length vectors, got {x.shape}, {y.shape}")
    if len(x) < 2:
        raise ShapeError("pearson needs at least 2 points")
    dx = x - x.mean()
    dy = y - y.mean()
    sx = float(dx @ dx)
    sy = float(dy @ dy)
    if sx == 0.0 or sy == 0.0:
        raise NumericError("pearson is undefined for a constant vector")
    r = float(dx @ dy) / np.sqrt(sx * sy)
    # perfectly (anti)correlated pairs must give exact +/-1; the formula's own
    # rounding can land a few ulps short, so snap within that band
    if abs(r) > 1.0 - 8 * np.finfo(float).eps:
        return 1.0 if r > 0 else -1.0
    return float(np.clip(r, -1.0, 1.0))


def correlate_diagonals(report_a: EvalReport, report_b: EvalReport) -> float:
    """Pearson r of the two per-class recall diagonals."""
    ta = report_a.confusion.taxonomy
    tb = report_b.confusion.taxonomy
    if len(ta) != len(tb):
        raise DataError(f"taxonomy sizes differ: {len(ta)} vs {len(tb)}")
    return pearson(report_a.diagonal, report_b.diagonal)


# ---------------------------------------------------------------------------
# CSV export
# ---------------------------------------------------------------------------

def confusion_csv(cm: ConfusionMatrix, normalized: bool = False) -> str:
    """Confusion matrix as CSV: header row of class names, one row per class."""
    header = ",".join(cm.taxonomy)
    data = row_normalize(cm.counts) if normalized else cm.counts
    fmt = (lambda v: f"{v:.6f}") if normalized else (lambda v: str(int(v)))
    rows = [",".join(fmt(v) for v in row) for row in data]
    return header + "\n" + "\n".join(rows) + "\n"


def summary_text(report: EvalReport) -> str:
    return (
        f"samples: {report.confusion.total}\n"
        f"accuracy: {report.accuracy:.6f}\n"
        f"chance_level: {report.chance_level:.6f}\n"
    )
