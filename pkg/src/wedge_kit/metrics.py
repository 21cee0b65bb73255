"""Confusion matrices, IoU and pseudo-label quality, plus CSV and table output."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from functools import reduce
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigError, EvaluationError, ShapeError, ValidationError
from .features import IGNORE, LabelMap
from .model import ToySegmenter, predict_labels

# Module logger
logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ConfusionMatrix:
    """Pixel counts with rows = ground truth and columns = prediction."""

    counts: np.ndarray

    def __post_init__(self):
        counts = np.array(self.counts, dtype=np.int64, copy=True)
        if counts.ndim != 2 or counts.shape[0] != counts.shape[1]:
            raise ShapeError(f"confusion matrix must be square, got shape {counts.shape}")
        if counts.min(initial=0) < 0:
            raise ValidationError("confusion counts must be non-negative")
        counts.setflags(write=False)
        object.__setattr__(self, "counts", counts)

    @classmethod
    def empty(cls, num_classes: int) -> "ConfusionMatrix":
        return cls(np.zeros((num_classes, num_classes), dtype=np.int64))

    @property
    def num_classes(self) -> int:
        return self.counts.shape[0]

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def merge(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        if other.num_classes != self.num_classes:
            raise ShapeError(
                f"cannot merge {self.num_classes}-class and {other.num_classes}-class matrices"
            )
        return ConfusionMatrix(self.counts + other.counts)


def accumulate(cm: ConfusionMatrix, pred: LabelMap, gt: LabelMap) -> ConfusionMatrix:
    """Add every pixel with ``gt != IGNORE`` to the counts.

    Predictions outside the class range (IGNORE) are skipped as well.
    """
    if pred.data.shape != gt.data.shape:
        raise ShapeError(f"prediction {pred.data.shape} and ground truth {gt.data.shape} differ")
    n = cm.num_classes
    g = gt.data.astype(np.int64)
    p = pred.data.astype(np.int64)
    keep = (g != IGNORE) & (p < n)
    counts = np.bincount(n * g[keep] + p[keep], minlength=n * n).reshape(n, n)
    return ConfusionMatrix(cm.counts + counts)


def merge_all(parts: Iterable[ConfusionMatrix], num_classes: int) -> ConfusionMatrix:
    return reduce(ConfusionMatrix.merge, parts, ConfusionMatrix.empty(num_classes))


def miou(cm: ConfusionMatrix) -> tuple[tuple[float | None, ...], float]:
    """Per-class IoU and their mean.

    Classes whose union is empty are reported as ``None`` and left out of the mean.

    Raises:
        EvaluationError: If the matrix holds no pixels.
    """
    if cm.total == 0:
        raise EvaluationError("confusion matrix is empty")
    h = cm.counts.astype(np.float64)
    tp = np.diag(h)
    union = h.sum(axis=0) + h.sum(axis=1) - tp
    per_class = tuple(float(t / u) if u > 0 else None for t, u in zip(tp, union))
    present = [v for v in per_class if v is not None]
    return per_class, float(np.mean(present))


def pixel_accuracy(cm: ConfusionMatrix) -> float:
    if cm.total == 0:
        raise EvaluationError("confusion matrix is empty")
    return float(np.trace(cm.counts) / cm.total)


@dataclass(frozen=True)
class PseudoLabelQuality:
    """Precision on scored pixels (``None`` when none is scored) and coverage.

    Scored pixels are labeled pixels with a ground-truth class. Labels placed on IGNORE ground
    truth (distractor content) count towards coverage and ``unscored_pixels`` only.
    """

    precision: float | None
    coverage: float
    labeled_pixels: int = 0
    correct_pixels: int = 0
    total_pixels: int = 0
    scored_pixels: int = 0

    @property
    def unscored_pixels(self) -> int:
        return self.labeled_pixels - self.scored_pixels

    @classmethod
    def combine(cls, parts: Iterable["PseudoLabelQuality"]) -> "PseudoLabelQuality":
        parts = list(parts)
        labeled = sum(p.labeled_pixels for p in parts)
        correct = sum(p.correct_pixels for p in parts)
        scored = sum(p.scored_pixels for p in parts)
        total = sum(p.total_pixels for p in parts)
        return cls(
            precision=correct / scored if scored else None,
            coverage=labeled / total if total else 0.0,
            labeled_pixels=labeled,
            correct_pixels=correct,
            total_pixels=total,
            scored_pixels=scored,
        )


def pseudo_label_quality(pseudo: LabelMap, gt: LabelMap) -> PseudoLabelQuality:
    """Fraction of scored pseudo pixels that match the ground truth, and the labeled fraction.

    Pixels whose ground truth is IGNORE are left out of the precision, as in ``accumulate``.
    """
    if pseudo.data.shape != gt.data.shape:
        raise ShapeError(
            f"pseudo labels {pseudo.data.shape} and ground truth {gt.data.shape} differ"
        )
    labeled = pseudo.labeled_mask
    scored = labeled & (gt.data != IGNORE)
    n_scored = int(scored.sum())
    n_correct = int(np.count_nonzero(pseudo.data[scored] == gt.data[scored]))
    return PseudoLabelQuality(
        precision=n_correct / n_scored if n_scored else None,
        coverage=pseudo.labeled_fraction(),
        labeled_pixels=int(labeled.sum()),
        correct_pixels=n_correct,
        total_pixels=int(labeled.size),
        scored_pixels=n_scored,
    )


def evaluate_model(
    model: ToySegmenter,
    images: Sequence[np.ndarray],
    labels: Sequence[LabelMap],
    num_classes: int | None = None,
) -> ConfusionMatrix:
    """Confusion matrix of the model's argmax predictions over a labeled image set."""
    if len(images) != len(labels):
        raise ShapeError(f"{len(images)} images but {len(labels)} label maps")
    n = num_classes or model.num_classes
    parts = (
        accumulate(ConfusionMatrix.empty(n), predict_labels(model, image), gt)
        for image, gt in zip(images, labels)
    )
    cm = merge_all(parts, n)
    logger.debug("Evaluated %d images (%d pixels)", len(images), cm.total)
    return cm


def read_class_catalog(path: Path, num_classes: int) -> tuple[str, ...]:
    """One class name per line; blank lines and ``#`` comments are skipped.

    Raises:
        ConfigError: If the catalog does not name exactly ``num_classes`` classes.
    """
    names = []
    for raw in Path(path).read_text().splitlines():
        line = raw.split("#", 1)[0].strip()
        if line:
            names.append(line)
    if len(names) != num_classes:
        raise ConfigError(f"{path}: expected {num_classes} class names, found {len(names)}")
    return tuple(names)


def default_class_names(num_classes: int) -> tuple[str, ...]:
    return ("background",) + tuple(f"class_{i}" for i in range(1, num_classes))


def format_value(value) -> str:
    """Report formatting: floats with 4 decimals, ``None`` as ``absent``."""
    if value is None:
        return "absent"
    if isinstance(value, (float, np.floating)):
        return f"{value:.4f}"
    return str(value)


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([format_value(v) for v in row])


def format_table(header: Sequence[str], rows: Sequence[Sequence]) -> str:
    """Plain-text table with left-aligned first column and right-aligned values."""
    cells = [list(header)] + [[format_value(v) for v in row] for row in rows]
    widths = [max(len(r[i]) for r in cells) for i in range(len(header))]

    def line(row):
        first = row[0].ljust(widths[0])
        rest = [c.rjust(w) for c, w in zip(row[1:], widths[1:])]
        return "  ".join([first, *rest])

    rule = "  ".join("-" * w for w in widths)
    return "\n".join([line(cells[0]), rule, *(line(r) for r in cells[1:])])
