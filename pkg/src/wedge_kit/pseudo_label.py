"""Entropy-thresholded pseudo labels for unlabeled web images."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Iterable

import numpy as np
from numpy.typing import ArrayLike
from scipy.special import xlogy

from .errors import ConfigError, ValidationError
from .features import IGNORE, SIMPLEX_TOL, LabelMap, ProbabilityMap

# Module logger
logger = logging.getLogger(__name__)

# Entropy threshold in nats used for all experiments
DEFAULT_TAU = 5e-2


@dataclass(frozen=True)
class PseudoLabelConfig:
    """Pixels with entropy strictly below ``tau`` (nats) get a label."""

    tau: float = DEFAULT_TAU

    def __post_init__(self):
        if not self.tau > 0:
            raise ConfigError(f"tau must be positive, got {self.tau}")


@dataclass(frozen=True)
class PseudoLabelStats:
    """Coverage summary of one or more pseudo-label maps."""

    labeled_pixels: int
    total_pixels: int
    per_class_counts: tuple[int, ...]

    @property
    def labeled_fraction(self) -> float:
        return self.labeled_pixels / self.total_pixels if self.total_pixels else 0.0

    @classmethod
    def combine(cls, parts: Iterable["PseudoLabelStats"]) -> "PseudoLabelStats":
        parts = list(parts)
        if not parts:
            return cls(0, 0, ())
        counts = np.sum([p.per_class_counts for p in parts], axis=0)
        return cls(
            labeled_pixels=sum(p.labeled_pixels for p in parts),
            total_pixels=sum(p.total_pixels for p in parts),
            per_class_counts=tuple(int(c) for c in counts),
        )


def _entropy_rows(rows: np.ndarray) -> np.ndarray:
    return np.maximum(-xlogy(rows, rows).sum(axis=-1), 0.0)


def entropy(p: ArrayLike) -> float:
    """Shannon entropy in nats, with ``0 ln 0 = 0``.

    Raises:
        ValidationError: If ``p`` is not a probability vector.
    """
    p = np.asarray(p, dtype=np.float64)
    if p.ndim != 1 or p.size == 0:
        raise ValidationError(f"expected a 1-D probability vector, got shape {p.shape}")
    if not np.all(np.isfinite(p)) or p.min() < 0.0 or p.max() > 1.0:
        raise ValidationError("probabilities must lie in [0, 1]")
    if abs(p.sum() - 1.0) > SIMPLEX_TOL:
        raise ValidationError(f"probabilities sum to {p.sum():.9f}, not 1")
    return float(_entropy_rows(p))


def entropy_map(probs: ProbabilityMap) -> np.ndarray:
    """Per-pixel entropy (H x W, nats)."""
    return _entropy_rows(probs.data.astype(np.float64))


def generate_pseudo_labels(
    probs: ProbabilityMap, cfg: PseudoLabelConfig
) -> tuple[LabelMap, PseudoLabelStats]:
    """Label confident pixels with their argmax class and mark the rest IGNORE.

    A pixel is kept iff its entropy is strictly below ``cfg.tau``; argmax ties go to the lowest
    class id.
    """
    confident = entropy_map(probs) < cfg.tau
    labels = np.where(confident, probs.argmax(), IGNORE).astype(np.uint8)
    counts = np.bincount(labels[confident], minlength=probs.num_classes)
    stats = PseudoLabelStats(
        labeled_pixels=int(np.count_nonzero(confident)),
        total_pixels=int(confident.size),
        per_class_counts=tuple(int(c) for c in counts),
    )
    logger.debug(
        "Pseudo-labeled %d of %d pixels at tau=%g",
        stats.labeled_pixels,
        stats.total_pixels,
        cfg.tau,
    )
    return LabelMap(labels, probs.num_classes), stats
