"""Dense tensor types shared by every stage of the pipeline.

All maps are row-major over (row, col, channel). A feature is a row vector of length C and
matrices act on features from the right, so a projection is written ``rows @ M.T``.
Storage is 32-bit; reductions accumulate in 64-bit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeError, ValidationError

# Label value excluded from losses and metrics
IGNORE = 255

# Tolerance on per-pixel probability sums
SIMPLEX_TOL = 1e-6


def _frozen(array: np.ndarray) -> np.ndarray:
    array.setflags(write=False)
    return array


@dataclass(frozen=True)
class FeatureMap:
    """Per-pixel feature vectors of one network stage, shape (height, width, channels)."""

    data: np.ndarray

    def __post_init__(self):
        data = np.array(self.data, dtype=np.float32, copy=True)
        if data.ndim != 3:
            raise ShapeError(f"feature map must be 3-D (H, W, C), got shape {data.shape}")
        if min(data.shape) < 1:
            raise ShapeError(f"feature map dimensions must be >= 1, got {data.shape}")
        if not np.all(np.isfinite(data)):
            raise ValidationError("feature map contains non-finite values")
        object.__setattr__(self, "data", _frozen(data))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]


@dataclass(frozen=True)
class FlatFeatures:
    """Feature map flattened to ``count = H*W`` rows of ``channels`` values."""

    data: np.ndarray

    def __post_init__(self):
        data = np.array(self.data, dtype=np.float32, copy=True)
        if data.ndim != 2:
            raise ShapeError(f"flat features must be 2-D (N, C), got shape {data.shape}")
        if min(data.shape) < 1:
            raise ShapeError(f"flat features need at least one row and channel, got {data.shape}")
        if not np.all(np.isfinite(data)):
            raise ValidationError("flat features contain non-finite values")
        object.__setattr__(self, "data", _frozen(data))

    @property
    def count(self) -> int:
        return self.data.shape[0]

    @property
    def channels(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class ProbabilityMap:
    """Per-pixel class distribution, shape (height, width, num_classes)."""

    data: np.ndarray

    def __post_init__(self):
        data = np.array(self.data, dtype=np.float32, copy=True)
        if data.ndim != 3:
            raise ShapeError(f"probability map must be 3-D (H, W, K), got shape {data.shape}")
        if min(data.shape) < 1:
            raise ShapeError(f"probability map dimensions must be >= 1, got {data.shape}")
        if not np.all(np.isfinite(data)) or data.min() < 0.0 or data.max() > 1.0:
            raise ValidationError("probabilities must lie in [0, 1]")
        sums = data.sum(axis=-1, dtype=np.float64)
        worst = float(np.max(np.abs(sums - 1.0)))
        if worst > SIMPLEX_TOL:
            raise ValidationError(f"pixel probabilities must sum to 1 (max deviation {worst:.3g})")
        object.__setattr__(self, "data", _frozen(data))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def num_classes(self) -> int:
        return self.data.shape[2]

    def argmax(self) -> np.ndarray:
        """Most probable class per pixel; ties resolve to the lowest class id."""
        return np.argmax(self.data, axis=-1).astype(np.uint8)


@dataclass(frozen=True)
class LabelMap:
    """Per-pixel class ids in ``[0, num_classes)`` or ``IGNORE``."""

    data: np.ndarray
    num_classes: int

    def __post_init__(self):
        if not 1 <= self.num_classes < IGNORE:
            raise ValidationError(f"num_classes must be in [1, {IGNORE}), got {self.num_classes}")
        raw = np.asarray(self.data)
        if raw.ndim != 2:
            raise ShapeError(f"label map must be 2-D (H, W), got shape {raw.shape}")
        if min(raw.shape) < 1:
            raise ShapeError(f"label map dimensions must be >= 1, got {raw.shape}")
        if raw.size and (raw.min() < 0 or raw.max() > IGNORE):
            raise ValidationError("label ids must be within [0, 255]")
        data = raw.astype(np.uint8, copy=True)
        bad = (data != IGNORE) & (data >= self.num_classes)
        if bad.any():
            raise ValidationError(
                f"label id {int(data[bad].max())} out of range for {self.num_classes} classes"
            )
        object.__setattr__(self, "data", _frozen(data))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def labeled_mask(self) -> np.ndarray:
        return self.data != IGNORE

    def labeled_fraction(self) -> float:
        return float(np.count_nonzero(self.labeled_mask)) / self.data.size


def flatten(feature_map: FeatureMap) -> FlatFeatures:
    """Row ``i*W + j`` of the result is the channel vector of pixel ``(i, j)``."""
    return FlatFeatures(feature_map.data.reshape(-1, feature_map.channels))


def unflatten(rows: FlatFeatures, height: int, width: int) -> FeatureMap:
    """Inverse of :func:`flatten`.

    Raises:
        ShapeError: If ``rows.count != height * width``.
    """
    if height < 1 or width < 1 or rows.count != height * width:
        raise ShapeError(f"cannot reshape {rows.count} rows into a {height}x{width} map")
    return FeatureMap(rows.data.reshape(height, width, rows.channels))
