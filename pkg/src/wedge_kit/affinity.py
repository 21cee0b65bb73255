"""Source-to-web affinity matrices.

Two constructions are provided: the continuous cosine cross-correlation used for style
injection, and the discrete k-nearest-neighbour assignment used by the manifold-alignment
baseline. Both return an ``AffinityMatrix`` of shape (N_s, N_w).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Literal

import numpy as np

from .errors import ConfigError, ShapeError, ValidationError
from .features import FlatFeatures

# Module logger
logger = logging.getLogger(__name__)

# Floor on feature norms; zero features get zero affinity
DEFAULT_EPSILON = 1e-8

AffinityMode = Literal["cosine", "knn"]


@dataclass(frozen=True)
class AffinityConfig:
    """How to build the affinity matrix.

    Attributes:
        mode: ``"cosine"`` for the continuous affinity, ``"knn"`` for the discrete one.
        k: Neighbours per source feature (knn only).
        epsilon: Floor applied to feature norms.
        subsample_stride: Keep every ``s``-th web position when set.
    """

    mode: AffinityMode = "cosine"
    k: int = 5
    epsilon: float = DEFAULT_EPSILON
    subsample_stride: int | None = None

    def __post_init__(self):
        if self.mode not in ("cosine", "knn"):
            raise ConfigError(f"unknown affinity mode: {self.mode!r}")
        if self.k < 1:
            raise ConfigError(f"k must be >= 1, got {self.k}")
        if not self.epsilon > 0:
            raise ConfigError(f"epsilon must be positive, got {self.epsilon}")
        if self.subsample_stride is not None and self.subsample_stride < 1:
            raise ConfigError(f"subsample_stride must be >= 1, got {self.subsample_stride}")


@dataclass(frozen=True)
class AffinityMatrix:
    """Weights between every source row and every (kept) web row."""

    data: np.ndarray
    mode: AffinityMode = "cosine"

    def __post_init__(self):
        data = np.array(self.data, dtype=np.float64, copy=True)
        if data.ndim != 2 or min(data.shape) < 1:
            raise ShapeError(f"affinity must be a non-empty 2-D matrix, got shape {data.shape}")
        if not np.all(np.isfinite(data)):
            raise ValidationError("affinity contains non-finite values")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def cols(self) -> int:
        return self.data.shape[1]

    @property
    def total_weight(self) -> float:
        """Sum of all elements (the normalizer of the alignment objective)."""
        return float(self.data.sum())

    def scaled(self, factor: float) -> "AffinityMatrix":
        return AffinityMatrix(self.data * factor, self.mode)


def subsample_web(web: FlatFeatures, stride: int | None) -> FlatFeatures:
    """Keep every ``stride``-th web row; ``None`` or 1 keeps all of them."""
    if stride is None or stride == 1:
        return web
    return FlatFeatures(web.data[::stride])


def normalized_rows(features: FlatFeatures, epsilon: float = DEFAULT_EPSILON) -> np.ndarray:
    """Rows divided by ``max(norm, epsilon)``, in 64-bit."""
    rows = features.data.astype(np.float64)
    norms = np.maximum(np.linalg.norm(rows, axis=1), epsilon)
    return rows / norms[:, None]


def _check_channels(src: FlatFeatures, web: FlatFeatures) -> None:
    if src.channels != web.channels:
        raise ShapeError(
            f"channel mismatch: source has {src.channels}, web has {web.channels}"
        )


def _cosine_matrix(src: FlatFeatures, web: FlatFeatures, epsilon: float) -> np.ndarray:
    sims = normalized_rows(src, epsilon) @ normalized_rows(web, epsilon).T
    # rounding guard only; signed values are kept
    return np.clip(sims, -1.0, 1.0)


def cosine_affinity(src: FlatFeatures, web: FlatFeatures, cfg: AffinityConfig) -> AffinityMatrix:
    """Continuous affinity: entry (i, j) is the cosine similarity of source row i and web row j.

    Raises:
        ShapeError: If source and web channel counts differ.
    """
    _check_channels(src, web)
    web = subsample_web(web, cfg.subsample_stride)
    return AffinityMatrix(_cosine_matrix(src, web, cfg.epsilon), mode="cosine")


def knn_affinity(src: FlatFeatures, web: FlatFeatures, cfg: AffinityConfig) -> AffinityMatrix:
    """Discrete affinity: weight 1 on the ``k`` most cosine-similar web rows of each source row.

    Ties are broken by the lowest web index. The selection is a brute-force full sort per row.

    Raises:
        ShapeError: If source and web channel counts differ.
        ConfigError: If ``k`` exceeds the number of (kept) web rows.
    """
    _check_channels(src, web)
    web = subsample_web(web, cfg.subsample_stride)
    if cfg.k > web.count:
        raise ConfigError(f"k={cfg.k} exceeds the number of web features ({web.count})")
    sims = _cosine_matrix(src, web, cfg.epsilon)
    order = np.argsort(-sims, axis=1, kind="stable")[:, : cfg.k]
    weights = np.zeros_like(sims)
    np.put_along_axis(weights, order, 1.0, axis=1)
    return AffinityMatrix(weights, mode="knn")


def build_affinity(src: FlatFeatures, web: FlatFeatures, cfg: AffinityConfig) -> AffinityMatrix:
    """Dispatch on ``cfg.mode``."""
    logger.debug("Building %s affinity for %d x %d features", cfg.mode, src.count, web.count)
    if cfg.mode == "knn":
        return knn_affinity(src, web, cfg)
    return cosine_affinity(src, web, cfg)
