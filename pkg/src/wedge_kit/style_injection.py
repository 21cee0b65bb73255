"""Feature-space style injection.

The content-aware method aligns source features to web features with the orthogonal matrix
minimizing the affinity-weighted squared distance

    J(M) = (1 / N_sigma) * sum_ij sigma_ij * ||s_i M^T - w_j||^2

whose closed form is ``M = U V^T`` for the SVD ``U L V^T`` of ``K = W^T sigma^T S`` (rows are
features). AdaIN, the channel-statistics baseline, and the k-NN affinity baseline share the
same entry point :func:`inject`.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Literal

import numpy as np
import scipy.linalg
from scipy.spatial.distance import cdist

from .affinity import (
    DEFAULT_EPSILON,
    AffinityConfig,
    AffinityMatrix,
    cosine_affinity,
    knn_affinity,
    normalized_rows,
    subsample_web,
)
from .errors import ConfigError, DegenerateAffinityError, NumericError, ShapeError, ValidationError
from .features import FeatureMap, FlatFeatures, flatten

# Module logger
logger = logging.getLogger(__name__)

# Stabilizer for the source standard deviation in AdaIN
DEFAULT_ADAIN_EPSILON = 1e-5

# Per-dimension tolerance on ||M M^T - I||_F
ORTHOGONALITY_TOL = 1e-5

InjectionMethod = Literal["procrustes", "adain", "mast_knn", "none"]
METHODS: tuple[str, ...] = ("none", "adain", "mast_knn", "procrustes")


@dataclass(frozen=True)
class ProjectionMatrix:
    """Orthogonal C x C matrix applied to row features as ``rows @ M.T``."""

    data: np.ndarray

    def __post_init__(self):
        data = np.array(self.data, dtype=np.float64, copy=True)
        if data.ndim != 2 or data.shape[0] != data.shape[1] or data.shape[0] < 1:
            raise ShapeError(f"projection must be a square matrix, got shape {data.shape}")
        defect = np.linalg.norm(data @ data.T - np.eye(data.shape[0]))
        if not defect <= ORTHOGONALITY_TOL * data.shape[0]:
            raise ValidationError(f"projection is not orthogonal (||MM^T - I|| = {defect:.3g})")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)

    @property
    def dim(self) -> int:
        return self.data.shape[0]


@dataclass(frozen=True)
class InjectionConfig:
    """Which style injection to run, where, and how often.

    Attributes:
        method: ``procrustes`` (cosine affinity), ``mast_knn`` (k-NN affinity), ``adain`` or
            ``none``.
        injection_points: Model stages whose output is restyled; 0 is the input image.
        probability: Chance that a given source image is restyled in an iteration.
        adain_epsilon: Floor on the source channel standard deviation.
        knn_k: Neighbours for ``mast_knn``.
        affinity_epsilon: Floor on feature norms in the affinity.
        subsample_stride: Optional stride over web positions.
    """

    method: InjectionMethod = "procrustes"
    injection_points: frozenset[int] = field(default_factory=lambda: frozenset({1}))
    probability: float = 1.0
    adain_epsilon: float = DEFAULT_ADAIN_EPSILON
    knn_k: int = 5
    affinity_epsilon: float = DEFAULT_EPSILON
    subsample_stride: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "injection_points", frozenset(self.injection_points))
        if self.method not in METHODS:
            raise ConfigError(f"unknown injection method: {self.method!r}")
        if self.method != "none" and not self.injection_points:
            raise ConfigError("injection_points must be non-empty unless method is 'none'")
        if any(point < 0 for point in self.injection_points):
            raise ConfigError(f"injection points must be >= 0, got {sorted(self.injection_points)}")
        if not 0.0 <= self.probability <= 1.0:
            raise ConfigError(f"probability must be in [0, 1], got {self.probability}")
        if not self.adain_epsilon > 0:
            raise ConfigError(f"adain_epsilon must be positive, got {self.adain_epsilon}")

    @property
    def active(self) -> bool:
        return self.method != "none" and self.probability > 0.0

    def affinity_config(self) -> AffinityConfig:
        mode = "knn" if self.method == "mast_knn" else "cosine"
        return AffinityConfig(
            mode=mode,
            k=self.knn_k,
            epsilon=self.affinity_epsilon,
            subsample_stride=self.subsample_stride,
        )


@dataclass(frozen=True)
class InjectionTransform:
    """A frozen per-pixel affine channel map ``x @ matrix + offset``.

    Both injection families reduce to this form once their statistics are computed, which is
    what lets training treat the injection as a constant linear map within an iteration.
    """

    matrix: np.ndarray
    offset: np.ndarray
    method: str

    def apply(self, values: np.ndarray) -> np.ndarray:
        return values @ self.matrix + self.offset

    def backward(self, grad: np.ndarray) -> np.ndarray:
        """Gradient w.r.t. the input given the gradient w.r.t. the output."""
        return grad @ self.matrix.T


def _check_pair(src: FlatFeatures, web: FlatFeatures, aff: AffinityMatrix) -> None:
    if src.channels != web.channels:
        raise ShapeError(f"channel mismatch: source has {src.channels}, web has {web.channels}")
    if aff.data.shape != (src.count, web.count):
        raise ShapeError(
            f"affinity shape {aff.data.shape} does not match ({src.count}, {web.count})"
        )


def _check_total(total: float, scale: float) -> None:
    if abs(total) <= 1e-12 * max(scale, 1.0):
        raise DegenerateAffinityError("affinity weights sum to zero")


def _fix_signs(u: np.ndarray, vt: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Make the largest-magnitude entry of each left singular vector non-negative."""
    pivots = np.argmax(np.abs(u), axis=0)
    signs = np.where(u[pivots, np.arange(u.shape[1])] < 0, -1.0, 1.0)
    return u * signs, vt * signs[:, None]


def procrustes_from_cross(cross: np.ndarray, total_weight: float) -> ProjectionMatrix:
    """Closed-form minimizer from the C x C cross matrix ``K`` and the weight sum ``N_sigma``.

    For a negative weight sum the objective flips sign and ``-U V^T`` is the minimizer.
    """
    try:
        u, _, vt = scipy.linalg.svd(cross)
    except (np.linalg.LinAlgError, ValueError) as e:
        raise NumericError(f"SVD did not converge: {e}") from e
    u, vt = _fix_signs(u, vt)
    m = u @ vt
    if total_weight < 0:
        m = -m
    return ProjectionMatrix(m)


def weighted_procrustes(
    src: FlatFeatures, web: FlatFeatures, aff: AffinityMatrix
) -> ProjectionMatrix:
    """Orthogonal M minimizing the affinity-weighted squared alignment error.

    Args:
        src: Source rows (N_s x C).
        web: Web rows (N_w x C), already subsampled if the affinity was.
        aff: N_s x N_w weights with a non-zero sum.

    Raises:
        ShapeError: On channel or affinity shape mismatch.
        DegenerateAffinityError: If the affinity sums to zero.
        NumericError: If the SVD fails.
    """
    _check_pair(src, web, aff)
    total = aff.total_weight
    _check_total(total, float(np.abs(aff.data).sum()))
    s = src.data.astype(np.float64)
    w = web.data.astype(np.float64)
    cross = w.T @ (aff.data.T @ s)
    return procrustes_from_cross(cross, total)


def cosine_procrustes(
    src: FlatFeatures, web: FlatFeatures, epsilon: float = DEFAULT_EPSILON
) -> ProjectionMatrix:
    """Same result as ``weighted_procrustes`` with the cosine affinity, without building it.

    The cosine affinity factorizes as ``S_hat W_hat^T``, so the cross matrix is
    ``(W^T W_hat)(S_hat^T S)`` and the weight sum is ``sum(S_hat) . sum(W_hat)``.
    """
    if src.channels != web.channels:
        raise ShapeError(f"channel mismatch: source has {src.channels}, web has {web.channels}")
    s = src.data.astype(np.float64)
    w = web.data.astype(np.float64)
    s_hat = normalized_rows(src, epsilon)
    w_hat = normalized_rows(web, epsilon)
    total = float(s_hat.sum(axis=0) @ w_hat.sum(axis=0))
    _check_total(total, float(src.count * web.count))
    cross = (w.T @ w_hat) @ (s_hat.T @ s)
    return procrustes_from_cross(cross, total)


def _pairwise_objective(
    src: FlatFeatures, web: FlatFeatures, aff: AffinityMatrix, m: ProjectionMatrix, metric: str
) -> float:
    _check_pair(src, web, aff)
    if m.dim != src.channels:
        raise ShapeError(f"projection dim {m.dim} does not match {src.channels} channels")
    total = aff.total_weight
    _check_total(total, float(np.abs(aff.data).sum()))
    projected = src.data.astype(np.float64) @ m.data.T
    distances = cdist(projected, web.data.astype(np.float64), metric=metric)
    return float(np.sum(aff.data * distances) / total)


def objective_sq(
    src: FlatFeatures, web: FlatFeatures, aff: AffinityMatrix, m: ProjectionMatrix
) -> float:
    """Weighted squared alignment error; the problem the closed form solves."""
    return _pairwise_objective(src, web, aff, m, "sqeuclidean")


def objective_l2(
    src: FlatFeatures, web: FlatFeatures, aff: AffinityMatrix, m: ProjectionMatrix
) -> float:
    """Weighted unsquared alignment error, for inspection only."""
    return _pairwise_objective(src, web, aff, m, "euclidean")


def apply_projection(src: FlatFeatures, m: ProjectionMatrix) -> FlatFeatures:
    """Replace every row by ``row @ M^T``."""
    if src.channels != m.dim:
        raise ShapeError(f"projection dim {m.dim} does not match {src.channels} channels")
    return FlatFeatures(src.data.astype(np.float64) @ m.data.T)


def _channel_stats(feature_map: FeatureMap) -> tuple[np.ndarray, np.ndarray]:
    rows = feature_map.data.reshape(-1, feature_map.channels).astype(np.float64)
    return rows.mean(axis=0), rows.std(axis=0)


def _adain_transform(src: FeatureMap, style: FeatureMap, epsilon: float) -> InjectionTransform:
    if src.channels != style.channels:
        raise ShapeError(
            f"channel mismatch: content has {src.channels}, style has {style.channels}"
        )
    mu_src, sigma_src = _channel_stats(src)
    mu_style, sigma_style = _channel_stats(style)
    scale = sigma_style / np.maximum(sigma_src, epsilon)
    return InjectionTransform(np.diag(scale), mu_style - mu_src * scale, "adain")


def adain_inject(src: FeatureMap, style: FeatureMap, cfg: InjectionConfig) -> FeatureMap:
    """Match each channel's mean and (population) standard deviation to the style map."""
    if src.channels != style.channels:
        raise ShapeError(
            f"channel mismatch: content has {src.channels}, style has {style.channels}"
        )
    mu_src, sigma_src = _channel_stats(src)
    mu_style, sigma_style = _channel_stats(style)
    normalized = (src.data.astype(np.float64) - mu_src) / np.maximum(sigma_src, cfg.adain_epsilon)
    return FeatureMap(normalized * sigma_style + mu_style)


def projection_for(src: FeatureMap, web: FeatureMap, cfg: InjectionConfig) -> ProjectionMatrix:
    """Alignment matrix for the affinity-based methods."""
    src_rows, web_rows = flatten(src), flatten(web)
    logger.debug(
        "Solving %s alignment for %d x %d features", cfg.method, src_rows.count, web_rows.count
    )
    if cfg.method == "procrustes" and cfg.subsample_stride is None:
        return cosine_procrustes(src_rows, web_rows, cfg.affinity_epsilon)
    aff_cfg = cfg.affinity_config()
    if cfg.method == "mast_knn":
        aff = knn_affinity(src_rows, web_rows, aff_cfg)
    else:
        aff = cosine_affinity(src_rows, web_rows, aff_cfg)
    return weighted_procrustes(src_rows, subsample_web(web_rows, cfg.subsample_stride), aff)


def plan_injection(
    src: FeatureMap, web: FeatureMap, cfg: InjectionConfig, rng: np.random.Generator
) -> InjectionTransform | None:
    """Decide whether to restyle ``src`` this time and, if so, freeze the transform.

    Returns ``None`` for the identity (method ``none`` or the coin flip said no).
    """
    if cfg.method == "none":
        return None
    if not rng.random() < cfg.probability:
        return None
    if cfg.method == "adain":
        return _adain_transform(src, web, cfg.adain_epsilon)
    m = projection_for(src, web, cfg)
    return InjectionTransform(m.data.T.copy(), np.zeros(m.dim), cfg.method)


def inject(
    src: FeatureMap, web: FeatureMap, cfg: InjectionConfig, rng: np.random.Generator
) -> FeatureMap:
    """Restyle ``src`` with the statistics of ``web`` according to ``cfg``."""
    transform = plan_injection(src, web, cfg, rng)
    if transform is None:
        return src
    return FeatureMap(transform.apply(src.data.astype(np.float64)))


def random_orthogonal(dim: int, rng: np.random.Generator) -> ProjectionMatrix:
    """Haar-distributed orthogonal matrix (QR of a Gaussian with sign correction)."""
    q, r = np.linalg.qr(rng.standard_normal((dim, dim)))
    return ProjectionMatrix(q * np.sign(np.diag(r)))
