"""A small per-pixel segmenter with hand-derived gradients.

Architecture (row-feature convention, all maps H x W x C):

    stage 0  input image (C_in = 3)
    stage 1  1x1 convolution C_in -> C_f, tanh
    stage 2  3x3 convolution C_f -> C_f (zero padding), tanh
    head     1x1 convolution C_f -> num_classes, softmax

Style injection may replace the output of any stage (0 = the input itself) before it is fed to
the next one. Within an iteration the injection is frozen as an affine channel map, so the
analytic gradients flow through it as through a constant linear layer.
"""

from __future__ import annotations

import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np
from scipy.special import softmax

from .errors import EmptySupervisionError, ShapeError, ValidationError
from .features import IGNORE, FeatureMap, LabelMap, ProbabilityMap
from .style_injection import InjectionConfig, InjectionTransform, plan_injection

# Module logger
logger = logging.getLogger(__name__)

INPUT_CHANNELS = 3
DEFAULT_FEATURE_CHANNELS = 8
STAGES = (0, 1, 2)
PARAM_NAMES = ("w1", "b1", "w2", "b2", "w3", "b3")

# Checkpoint format
CHECKPOINT_MAGIC = b"WDGK"
CHECKPOINT_VERSION = 1

Gradients = dict[str, np.ndarray]
InjectionContext = Mapping[int, InjectionTransform]


@dataclass
class ToySegmenter:
    """Weights of the three-stage segmenter, kept in 64-bit during training."""

    w1: np.ndarray  # (C_in, C_f)
    b1: np.ndarray  # (C_f,)
    w2: np.ndarray  # (3, 3, C_f, C_f), indexed [dy, dx, in, out]
    b2: np.ndarray  # (C_f,)
    w3: np.ndarray  # (C_f, K)
    b3: np.ndarray  # (K,)

    def __post_init__(self):
        for name in PARAM_NAMES:
            value = np.array(getattr(self, name), dtype=np.float64, copy=True)
            if not np.all(np.isfinite(value)):
                raise ValidationError(f"weight tensor {name} contains non-finite values")
            setattr(self, name, value)
        c_f = self.w1.shape[1]
        if self.w2.shape != (3, 3, c_f, c_f) or self.w3.shape[0] != c_f:
            raise ShapeError("inconsistent weight shapes")
        biases = (self.b1.shape, self.b2.shape, self.b3.shape)
        if biases != ((c_f,), (c_f,), (self.w3.shape[1],)):
            raise ShapeError(f"inconsistent bias shapes {biases}")

    @classmethod
    def initialize(
        cls,
        num_classes: int,
        seed: int,
        feature_channels: int = DEFAULT_FEATURE_CHANNELS,
        in_channels: int = INPUT_CHANNELS,
    ) -> "ToySegmenter":
        """Symmetric uniform weights scaled by fan-in, zero biases."""
        rng = np.random.default_rng(seed)

        def uniform(shape, fan_in):
            bound = 1.0 / np.sqrt(fan_in)
            return rng.uniform(-bound, bound, size=shape)

        c_f = feature_channels
        return cls(
            w1=uniform((in_channels, c_f), in_channels),
            b1=np.zeros(c_f),
            w2=uniform((3, 3, c_f, c_f), 9 * c_f),
            b2=np.zeros(c_f),
            w3=uniform((c_f, num_classes), c_f),
            b3=np.zeros(num_classes),
        )

    @property
    def in_channels(self) -> int:
        return self.w1.shape[0]

    @property
    def feature_channels(self) -> int:
        return self.w1.shape[1]

    @property
    def num_classes(self) -> int:
        return self.w3.shape[1]

    def params(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in PARAM_NAMES}

    def copy(self) -> "ToySegmenter":
        return ToySegmenter(**self.params())


@dataclass
class ForwardCache:
    """Intermediate values of one forward pass, consumed by backward."""

    x: np.ndarray
    a1: np.ndarray
    h1: np.ndarray
    cols: np.ndarray
    a2: np.ndarray
    h2: np.ndarray
    probs: np.ndarray
    transforms: dict[int, InjectionTransform] = field(default_factory=dict)


def _im2col3(values: np.ndarray) -> np.ndarray:
    """(H, W, C) -> (H, W, 9C) with the 3x3 neighbourhood, zero padded."""
    h, w, _ = values.shape
    padded = np.pad(values, ((1, 1), (1, 1), (0, 0)))
    return np.concatenate(
        [padded[dy : dy + h, dx : dx + w] for dy in range(3) for dx in range(3)], axis=-1
    )


def _col2im3(cols: np.ndarray, channels: int) -> np.ndarray:
    """Adjoint of :func:`_im2col3`."""
    h, w, _ = cols.shape
    padded = np.zeros((h + 2, w + 2, channels))
    for k in range(9):
        dy, dx = divmod(k, 3)
        padded[dy : dy + h, dx : dx + w] += cols[..., k * channels : (k + 1) * channels]
    return padded[1:-1, 1:-1]


def _check_image(model: ToySegmenter, image: np.ndarray) -> np.ndarray:
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 3 or image.shape[2] != model.in_channels:
        raise ShapeError(
            f"expected an H x W x {model.in_channels} image, got shape {image.shape}"
        )
    return image


def stage_features(model: ToySegmenter, image: np.ndarray) -> dict[int, np.ndarray]:
    """Outputs of every stage for an image, without injection."""
    x = _check_image(model, image)
    a1 = np.tanh(x @ model.w1 + model.b1)
    a2 = np.tanh(_im2col3(a1) @ model.w2.reshape(-1, model.feature_channels) + model.b2)
    return {0: x, 1: a1, 2: a2}


def run_forward(
    model: ToySegmenter,
    image: np.ndarray,
    context: InjectionContext | None = None,
    injection: InjectionConfig | None = None,
    web_features: Mapping[int, np.ndarray] | None = None,
    rng: np.random.Generator | None = None,
) -> ForwardCache:
    """Forward pass keeping intermediates.

    With ``context`` the given frozen transforms are applied. Otherwise, when ``injection`` is
    active and ``web_features`` are given, a transform is planned at each injection point from
    the current source features and the web features of the same stage.
    """
    plan = context is None and injection is not None and injection.active and web_features
    transforms: dict[int, InjectionTransform] = dict(context or {})
    if plan and rng is None:
        raise ValueError("an rng is required to plan injections")

    def restyle(point: int, values: np.ndarray) -> np.ndarray:
        if plan and point in injection.injection_points:
            planned = plan_injection(
                FeatureMap(values), FeatureMap(web_features[point]), injection, rng
            )
            if planned is not None:
                transforms[point] = planned
        if point in transforms:
            return transforms[point].apply(values)
        return values

    x = restyle(0, _check_image(model, image))
    a1 = np.tanh(x @ model.w1 + model.b1)
    h1 = restyle(1, a1)
    cols = _im2col3(h1)
    a2 = np.tanh(cols @ model.w2.reshape(-1, model.feature_channels) + model.b2)
    h2 = restyle(2, a2)
    probs = softmax(h2 @ model.w3 + model.b3, axis=-1)
    return ForwardCache(x, a1, h1, cols, a2, h2, probs, transforms)


def forward(
    model: ToySegmenter,
    image: np.ndarray,
    injection: InjectionConfig | None = None,
    web_image: np.ndarray | None = None,
    rng: np.random.Generator | None = None,
) -> ProbabilityMap:
    """Class probabilities for ``image``, optionally restyled with ``web_image``."""
    web_features = stage_features(model, web_image) if web_image is not None else None
    cache = run_forward(model, image, injection=injection, web_features=web_features, rng=rng)
    return ProbabilityMap(cache.probs)


def predict_labels(model: ToySegmenter, image: np.ndarray) -> LabelMap:
    """Argmax prediction without injection."""
    probs = run_forward(model, image).probs
    return LabelMap(np.argmax(probs, axis=-1), model.num_classes)


def nll_terms(probs: np.ndarray, labels: np.ndarray) -> tuple[float, int]:
    """Sum of ``-ln p[label]`` over non-IGNORE pixels and the number of such pixels."""
    valid = labels != IGNORE
    count = int(np.count_nonzero(valid))
    if count == 0:
        return 0.0, 0
    picked = np.take_along_axis(probs[valid], labels[valid].astype(np.intp)[:, None], axis=1)
    return float(-np.log(np.maximum(picked, np.finfo(np.float64).tiny)).sum()), count


def _check_pair(probs: ProbabilityMap, labels: LabelMap) -> None:
    if (probs.height, probs.width) != (labels.height, labels.width):
        raise ShapeError(
            f"prediction is {probs.height}x{probs.width}, labels are {labels.height}x{labels.width}"
        )
    if probs.num_classes != labels.num_classes:
        raise ShapeError(
            f"prediction has {probs.num_classes} classes, labels have {labels.num_classes}"
        )


def seg_loss(probs: ProbabilityMap, labels: LabelMap) -> float:
    """Pixel-wise cross-entropy averaged over the non-IGNORE pixels.

    Raises:
        ShapeError: If shapes or class counts differ.
        EmptySupervisionError: If every pixel is IGNORE.
    """
    _check_pair(probs, labels)
    total, count = nll_terms(probs.data.astype(np.float64), labels.data)
    if count == 0:
        raise EmptySupervisionError("every pixel of the label map is IGNORE")
    return total / count


def combined_loss(
    probs_src: ProbabilityMap,
    labels_src: LabelMap,
    probs_web: ProbabilityMap,
    pseudo_web: LabelMap,
) -> float:
    """Source loss plus web pseudo-label loss; an all-IGNORE web map contributes 0."""
    loss = seg_loss(probs_src, labels_src)
    _check_pair(probs_web, pseudo_web)
    if pseudo_web.labeled_mask.any():
        loss += seg_loss(probs_web, pseudo_web)
    return loss


def zero_gradients(model: ToySegmenter) -> Gradients:
    return {name: np.zeros_like(value) for name, value in model.params().items()}


def accumulate_gradients(
    model: ToySegmenter,
    cache: ForwardCache,
    labels: np.ndarray,
    scale: float,
    grads: Gradients,
) -> None:
    """Add ``scale`` times the gradient of the summed NLL of one image to ``grads``."""
    c_f = model.feature_channels
    valid = labels != IGNORE
    dlogits = cache.probs.copy()
    rows, cols_idx = np.nonzero(valid)
    dlogits[rows, cols_idx, labels[valid].astype(np.intp)] -= 1.0
    dlogits[~valid] = 0.0
    dlogits *= scale

    grads["w3"] += cache.h2.reshape(-1, c_f).T @ dlogits.reshape(-1, model.num_classes)
    grads["b3"] += dlogits.sum(axis=(0, 1))
    grad = dlogits @ model.w3.T
    if 2 in cache.transforms:
        grad = cache.transforms[2].backward(grad)

    dz2 = grad * (1.0 - cache.a2**2)
    grads["w2"] += (cache.cols.reshape(-1, 9 * c_f).T @ dz2.reshape(-1, c_f)).reshape(
        model.w2.shape
    )
    grads["b2"] += dz2.sum(axis=(0, 1))
    grad = _col2im3(dz2 @ model.w2.reshape(-1, c_f).T, c_f)
    if 1 in cache.transforms:
        grad = cache.transforms[1].backward(grad)

    dz1 = grad * (1.0 - cache.a1**2)
    grads["w1"] += cache.x.reshape(-1, model.in_channels).T @ dz1.reshape(-1, c_f)
    grads["b1"] += dz1.sum(axis=(0, 1))


def loss_value(
    model: ToySegmenter,
    image: np.ndarray,
    labels: LabelMap,
    context: InjectionContext | None = None,
) -> float:
    """Mean cross-entropy of one image under a frozen injection context (64-bit)."""
    cache = run_forward(model, image, context=context or {})
    total, count = nll_terms(cache.probs, labels.data)
    if count == 0:
        raise EmptySupervisionError("every pixel of the label map is IGNORE")
    return total / count


def backward(
    model: ToySegmenter,
    image: np.ndarray,
    labels: LabelMap,
    context: InjectionContext | None = None,
) -> tuple[float, Gradients]:
    """Loss and analytic gradients for one image.

    The injection context is treated as constant: no gradient flows into the statistics or the
    SVD that produced it.

    Raises:
        ShapeError: On image/label shape mismatch.
        EmptySupervisionError: If every pixel is IGNORE.
    """
    cache = run_forward(model, image, context=context or {})
    if cache.probs.shape[:2] != labels.data.shape:
        raise ShapeError(
            f"image is {cache.probs.shape[:2]}, labels are {labels.data.shape}"
        )
    total, count = nll_terms(cache.probs, labels.data)
    if count == 0:
        raise EmptySupervisionError("every pixel of the label map is IGNORE")
    grads = zero_gradients(model)
    accumulate_gradients(model, cache, labels.data, 1.0 / count, grads)
    return total / count, grads


@dataclass
class SGD:
    """Stochastic gradient descent with heavy-ball momentum and L2 weight decay."""

    learning_rate: float
    momentum: float = 0.9
    weight_decay: float = 5e-4
    trainable: tuple[str, ...] = PARAM_NAMES
    velocity: dict[str, np.ndarray] = field(default_factory=dict)

    def step(self, model: ToySegmenter, grads: Gradients) -> None:
        for name in self.trainable:
            param = getattr(model, name)
            update = grads[name] + self.weight_decay * param
            if name in self.velocity:
                update = self.momentum * self.velocity[name] + update
            self.velocity[name] = update
            param -= self.learning_rate * update


def save_checkpoint(path: Path, model: ToySegmenter) -> None:
    """Write weights as little-endian float32 after a shape table.

    Layout: magic ``WDGK``, u16 version, u16 tensor count, then per tensor u8 name length, the
    ASCII name, u8 ndim and ndim u32 dims; the float32 payloads follow in table order.
    """
    params = model.params()
    chunks = [struct.pack("<4sHH", CHECKPOINT_MAGIC, CHECKPOINT_VERSION, len(params))]
    for name, value in params.items():
        encoded = name.encode("ascii")
        chunks.append(struct.pack("<B", len(encoded)) + encoded)
        chunks.append(struct.pack(f"<B{value.ndim}I", value.ndim, *value.shape))
    for value in params.values():
        chunks.append(value.astype("<f4").tobytes())
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(b"".join(chunks))
    logger.debug("Saved checkpoint to %s", path)


def load_checkpoint(path: Path) -> ToySegmenter:
    """Read a checkpoint written by :func:`save_checkpoint`.

    Raises:
        ValidationError: If the file is not a version-1 checkpoint or is truncated.
    """
    payload = Path(path).read_bytes()
    try:
        magic, version, count = struct.unpack_from("<4sHH", payload, 0)
        if magic != CHECKPOINT_MAGIC or version != CHECKPOINT_VERSION:
            raise ValidationError(f"{path}: not a version {CHECKPOINT_VERSION} checkpoint")
        offset = 8
        table = []
        for _ in range(count):
            (length,) = struct.unpack_from("<B", payload, offset)
            name = payload[offset + 1 : offset + 1 + length].decode("ascii")
            offset += 1 + length
            (ndim,) = struct.unpack_from("<B", payload, offset)
            shape = struct.unpack_from(f"<{ndim}I", payload, offset + 1)
            offset += 1 + 4 * ndim
            table.append((name, shape))
        tensors = {}
        for name, shape in table:
            size = int(np.prod(shape))
            if offset + 4 * size > len(payload):
                raise ValidationError(f"{path}: truncated checkpoint")
            tensors[name] = np.frombuffer(payload, dtype="<f4", count=size, offset=offset).reshape(
                shape
            )
            offset += 4 * size
    except struct.error as e:
        raise ValidationError(f"{path}: malformed checkpoint ({e})") from e
    if set(tensors) != set(PARAM_NAMES):
        raise ValidationError(f"{path}: unexpected tensors {sorted(tensors)}")
    return ToySegmenter(**tensors)
