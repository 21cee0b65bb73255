"""Training stages: source only, stage 1 with style injection, stage 2 with pseudo labels."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal, Sequence

import numpy as np

from .errors import ConfigError, DegenerateAffinityError, ValidationError
from .features import LabelMap
from .model import (
    PARAM_NAMES,
    SGD,
    ForwardCache,
    ToySegmenter,
    accumulate_gradients,
    nll_terms,
    run_forward,
    stage_features,
    zero_gradients,
)
from .pseudo_label import PseudoLabelConfig
from .style_injection import InjectionConfig

# Module logger
logger = logging.getLogger(__name__)

Stage = Literal["source_only", "stage1_SI", "stage2_PL"]
STAGE_NAMES: tuple[str, ...] = ("source_only", "stage1_SI", "stage2_PL")

# Initial learning rates of the two training stages
STAGE1_LEARNING_RATE = 2e-4
STAGE2_LEARNING_RATE = 1e-4


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters of one training stage.

    A learning rate of 0 is accepted and leaves the weights unchanged.
    """

    learning_rate: float = STAGE1_LEARNING_RATE
    iterations: int = 2000
    seed: int = 0
    stage: Stage = "stage1_SI"
    injection: InjectionConfig = field(default_factory=InjectionConfig)
    tau: PseudoLabelConfig = field(default_factory=PseudoLabelConfig)
    batch_size: int = 4
    momentum: float = 0.9
    weight_decay: float = 5e-4
    classifier_only: bool = False
    log_every: int = 200

    def __post_init__(self):
        if self.stage not in STAGE_NAMES:
            raise ConfigError(f"unknown stage: {self.stage!r}")
        if not self.learning_rate >= 0:
            raise ConfigError(f"learning_rate must be non-negative, got {self.learning_rate}")
        if self.iterations < 0:
            raise ConfigError(f"iterations must be >= 0, got {self.iterations}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if not 0.0 <= self.momentum < 1.0:
            raise ConfigError(f"momentum must be in [0, 1), got {self.momentum}")
        if self.weight_decay < 0:
            raise ConfigError(f"weight_decay must be non-negative, got {self.weight_decay}")
        bad_points = set(self.injection.injection_points) - set((0, 1, 2))
        if bad_points:
            raise ConfigError(f"injection points {sorted(bad_points)} do not exist (use 0, 1, 2)")


@dataclass(frozen=True)
class LabeledSet:
    """Images with label maps (ground truth or pseudo labels)."""

    images: tuple[np.ndarray, ...]
    labels: tuple[LabelMap, ...]

    def __post_init__(self):
        object.__setattr__(self, "images", tuple(self.images))
        object.__setattr__(self, "labels", tuple(self.labels))
        if len(self.images) != len(self.labels):
            raise ValidationError(
                f"{len(self.images)} images but {len(self.labels)} label maps"
            )

    def __len__(self) -> int:
        return len(self.images)


@dataclass(frozen=True)
class TraceRow:
    iteration: int
    loss_src: float
    loss_web: float


@dataclass
class TrainResult:
    model: ToySegmenter
    trace: list[TraceRow]


def _batch_loss(
    model: ToySegmenter,
    batches: Sequence[tuple[Sequence[ForwardCache], Sequence[LabelMap]]],
    grads: dict[str, np.ndarray],
) -> list[float]:
    """Mean NLL of each batch; adds the gradient of the NLL pooled over all batches to ``grads``.

    Every supervised pixel carries the same weight, so a batch with few labeled pixels (sparse
    pseudo labels) pulls less than a fully labeled one.
    """
    terms = [
        [nll_terms(cache.probs, lab.data) for cache, lab in zip(caches, labels)]
        for caches, labels in batches
    ]
    pooled = sum(n for batch in terms for _, n in batch)
    if pooled == 0:
        return [0.0] * len(batches)
    for caches, labels in batches:
        for cache, lab in zip(caches, labels):
            accumulate_gradients(model, cache, lab.data, 1.0 / pooled, grads)
    losses = []
    for batch in terms:
        count = sum(n for _, n in batch)
        losses.append(sum(total for total, _ in batch) / count if count else 0.0)
    return losses


def _restyled_forward(
    model: ToySegmenter,
    image: np.ndarray,
    web_image: np.ndarray,
    injection: InjectionConfig,
    rng: np.random.Generator,
) -> ForwardCache:
    web_features = stage_features(model, web_image)
    try:
        return run_forward(model, image, injection=injection, web_features=web_features, rng=rng)
    except DegenerateAffinityError:
        logger.debug("Skipping injection for a degenerate affinity")
        return run_forward(model, image)


def _check_inputs(source: LabeledSet, web_images, web_labeled, cfg: TrainConfig) -> None:
    if len(source) == 0:
        raise ValidationError("source dataset is empty")
    if cfg.stage == "stage1_SI" and cfg.injection.active and not web_images:
        raise ValidationError("stage1_SI needs at least one web image")
    if cfg.stage == "stage2_PL":
        if web_labeled is None or len(web_labeled) == 0:
            raise ValidationError("stage2_PL needs web images with pseudo labels")


def train(
    model: ToySegmenter,
    source: LabeledSet,
    web_images: Sequence[np.ndarray] = (),
    cfg: TrainConfig = TrainConfig(),
    web_labeled: LabeledSet | None = None,
) -> TrainResult:
    """Run one training stage and return the trained copy of ``model`` and its loss trace.

    ``source_only`` ignores web data. ``stage1_SI`` pairs each source image with a uniformly
    drawn web image used only as a style reference (``web_images`` carry no labels).
    ``stage2_PL`` additionally draws pseudo-labeled web images from ``web_labeled`` (style
    references are then taken from its images). Its loss averages source and web pixels together.
    The optimizer state starts fresh on each call.
    """
    _check_inputs(source, web_images, web_labeled, cfg)
    model = model.copy()
    rng = np.random.default_rng(cfg.seed)
    trainable = ("w3", "b3") if cfg.classifier_only else PARAM_NAMES
    optimizer = SGD(cfg.learning_rate, cfg.momentum, cfg.weight_decay, trainable)
    style_refs: Sequence[np.ndarray] = ()
    if cfg.stage == "stage1_SI":
        style_refs = tuple(web_images)
    elif cfg.stage == "stage2_PL":
        style_refs = tuple(web_images) or web_labeled.images
    restyle = cfg.stage != "source_only" and cfg.injection.active and len(style_refs) > 0

    logger.info(
        "Training %s: %d iterations, lr=%g, injection=%s",
        cfg.stage,
        cfg.iterations,
        cfg.learning_rate,
        cfg.injection.method if restyle else "none",
    )
    trace: list[TraceRow] = []
    for iteration in range(cfg.iterations):
        grads = zero_gradients(model)
        picks = rng.integers(len(source), size=cfg.batch_size)
        caches = []
        if restyle:
            refs = rng.integers(len(style_refs), size=cfg.batch_size)
            for i, j in zip(picks, refs):
                caches.append(
                    _restyled_forward(model, source.images[i], style_refs[j], cfg.injection, rng)
                )
        else:
            caches = [run_forward(model, source.images[i]) for i in picks]
        batches = [(caches, [source.labels[i] for i in picks])]
        if cfg.stage == "stage2_PL":
            web_picks = rng.integers(len(web_labeled), size=cfg.batch_size)
            web_caches = [run_forward(model, web_labeled.images[i]) for i in web_picks]
            batches.append((web_caches, [web_labeled.labels[i] for i in web_picks]))
        losses = _batch_loss(model, batches, grads)
        loss_src, loss_web = losses[0], (losses[1] if len(losses) > 1 else 0.0)

        optimizer.step(model, grads)
        trace.append(TraceRow(iteration, loss_src, loss_web))
        if cfg.log_every and (iteration + 1) % cfg.log_every == 0:
            logger.info(
                "%s iteration %d: loss_src=%.4f loss_web=%.4f",
                cfg.stage,
                iteration + 1,
                loss_src,
                loss_web,
            )
    return TrainResult(model, trace)


def write_loss_trace(path: Path, trace: Sequence[TraceRow]) -> None:
    """CSV with header ``iteration,loss_src,loss_web``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["iteration", "loss_src", "loss_web"])
        for row in trace:
            writer.writerow([row.iteration, f"{row.loss_src:.8g}", f"{row.loss_web:.8g}"])
