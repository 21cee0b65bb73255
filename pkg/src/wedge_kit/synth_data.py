"""Procedural multi-domain segmentation scenes.

Scenes are flat-coloured shapes on a background; every foreground class has its own base colour
and preferred shape. Domains differ only in appearance (``DomainShift``), so a label map is valid
for every shifted copy of its scene. Web scenes additionally carry distractor shapes with colours
outside the class palette, whose pixels are IGNORE in the ground truth.
"""

from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Literal

import numpy as np

from .errors import ConfigError, ShapeError
from .features import IGNORE, LabelMap
from .images import write_image_png, write_label_png

# Module logger
logger = logging.getLogger(__name__)

ShapeKind = Literal["rectangle", "circle", "stripe"]
SHAPE_KINDS: tuple[str, ...] = ("rectangle", "circle", "stripe")

# Base colours: background first, then one per foreground class
DEFAULT_PALETTE: tuple[tuple[float, float, float], ...] = (
    (0.45, 0.45, 0.45),
    (0.85, 0.20, 0.20),
    (0.20, 0.70, 0.25),
    (0.20, 0.30, 0.85),
    (0.90, 0.80, 0.20),
    (0.70, 0.25, 0.75),
    (0.20, 0.75, 0.80),
    (0.95, 0.55, 0.15),
)

# Colours used for distractor content (never a class colour)
DISTRACTOR_PALETTE: tuple[tuple[float, float, float], ...] = (
    (0.05, 0.05, 0.05),
    (0.98, 0.98, 0.98),
    (0.55, 0.35, 0.15),
    (0.60, 0.90, 0.55),
)

# Per-shape colour jitter and per-pixel texture noise
COLOR_JITTER = 0.04
TEXTURE_NOISE = 0.02

SPLITS = ("source", "web", "target")
_SPLIT_CODES = {"source": 0, "web": 1, "target": 2, "offtopic": 3}


@dataclass(frozen=True)
class SceneSpec:
    """What a scene may contain.

    Attributes:
        num_classes: Classes including the background (class 0).
        height: Canvas height in pixels.
        width: Canvas width in pixels.
        palette: One RGB base colour per class.
        shapes: Preferred shape of each class (the background entry is unused).
        density: Mean number of shapes per foreground class. Every foreground class gets at
            least one shape when positive; 0 yields background-only scenes.
        distractors: Mean number of distractor shapes (web scenes).
    """

    num_classes: int = 5
    height: int = 32
    width: int = 32
    palette: tuple[tuple[float, float, float], ...] = DEFAULT_PALETTE[:5]
    shapes: tuple[str, ...] = ("rectangle", "rectangle", "circle", "stripe", "rectangle")
    density: float = 2.0
    distractors: float = 0.0

    def __post_init__(self):
        if self.num_classes < 2:
            raise ConfigError(f"num_classes must be >= 2, got {self.num_classes}")
        if self.num_classes > IGNORE:
            raise ConfigError(f"num_classes must be < {IGNORE}, got {self.num_classes}")
        if self.height < 8 or self.width < 8:
            raise ConfigError(f"canvas must be at least 8 x 8, got {self.height} x {self.width}")
        if len(self.palette) != self.num_classes or len(self.shapes) != self.num_classes:
            raise ConfigError("palette and shapes need one entry per class")
        colors = np.asarray(self.palette, dtype=np.float64)
        if colors.shape != (self.num_classes, 3) or colors.min() < 0 or colors.max() > 1:
            raise ConfigError("palette entries must be RGB triples in [0, 1]")
        unknown = set(self.shapes) - set(SHAPE_KINDS)
        if unknown:
            raise ConfigError(f"unknown shape kinds: {sorted(unknown)}")
        if self.density < 0 or self.distractors < 0:
            raise ConfigError("density and distractors must be non-negative")


def default_scene_spec(num_classes: int = 5, height: int = 32, width: int = 32) -> SceneSpec:
    """Scene spec with the shipped palette and shape assignment."""
    if not 2 <= num_classes <= len(DEFAULT_PALETTE):
        raise ConfigError(
            f"the default palette supports 2..{len(DEFAULT_PALETTE)} classes, got {num_classes}"
        )
    shapes = ("rectangle",) + tuple(SHAPE_KINDS[i % 3] for i in range(num_classes - 1))
    return SceneSpec(
        num_classes=num_classes,
        height=height,
        width=width,
        palette=DEFAULT_PALETTE[:num_classes],
        shapes=shapes,
    )


def _shape_mask(kind: str, height: int, width: int, rng: np.random.Generator) -> np.ndarray:
    yy, xx = np.ogrid[:height, :width]
    size = min(height, width)
    if kind == "circle":
        radius = rng.uniform(size / 16, size / 6)
        cy, cx = rng.uniform(0, height), rng.uniform(0, width)
        return (yy - cy) ** 2 + (xx - cx) ** 2 <= radius**2
    if kind == "stripe":
        thickness = int(rng.integers(2, max(3, size // 10) + 1))
        length = int(rng.integers(size // 4, size * 3 // 4 + 1))
        if rng.random() < 0.5:
            y0 = int(rng.integers(0, height - thickness + 1))
            x0 = int(rng.integers(0, width - length + 1))
            return (yy >= y0) & (yy < y0 + thickness) & (xx >= x0) & (xx < x0 + length)
        y0 = int(rng.integers(0, height - length + 1))
        x0 = int(rng.integers(0, width - thickness + 1))
        return (yy >= y0) & (yy < y0 + length) & (xx >= x0) & (xx < x0 + thickness)
    h = int(rng.integers(size // 8, size * 3 // 8 + 1))
    w = int(rng.integers(size // 8, size * 3 // 8 + 1))
    y0 = int(rng.integers(0, height - h + 1))
    x0 = int(rng.integers(0, width - w + 1))
    return (yy >= y0) & (yy < y0 + h) & (xx >= x0) & (xx < x0 + w)


def _render(
    spec: SceneSpec,
    items: list[tuple[int, str, np.ndarray]],
    rng: np.random.Generator,
) -> tuple[np.ndarray, np.ndarray]:
    """Paint ``(label, kind, colour)`` items in order over the background.

    A class whose shapes were all occluded gets its last shape repainted on top.
    """
    image = np.empty((spec.height, spec.width, 3))
    image[...] = spec.palette[0]
    labels = np.zeros((spec.height, spec.width), dtype=np.uint8)
    last_shape: dict[int, tuple[np.ndarray, np.ndarray]] = {}
    for label, kind, color in items:
        mask = _shape_mask(kind, spec.height, spec.width, rng)
        shade = np.clip(color + rng.normal(0.0, COLOR_JITTER, size=3), 0.0, 1.0)
        image[mask] = shade
        labels[mask] = label
        if label != IGNORE:
            last_shape[label] = (mask, shade)
    for label, (mask, shade) in sorted(last_shape.items()):
        if not np.any(labels == label):
            image[mask] = shade
            labels[mask] = label
    image += rng.normal(0.0, TEXTURE_NOISE, size=image.shape)
    return np.clip(image, 0.0, 1.0).astype(np.float32), labels


def _class_items(spec: SceneSpec, rng: np.random.Generator) -> list[tuple[int, str, np.ndarray]]:
    items = []
    if spec.density > 0:
        for label in range(1, spec.num_classes):
            count = max(1, int(rng.poisson(spec.density)))
            color = np.asarray(spec.palette[label])
            items.extend((label, spec.shapes[label], color) for _ in range(count))
    return items


def _distractor_items(count: int, rng: np.random.Generator) -> list[tuple[int, str, np.ndarray]]:
    return [
        (
            IGNORE,
            SHAPE_KINDS[int(rng.integers(len(SHAPE_KINDS)))],
            np.asarray(DISTRACTOR_PALETTE[int(rng.integers(len(DISTRACTOR_PALETTE)))]),
        )
        for _ in range(count)
    ]


def generate_scene(spec: SceneSpec, seed: int) -> tuple[np.ndarray, LabelMap]:
    """Render one scene.

    Shapes are painted in a random order, so later shapes occlude earlier ones and each pixel
    carries the class of the topmost shape. Distractor pixels (``spec.distractors > 0``) are
    labelled IGNORE.

    Returns:
        A float32 H x W x 3 image in [0, 1] and its label map.
    """
    rng = np.random.default_rng(seed)
    items = _class_items(spec, rng)
    if spec.distractors > 0:
        items += _distractor_items(int(rng.poisson(spec.distractors)), rng)
    order = rng.permutation(len(items))
    image, labels = _render(spec, [items[i] for i in order], rng)
    return image, LabelMap(labels, spec.num_classes)


def generate_offtopic_scene(spec: SceneSpec, seed: int) -> np.ndarray:
    """Distractor content only (no class shapes), used as an unrelated style reference."""
    rng = np.random.default_rng(seed)
    count = max(1, int(rng.poisson(spec.density * (spec.num_classes - 1))))
    image, _ = _render(spec, _distractor_items(count, rng), rng)
    return image


@dataclass(frozen=True)
class DomainShift:
    """Appearance-only change of domain.

    Applied in order: rotation of colours about the grey axis by ``palette_rotation`` radians,
    contrast exponent, per-channel ``gain * x + bias``, additive Gaussian noise, clamp to [0, 1].
    """

    name: str = "identity"
    gain: tuple[float, float, float] = (1.0, 1.0, 1.0)
    bias: tuple[float, float, float] = (0.0, 0.0, 0.0)
    contrast: float = 1.0
    noise_sigma: float = 0.0
    palette_rotation: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "gain", tuple(float(g) for g in self.gain))
        object.__setattr__(self, "bias", tuple(float(b) for b in self.bias))
        if len(self.gain) != 3 or len(self.bias) != 3:
            raise ConfigError("gain and bias need one value per colour channel")
        if min(self.gain) <= 0:
            raise ConfigError(f"gains must be positive, got {self.gain}")
        if not self.contrast > 0:
            raise ConfigError(f"contrast exponent must be positive, got {self.contrast}")
        if self.noise_sigma < 0:
            raise ConfigError(f"noise_sigma must be non-negative, got {self.noise_sigma}")

    @property
    def is_identity(self) -> bool:
        return (
            self.gain == (1.0, 1.0, 1.0)
            and self.bias == (0.0, 0.0, 0.0)
            and self.contrast == 1.0
            and self.noise_sigma == 0.0
            and self.palette_rotation == 0.0
        )

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "gain": list(self.gain),
            "bias": list(self.bias),
            "contrast": self.contrast,
            "noise_sigma": self.noise_sigma,
            "palette_rotation": self.palette_rotation,
        }


def _grey_axis_rotation(angle: float) -> np.ndarray:
    axis = np.full(3, 1.0 / np.sqrt(3.0))
    cross = np.array(
        [[0.0, -axis[2], axis[1]], [axis[2], 0.0, -axis[0]], [-axis[1], axis[0], 0.0]]
    )
    return np.eye(3) + np.sin(angle) * cross + (1.0 - np.cos(angle)) * (cross @ cross)


def apply_shift(image: np.ndarray, shift: DomainShift, seed: int) -> np.ndarray:
    """Apply ``shift`` to an H x W x 3 image; the identity shift returns an exact copy."""
    image = np.asarray(image)
    if image.ndim != 3 or image.shape[2] != 3:
        raise ShapeError(f"expected an H x W x 3 image, got shape {image.shape}")
    if shift.is_identity:
        return image.copy()
    out = image.astype(np.float64)
    if shift.palette_rotation:
        out = out @ _grey_axis_rotation(shift.palette_rotation).T
    if shift.contrast != 1.0:
        out = np.clip(out, 0.0, 1.0) ** shift.contrast
    out = out * np.asarray(shift.gain) + np.asarray(shift.bias)
    if shift.noise_sigma > 0:
        out = out + np.random.default_rng(seed).normal(0.0, shift.noise_sigma, size=out.shape)
    return np.clip(out, 0.0, 1.0).astype(image.dtype)


Interval = tuple[float, float]


@dataclass(frozen=True)
class ShiftFamily:
    """Box of shift parameters; gains and biases are drawn per channel from one interval."""

    name: str
    gain: Interval
    bias: Interval
    contrast: Interval
    noise_sigma: Interval
    palette_rotation: Interval

    def sample(self, rng: np.random.Generator) -> DomainShift:
        return DomainShift(
            name=self.name,
            gain=tuple(rng.uniform(*self.gain, size=3)),
            bias=tuple(rng.uniform(*self.bias, size=3)),
            contrast=float(rng.uniform(*self.contrast)),
            noise_sigma=float(rng.uniform(*self.noise_sigma)),
            palette_rotation=float(rng.uniform(*self.palette_rotation)),
        )

    def contains(self, shift: DomainShift) -> bool:
        """Whether ``shift`` could have been drawn from this family."""

        def inside(values, interval):
            low, high = interval
            return all(low <= v <= high for v in values)

        return (
            inside(shift.gain, self.gain)
            and inside(shift.bias, self.bias)
            and inside((shift.contrast,), self.contrast)
            and inside((shift.noise_sigma,), self.noise_sigma)
            and inside((shift.palette_rotation,), self.palette_rotation)
        )


def source_shift() -> DomainShift:
    return DomainShift(name="source")


def target_shifts() -> tuple[DomainShift, ...]:
    """The three held-out target domains; each lies outside the web and off-topic families."""
    return (
        DomainShift(
            name="dusk",
            gain=(0.75, 0.6, 0.85),
            bias=(0.02, 0.0, 0.08),
            contrast=1.7,
            noise_sigma=0.02,
            palette_rotation=0.35,
        ),
        DomainShift(
            name="fog",
            gain=(0.55, 0.55, 0.6),
            bias=(0.38, 0.38, 0.36),
            contrast=0.8,
            noise_sigma=0.03,
            palette_rotation=-0.25,
        ),
        DomainShift(
            name="rain",
            gain=(0.8, 0.9, 1.1),
            bias=(-0.05, 0.0, 0.05),
            contrast=1.15,
            noise_sigma=0.08,
            palette_rotation=0.6,
        ),
    )


WEB_FAMILY = ShiftFamily(
    name="web",
    gain=(0.5, 1.2),
    bias=(-0.1, 0.3),
    contrast=(0.7, 1.5),
    noise_sigma=(0.0, 0.06),
    palette_rotation=(-0.8, 0.8),
)

OFFTOPIC_FAMILY = ShiftFamily(
    name="offtopic",
    gain=(1.3, 1.9),
    bias=(-0.45, -0.2),
    contrast=(2.0, 3.0),
    noise_sigma=(0.08, 0.12),
    palette_rotation=(2.2, 3.0),
)


def sample_web_shift(rng: np.random.Generator) -> DomainShift:
    """Draw an appearance from the diverse web family."""
    return WEB_FAMILY.sample(rng)


def sample_offtopic_shift(rng: np.random.Generator) -> DomainShift:
    """Draw an appearance from a family unrelated to every target domain."""
    return OFFTOPIC_FAMILY.sample(rng)


def item_seed(seed: int, split: str, index: int) -> int:
    """Independent, reproducible seed of one generated item."""
    entropy = [seed, _SPLIT_CODES[split], index]
    return int(np.random.SeedSequence(entropy).generate_state(1)[0])


@dataclass(frozen=True)
class SplitPlan:
    """One split to generate.

    Attributes:
        name: Directory name under the data root (e.g. ``source``, ``target_fog``).
        split: Manifest split tag (``source``, ``web`` or ``target``).
        count: Number of images.
        shift: Fixed shift, or ``None`` to draw one per image with ``sampler``.
        sampler: Shift family for per-image draws.
        distractors: Mean distractor shapes per scene.
        offtopic: Render distractor-only scenes.
        note: Free text stored in every manifest record.
    """

    name: str
    split: str
    count: int
    shift: DomainShift | None = None
    sampler: Callable[[np.random.Generator], DomainShift] | None = None
    distractors: float = 0.0
    offtopic: bool = False
    note: str = ""
    seed_key: str = field(default="")

    def __post_init__(self):
        if self.split not in SPLITS:
            raise ConfigError(f"split must be one of {SPLITS}, got {self.split!r}")
        if self.count < 0:
            raise ConfigError(f"count must be non-negative, got {self.count}")
        if (self.shift is None) == (self.sampler is None):
            raise ConfigError("give exactly one of shift and sampler")
        if not self.seed_key:
            object.__setattr__(self, "seed_key", "offtopic" if self.offtopic else self.split)


def _generate_item(spec: SceneSpec, plan: SplitPlan, seed: int, index: int):
    s = item_seed(seed, plan.seed_key, index)
    rng = np.random.default_rng(s)
    shift = plan.shift if plan.shift is not None else plan.sampler(rng)
    scene_spec = spec
    if plan.distractors:
        scene_spec = replace(spec, distractors=plan.distractors)
    if plan.offtopic:
        clean, labels = generate_offtopic_scene(scene_spec, s), None
    else:
        clean, labels = generate_scene(scene_spec, s)
    return apply_shift(clean, shift, s + 1), labels, shift


def generate_split(
    root: Path,
    spec: SceneSpec,
    plan: SplitPlan,
    seed: int,
    write_labels: bool = True,
    max_workers: int = 4,
) -> Path:
    """Write ``plan.count`` images (and label maps) under ``root / plan.name``.

    Files are ``images/NNNN.png`` and ``labels/NNNN.png``; ``manifest.jsonl`` holds one record
    per image with ``path``, ``split``, ``note`` and, when written, ``label``. Items are rendered
    concurrently but each depends only on its own seed, so reruns are byte-identical.

    Returns:
        Path of the manifest.
    """
    split_dir = Path(root) / plan.name
    (split_dir / "images").mkdir(parents=True, exist_ok=True)
    if write_labels and not plan.offtopic:
        (split_dir / "labels").mkdir(parents=True, exist_ok=True)

    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        items = list(pool.map(lambda i: _generate_item(spec, plan, seed, i), range(plan.count)))

    manifest = split_dir / "manifest.jsonl"
    with manifest.open("w") as f:
        for index, (image, labels, shift) in enumerate(items):
            image_rel = Path("images") / f"{index:04d}.png"
            write_image_png(split_dir / image_rel, image)
            record = {"path": image_rel.as_posix(), "split": plan.split, "note": plan.note}
            if write_labels and labels is not None:
                label_rel = Path("labels") / f"{index:04d}.png"
                write_label_png(split_dir / label_rel, labels)
                record["label"] = label_rel.as_posix()
            record["domain"] = shift.name
            f.write(json.dumps(record, sort_keys=True) + "\n")
    logger.info("Wrote %d %s images to %s", plan.count, plan.name, split_dir)
    return manifest
