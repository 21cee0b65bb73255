"""PNG reading and writing for images and label maps."""

from __future__ import annotations

import io
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import ShapeError
from .features import LabelMap


def to_uint8(image: np.ndarray) -> np.ndarray:
    """Quantize a float image in [0, 1] to 8 bits."""
    return np.round(np.clip(image, 0.0, 1.0) * 255.0).astype(np.uint8)


def write_image_png(path: Path, image: np.ndarray) -> None:
    """Write an HxWx3 float image in [0, 1] as 8-bit RGB PNG."""
    if image.ndim != 3 or image.shape[2] != 3:
        raise ShapeError(f"expected an HxWx3 image, got shape {image.shape}")
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(to_uint8(image)).save(path, format="PNG")


def decode_image(payload: bytes) -> np.ndarray:
    """Decode PNG/JPEG bytes to an HxWx3 float32 image in [0, 1]."""
    with Image.open(io.BytesIO(payload)) as img:
        rgb = np.asarray(img.convert("RGB"), dtype=np.float32)
    return rgb / 255.0


def read_image_png(path: Path) -> np.ndarray:
    """Read an image file as an HxWx3 float32 array in [0, 1]."""
    return decode_image(Path(path).read_bytes())


def write_label_png(path: Path, labels: LabelMap) -> None:
    """Write a label map as 8-bit single-channel PNG (IGNORE stays 255)."""
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(np.ascontiguousarray(labels.data)).save(path, format="PNG")


def read_label_png(path: Path, num_classes: int) -> LabelMap:
    """Read an 8-bit single-channel label PNG."""
    with Image.open(path) as img:
        if img.mode not in ("L", "P"):
            raise ShapeError(f"{path}: label PNG must be single-channel, got mode {img.mode}")
        data = np.asarray(img, dtype=np.uint8)
    return LabelMap(data, num_classes)
