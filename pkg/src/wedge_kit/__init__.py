"""Web-image style injection and pseudo-label self-training for segmentation."""

__all__ = [
    "affinity",
    "bench",
    "cli",
    "config",
    "corpus",
    "errors",
    "features",
    "http",
    "images",
    "metrics",
    "model",
    "pipeline",
    "pseudo_label",
    "style_injection",
    "synth_data",
    "train",
]
