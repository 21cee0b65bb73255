"""Manifest-driven ingestion of image corpora.

A manifest is JSON lines, one record per image::

    {"path": "images/0000.png", "split": "web", "note": "off-topic"}
    {"url": "https://example.org/a.png", "split": "web", "license": "CC0"}

Relative paths are resolved against the manifest's directory. Licenses are recorded, never
enforced; checking them is left to the operator.
"""

from __future__ import annotations

import hashlib
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from requests import Session
from requests import exceptions as req_exc

from .errors import ManifestError, MissingDataError
from .features import LabelMap
from .http import build_session, fetch_bytes
from .images import decode_image, read_image_png, read_label_png, write_image_png

# Module logger
logger = logging.getLogger(__name__)

SPLITS = ("source", "web", "target")
_FIELDS = {"path", "url", "split", "note", "license", "label", "domain"}

# Concurrent downloads
DEFAULT_MAX_WORKERS = 4


@dataclass(frozen=True)
class CorpusRecord:
    """One manifest entry; exactly one of ``path`` and ``url`` is set."""

    split: str
    path: Path | None = None
    url: str | None = None
    note: str = ""
    license: str = ""
    label: Path | None = None
    domain: str = ""

    @property
    def source(self) -> str:
        return str(self.path) if self.path is not None else self.url


@dataclass(frozen=True)
class CorpusManifest:
    records: tuple[CorpusRecord, ...]
    root: Path

    def __len__(self) -> int:
        return len(self.records)

    def by_split(self, split: str) -> tuple[CorpusRecord, ...]:
        return tuple(r for r in self.records if r.split == split)


@dataclass(frozen=True)
class CorpusItem:
    record: CorpusRecord
    image: np.ndarray


@dataclass(frozen=True)
class FetchFailure:
    record: CorpusRecord
    reason: str


@dataclass(frozen=True)
class IngestedCorpus:
    """Decoded images plus the records that could not be ingested."""

    items: tuple[CorpusItem, ...]
    failures: tuple[FetchFailure, ...]

    def images(self, split: str | None = None) -> list[np.ndarray]:
        return [it.image for it in self.items if split is None or it.record.split == split]


def _parse_record(raw: str, line_no: int, root: Path) -> CorpusRecord:
    try:
        obj = json.loads(raw)
    except json.JSONDecodeError as e:
        raise ManifestError(f"invalid JSON ({e.msg})", line_no) from e
    if not isinstance(obj, dict):
        raise ManifestError("record must be a JSON object", line_no)
    unknown = set(obj) - _FIELDS
    if unknown:
        raise ManifestError(f"unknown fields {sorted(unknown)}", line_no)
    if ("path" in obj) == ("url" in obj):
        raise ManifestError("record needs exactly one of 'path' and 'url'", line_no)
    split = obj.get("split")
    if split not in SPLITS:
        raise ManifestError(f"split must be one of {SPLITS}, got {split!r}", line_no)
    path = root / obj["path"] if "path" in obj else None
    label = root / obj["label"] if obj.get("label") else None
    return CorpusRecord(
        split=split,
        path=path,
        url=obj.get("url"),
        note=str(obj.get("note", "")),
        license=str(obj.get("license", "")),
        label=label,
        domain=str(obj.get("domain", "")),
    )


def load_manifest(path: Path) -> CorpusManifest:
    """Parse a JSON-lines manifest. Blank lines are skipped.

    Raises:
        MissingDataError: If the manifest does not exist.
        ManifestError: On a malformed record (with its 1-based line number) or a duplicate
            path or URL.
    """
    path = Path(path)
    if not path.exists():
        raise MissingDataError(path, "run gen-data first or check the data paths")
    root = path.parent
    records: list[CorpusRecord] = []
    seen: dict[str, int] = {}
    with path.open() as f:
        for line_no, raw in enumerate(f, start=1):
            if not raw.strip():
                continue
            record = _parse_record(raw, line_no, root)
            key = record.source
            if key in seen:
                raise ManifestError(f"duplicate entry {key} (first on line {seen[key]})", line_no)
            seen[key] = line_no
            records.append(record)
    logger.debug("Loaded %d manifest records from %s", len(records), path)
    return CorpusManifest(tuple(records), root)


def _ingest(
    record: CorpusRecord,
    dest: Path | None,
    session: Session,
    cache_root: Path | None,
) -> np.ndarray:
    if record.path is not None:
        return read_image_png(record.path)
    image = decode_image(fetch_bytes(record.url, session, cache_root=cache_root))
    if dest is not None:
        name = hashlib.sha256(record.url.encode("utf-8")).hexdigest()[:16]
        write_image_png(Path(dest) / record.split / f"{name}.png", image)
    return image


def fetch_corpus(
    manifest: CorpusManifest,
    dest: Path | None = None,
    max_workers: int = DEFAULT_MAX_WORKERS,
    session: Session | None = None,
    cache_root: Path | None = None,
) -> IngestedCorpus:
    """Resolve every record to a decoded image.

    Local records are read in place; URL records are downloaded (with retry and cache) and,
    when ``dest`` is given, stored there as PNG. A record that fails is logged and recorded in
    ``failures``; it never aborts the batch. Item order follows the manifest.
    """
    session = session or build_session()

    def work(record: CorpusRecord):
        try:
            return _ingest(record, dest, session, cache_root), None
        except (OSError, ValueError, req_exc.RequestException) as e:
            logger.warning("Failed to ingest %s: %s", record.source, e)
            return None, f"{type(e).__name__}: {e}"

    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        results = list(pool.map(work, manifest.records))

    items, failures = [], []
    for record, (image, reason) in zip(manifest.records, results):
        if reason is None:
            items.append(CorpusItem(record, image))
        else:
            failures.append(FetchFailure(record, reason))
    logger.info("Ingested %d records (%d failed)", len(items), len(failures))
    return IngestedCorpus(tuple(items), tuple(failures))


def load_labels(corpus: IngestedCorpus, num_classes: int) -> list[LabelMap]:
    """Label maps of every item, which must all reference one.

    Raises:
        MissingDataError: If an item has no label reference or the file is missing.
    """
    labels = []
    for item in corpus.items:
        label_path = item.record.label
        if label_path is None or not label_path.exists():
            raise MissingDataError(label_path or item.record.source, "label map not found")
        labels.append(read_label_png(label_path, num_classes))
    return labels
