"""Tests for manifest parsing and corpus ingestion."""

import io
import json
from unittest.mock import Mock, patch

import numpy as np
import pytest
from PIL import Image
from requests.exceptions import ConnectionError

from wedge_kit.corpus import fetch_corpus, load_labels, load_manifest
from wedge_kit.errors import ManifestError, MissingDataError
from wedge_kit.features import LabelMap
from wedge_kit.http import download
from wedge_kit.images import write_image_png, write_label_png


def write_manifest(path, records):
    path.write_text("".join(json.dumps(r) + "\n" for r in records))
    return path


def png_bytes(color=(255, 0, 0)):
    buffer = io.BytesIO()
    Image.new("RGB", (3, 2), color).save(buffer, format="PNG")
    return buffer.getvalue()


@pytest.fixture(autouse=True)
def no_backoff():
    """Skip the real backoff sleeps between attempts."""
    with patch.object(download.retry, "sleep"):
        yield


class TestLoadManifest:
    """Tests for load_manifest."""

    def test_empty_manifest(self, tmp_path):
        """Test that an empty manifest yields an empty corpus."""
        manifest = load_manifest(write_manifest(tmp_path / "m.jsonl", []))
        assert len(manifest) == 0
        corpus = fetch_corpus(manifest, session=Mock())
        assert corpus.items == () and corpus.failures == ()

    def test_relative_paths_and_blank_lines(self, tmp_path):
        """Test that paths resolve against the manifest directory and blank lines are skipped."""
        path = tmp_path / "m.jsonl"
        path.write_text('{"path": "images/a.png", "split": "web", "note": "x"}\n\n')

        manifest = load_manifest(path)

        (record,) = manifest.records
        assert record.path == tmp_path / "images" / "a.png"
        assert record.split == "web" and record.note == "x"

    def test_duplicate_entry(self, tmp_path):
        """Test that a repeated path is rejected and named."""
        path = write_manifest(
            tmp_path / "m.jsonl",
            [{"path": "a.png", "split": "web"}, {"path": "a.png", "split": "web"}],
        )
        with pytest.raises(ManifestError, match="duplicate entry .*a.png") as info:
            load_manifest(path)
        assert info.value.line == 2

    def test_invalid_json_reports_line(self, tmp_path):
        """Test that parse errors carry the 1-based line number."""
        path = tmp_path / "m.jsonl"
        path.write_text('{"path": "a.png", "split": "web"}\n{not json\n')
        with pytest.raises(ManifestError, match="^line 2: invalid JSON"):
            load_manifest(path)

    @pytest.mark.parametrize(
        "record, message",
        [
            ({"path": "a.png", "split": "web", "colour": "red"}, "unknown fields"),
            ({"path": "a.png", "url": "https://example.com/a.png", "split": "web"}, "exactly one"),
            ({"split": "web"}, "exactly one"),
            ({"path": "a.png", "split": "validation"}, "split must be"),
        ],
    )
    def test_invalid_records(self, tmp_path, record, message):
        """Test that malformed records are rejected with a reason."""
        path = write_manifest(tmp_path / "m.jsonl", [record])
        with pytest.raises(ManifestError, match=message):
            load_manifest(path)

    def test_missing_manifest(self, tmp_path):
        """Test that a missing manifest names the path."""
        with pytest.raises(MissingDataError, match="missing required path"):
            load_manifest(tmp_path / "nope.jsonl")


class TestFetchCorpus:
    """Tests for fetch_corpus."""

    def test_local_png(self, tmp_path):
        """Test that a local image is decoded."""
        write_image_png(tmp_path / "a.png", np.full((2, 3, 3), 0.5))
        manifest = load_manifest(
            write_manifest(tmp_path / "m.jsonl", [{"path": "a.png", "split": "web"}])
        )

        corpus = fetch_corpus(manifest, session=Mock())

        assert len(corpus.items) == 1
        assert corpus.images("web")[0].shape == (2, 3, 3)
        assert corpus.images("source") == []

    def test_url_download_is_stored(self, tmp_path):
        """Test that a URL record is downloaded, decoded and written to dest."""
        session = Mock()
        session.get.return_value.content = png_bytes()
        manifest = load_manifest(
            write_manifest(
                tmp_path / "m.jsonl", [{"url": "https://example.com/a.png", "split": "web"}]
            )
        )

        corpus = fetch_corpus(
            manifest, dest=tmp_path / "out", session=session, cache_root=tmp_path / "cache"
        )

        (image,) = corpus.images()
        np.testing.assert_allclose(image[0, 0], [1.0, 0.0, 0.0])
        assert len(list((tmp_path / "out" / "web").glob("*.png"))) == 1

    def test_failures_are_recorded(self, tmp_path, caplog):
        """Test that unreachable URLs and missing files do not abort the batch."""
        write_image_png(tmp_path / "ok.png", np.zeros((2, 2, 3)))
        session = Mock()
        session.get.side_effect = ConnectionError("unreachable")
        manifest = load_manifest(
            write_manifest(
                tmp_path / "m.jsonl",
                [
                    {"url": "https://example.com/a.png", "split": "web"},
                    {"path": "gone.png", "split": "web"},
                    {"path": "ok.png", "split": "web"},
                ],
            )
        )

        corpus = fetch_corpus(manifest, session=session, cache_root=tmp_path / "cache")

        assert len(corpus.items) == 1
        assert [f.record.source for f in corpus.failures] == [
            "https://example.com/a.png",
            str(tmp_path / "gone.png"),
        ]
        assert corpus.failures[0].reason.startswith("ConnectionError")
        assert sum(r.levelname == "WARNING" for r in caplog.records) == 2


class TestLoadLabels:
    """Tests for load_labels."""

    def test_labels_follow_items(self, tmp_path):
        """Test that label references are read in item order."""
        write_image_png(tmp_path / "a.png", np.zeros((2, 2, 3)))
        write_label_png(tmp_path / "a_label.png", LabelMap(np.array([[0, 1], [1, 0]]), 2))
        manifest = load_manifest(
            write_manifest(
                tmp_path / "m.jsonl", [{"path": "a.png", "label": "a_label.png", "split": "source"}]
            )
        )

        (labels,) = load_labels(fetch_corpus(manifest, session=Mock()), num_classes=2)

        np.testing.assert_array_equal(labels.data, [[0, 1], [1, 0]])

    def test_missing_label_reference(self, tmp_path):
        """Test that an item without a label map is reported."""
        write_image_png(tmp_path / "a.png", np.zeros((2, 2, 3)))
        manifest = load_manifest(
            write_manifest(tmp_path / "m.jsonl", [{"path": "a.png", "split": "source"}])
        )
        with pytest.raises(MissingDataError, match="label map not found"):
            load_labels(fetch_corpus(manifest, session=Mock()), num_classes=2)
