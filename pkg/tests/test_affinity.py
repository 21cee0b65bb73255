"""Tests for the affinity constructions."""

import numpy as np
import pytest

from wedge_kit.affinity import (
    AffinityConfig,
    AffinityMatrix,
    build_affinity,
    cosine_affinity,
    knn_affinity,
    subsample_web,
)
from wedge_kit.errors import ConfigError, ShapeError
from wedge_kit.features import FlatFeatures


def rows(*vectors) -> FlatFeatures:
    return FlatFeatures(np.array(vectors, dtype=np.float64))


class TestCosineAffinity:
    """Tests for the continuous affinity."""

    def test_identical_vectors(self):
        """Test that identical unit vectors have affinity 1."""
        aff = cosine_affinity(rows((1, 0)), rows((1, 0)), AffinityConfig())
        np.testing.assert_allclose(aff.data, [[1.0]])

    def test_orthogonal_vectors(self):
        """Test that orthogonal vectors have affinity 0."""
        aff = cosine_affinity(rows((1, 0)), rows((0, 1)), AffinityConfig())
        np.testing.assert_allclose(aff.data, [[0.0]], atol=1e-12)

    def test_diagonal_vector(self):
        """Test the 45 degree case against 1/sqrt(2)."""
        aff = cosine_affinity(rows((1, 0)), rows((1, 1)), AffinityConfig())
        np.testing.assert_allclose(aff.data, [[0.70710678]], atol=1e-8)

    def test_zero_feature_gets_zero_affinity(self):
        """Test that the epsilon floor keeps zero rows at zero affinity."""
        aff = cosine_affinity(rows((0, 0), (1, 0)), rows((1, 0)), AffinityConfig())
        np.testing.assert_allclose(aff.data, [[0.0], [1.0]])

    def test_values_within_unit_interval(self):
        """Test that every entry lies in [-1, 1] for random features."""
        rng = np.random.default_rng(3)
        src = FlatFeatures(rng.standard_normal((20, 5)))
        web = FlatFeatures(rng.standard_normal((30, 5)))

        aff = cosine_affinity(src, web, AffinityConfig())

        assert aff.data.shape == (20, 30)
        assert aff.data.min() >= -1.0 and aff.data.max() <= 1.0

    def test_swapping_inputs_transposes(self):
        """Test that cos(A, B) equals cos(B, A) transposed."""
        rng = np.random.default_rng(4)
        a = FlatFeatures(rng.standard_normal((12, 6)))
        b = FlatFeatures(rng.standard_normal((9, 6)))

        ab = cosine_affinity(a, b, AffinityConfig()).data
        ba = cosine_affinity(b, a, AffinityConfig()).data

        np.testing.assert_allclose(ab, ba.T, atol=1e-6)

    def test_invariant_to_row_scaling(self):
        """Test that positive per-row scale factors leave every entry unchanged."""
        rng = np.random.default_rng(5)
        a = rng.standard_normal((12, 6))
        b = rng.standard_normal((9, 6))
        base = cosine_affinity(FlatFeatures(a), FlatFeatures(b), AffinityConfig()).data

        scaled_a = FlatFeatures(a * rng.uniform(0.1, 10.0, (12, 1)))
        scaled_b = FlatFeatures(b * rng.uniform(0.1, 10.0, (9, 1)))
        scaled = cosine_affinity(scaled_a, scaled_b, AffinityConfig()).data

        np.testing.assert_allclose(scaled, base, atol=1e-6)

    def test_channel_mismatch(self):
        """Test that differing channel counts are rejected."""
        with pytest.raises(ShapeError, match="channel mismatch"):
            cosine_affinity(rows((1, 0)), rows((1, 0, 0)), AffinityConfig())

    def test_subsample_stride(self):
        """Test that a stride keeps every s-th web row."""
        web = FlatFeatures(np.arange(10, dtype=np.float64).reshape(5, 2) + 1)
        aff = cosine_affinity(rows((1, 0)), web, AffinityConfig(subsample_stride=2))

        assert aff.cols == 3
        np.testing.assert_array_equal(subsample_web(web, 2).data, web.data[::2])


class TestKnnAffinity:
    """Tests for the discrete affinity."""

    def test_nearest_is_identical_vector(self):
        """Test that k=1 picks the identical web vector."""
        aff = knn_affinity(rows((1, 0)), rows((1, 0), (0, 1)), AffinityConfig(mode="knn", k=1))
        np.testing.assert_array_equal(aff.data, [[1.0, 0.0]])

    def test_k_equal_to_web_count(self):
        """Test that k = N_w selects every web row."""
        aff = knn_affinity(rows((1, 0)), rows((1, 0), (0, 1)), AffinityConfig(mode="knn", k=2))
        np.testing.assert_array_equal(aff.data, [[1.0, 1.0]])

    def test_ranking_by_cosine(self):
        """Test that the higher-cosine web row wins."""
        high = (0.9, np.sqrt(1 - 0.81))
        low = (0.1, np.sqrt(1 - 0.01))
        aff = knn_affinity(rows((1, 0)), rows(high, low), AffinityConfig(mode="knn", k=1))
        np.testing.assert_array_equal(aff.data, [[1.0, 0.0]])

    def test_ties_go_to_lowest_index(self):
        """Test that equal similarities are broken by the lowest web index."""
        aff = knn_affinity(
            rows((1, 0)), rows((0, 1), (1, 1), (1, 1)), AffinityConfig(mode="knn", k=1)
        )
        np.testing.assert_array_equal(aff.data, [[0.0, 1.0, 0.0]])

    def test_each_row_has_k_ones(self):
        """Test that every source row selects exactly k web rows."""
        rng = np.random.default_rng(4)
        src = FlatFeatures(rng.standard_normal((15, 4)))
        web = FlatFeatures(rng.standard_normal((25, 4)))

        aff = knn_affinity(src, web, AffinityConfig(mode="knn", k=3))

        np.testing.assert_array_equal(aff.data.sum(axis=1), np.full(15, 3.0))
        assert set(np.unique(aff.data)) <= {0.0, 1.0}

    def test_k_larger_than_web(self):
        """Test that k > N_w is a configuration error."""
        with pytest.raises(ConfigError, match="exceeds"):
            knn_affinity(rows((1, 0)), rows((1, 0)), AffinityConfig(mode="knn", k=2))


class TestBuildAffinity:
    """Tests for dispatch and the matrix type."""

    def test_dispatch_on_mode(self):
        """Test that build_affinity follows the configured mode."""
        src, web = rows((1, 0)), rows((1, 0), (0, 1))
        assert build_affinity(src, web, AffinityConfig(mode="knn", k=1)).mode == "knn"
        assert build_affinity(src, web, AffinityConfig()).mode == "cosine"

    def test_unknown_mode(self):
        """Test that an unknown mode is rejected at configuration time."""
        with pytest.raises(ConfigError):
            AffinityConfig(mode="gaussian")

    def test_total_weight_and_scaling(self):
        """Test the element sum and scaling helper."""
        aff = AffinityMatrix(np.array([[1.0, -0.5], [0.25, 0.25]]))
        assert aff.total_weight == 1.0
        assert aff.scaled(2.0).total_weight == 2.0
