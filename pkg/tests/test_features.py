"""Tests for the shared tensor types."""

import numpy as np
import pytest

from wedge_kit.errors import ShapeError, ValidationError
from wedge_kit.features import (
    IGNORE,
    FeatureMap,
    FlatFeatures,
    LabelMap,
    ProbabilityMap,
    flatten,
    unflatten,
)


class TestFlatten:
    """Tests for flatten and unflatten."""

    def test_single_pixel(self):
        """Test that a 1x1 map becomes one row."""
        rows = flatten(FeatureMap(np.array([[[1.0, 2.0, 3.0]]])))
        np.testing.assert_array_equal(rows.data, [[1.0, 2.0, 3.0]])

    def test_row_major_layout(self):
        """Test that pixels are laid out row by row."""
        rows = flatten(FeatureMap(np.array([[[5.0]], [[7.0]]])))
        np.testing.assert_array_equal(rows.data, [[5.0], [7.0]])

    def test_round_trip(self):
        """Test that unflatten inverts flatten on a random map."""
        fmap = FeatureMap(np.random.default_rng(0).standard_normal((4, 3, 2)))
        back = unflatten(flatten(fmap), 4, 3)
        np.testing.assert_array_equal(back.data, fmap.data)

    def test_unflatten_count_mismatch(self):
        """Test that a row count that does not fit the grid is rejected."""
        with pytest.raises(ShapeError, match="3 rows"):
            unflatten(FlatFeatures(np.ones((3, 2))), 2, 2)

    def test_unflatten_single_row(self):
        """Test the 1x1 identity case."""
        fmap = unflatten(FlatFeatures(np.array([[4.0, 5.0]])), 1, 1)
        assert (fmap.height, fmap.width, fmap.channels) == (1, 1, 2)


class TestFeatureMap:
    """Tests for FeatureMap validation."""

    def test_stored_read_only_float32(self):
        """Test that data is copied to a read-only float32 array."""
        src = np.zeros((2, 2, 3))
        fmap = FeatureMap(src)
        src[0, 0, 0] = 1.0

        assert fmap.data.dtype == np.float32
        assert fmap.data[0, 0, 0] == 0.0
        with pytest.raises(ValueError):
            fmap.data[0, 0, 0] = 2.0

    def test_rejects_non_finite(self):
        """Test that NaN values are rejected."""
        with pytest.raises(ValidationError):
            FeatureMap(np.full((1, 1, 2), np.nan))

    def test_rejects_wrong_rank(self):
        """Test that a 2-D array is not a feature map."""
        with pytest.raises(ShapeError):
            FeatureMap(np.zeros((2, 2)))


class TestProbabilityMap:
    """Tests for ProbabilityMap validation."""

    def test_accepts_simplex(self):
        """Test a valid two-class map."""
        probs = ProbabilityMap(np.array([[[0.25, 0.75]]]))
        assert probs.num_classes == 2

    def test_rejects_bad_sum(self):
        """Test that rows not summing to one are rejected."""
        with pytest.raises(ValidationError, match="sum to 1"):
            ProbabilityMap(np.array([[[0.5, 0.6]]]))

    def test_rejects_negative(self):
        """Test that negative probabilities are rejected."""
        with pytest.raises(ValidationError):
            ProbabilityMap(np.array([[[-0.1, 1.1]]]))

    def test_argmax_ties_to_lowest(self):
        """Test that argmax ties resolve to the lowest class id."""
        probs = ProbabilityMap(np.array([[[0.4, 0.4, 0.2], [0.2, 0.4, 0.4]]]))
        np.testing.assert_array_equal(probs.argmax(), [[0, 1]])


class TestLabelMap:
    """Tests for LabelMap validation."""

    def test_ignore_allowed(self):
        """Test that IGNORE is accepted alongside valid ids."""
        labels = LabelMap(np.array([[0, IGNORE], [1, 1]]), 2)
        assert labels.labeled_fraction() == 0.75
        np.testing.assert_array_equal(labels.labeled_mask, [[True, False], [True, True]])

    def test_rejects_out_of_range_id(self):
        """Test that an id >= num_classes that is not IGNORE is rejected."""
        with pytest.raises(ValidationError, match="out of range"):
            LabelMap(np.array([[0, 3]]), 3)

    def test_rejects_values_above_byte(self):
        """Test that values above 255 are rejected before conversion."""
        with pytest.raises(ValidationError):
            LabelMap(np.array([[300]]), 2)
