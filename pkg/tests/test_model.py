"""Tests for the toy segmenter, its losses and gradients."""

import numpy as np
import pytest

from wedge_kit.errors import EmptySupervisionError, ShapeError, ValidationError
from wedge_kit.features import IGNORE, LabelMap, ProbabilityMap
from wedge_kit.model import (
    SGD,
    ToySegmenter,
    backward,
    combined_loss,
    forward,
    load_checkpoint,
    loss_value,
    predict_labels,
    save_checkpoint,
    seg_loss,
    stage_features,
)
from wedge_kit.style_injection import InjectionConfig, InjectionTransform, random_orthogonal


@pytest.fixture
def model():
    return ToySegmenter.initialize(num_classes=3, seed=0, feature_channels=4)


@pytest.fixture
def image():
    return np.random.default_rng(1).random((5, 6, 3))


def numeric_gradient(model, image, labels, context, name, index, h=1e-6):
    param = getattr(model, name)
    original = param[index]
    param[index] = original + h
    plus = loss_value(model, image, labels, context)
    param[index] = original - h
    minus = loss_value(model, image, labels, context)
    param[index] = original
    return (plus - minus) / (2 * h)


class TestToySegmenter:
    """Tests for construction and the forward pass."""

    def test_initialize_is_seeded(self):
        """Test that equal seeds give equal weights."""
        a = ToySegmenter.initialize(num_classes=3, seed=7)
        b = ToySegmenter.initialize(num_classes=3, seed=7)
        for name, value in a.params().items():
            np.testing.assert_array_equal(value, b.params()[name])

    def test_inconsistent_shapes(self, model):
        """Test that mismatched weight shapes are rejected."""
        params = model.params()
        params["w3"] = np.zeros((5, 3))
        with pytest.raises(ShapeError):
            ToySegmenter(**params)

    def test_forward_is_a_distribution(self, model, image):
        """Test that the forward pass yields per-pixel probabilities."""
        probs = forward(model, image)
        assert (probs.height, probs.width, probs.num_classes) == (5, 6, 3)
        np.testing.assert_allclose(probs.data.sum(axis=-1), 1.0, atol=1e-6)

    def test_stage_shapes(self, model, image):
        """Test the per-stage feature shapes."""
        stages = stage_features(model, image)
        assert stages[0].shape == (5, 6, 3)
        assert stages[1].shape == (5, 6, 4)
        assert stages[2].shape == (5, 6, 4)

    def test_rejects_wrong_channels(self, model):
        """Test that a grayscale input is rejected."""
        with pytest.raises(ShapeError):
            forward(model, np.zeros((4, 4, 1)))

    def test_self_injection_at_input(self, model, image):
        """Test that restyling an image with itself does not change the prediction."""
        cfg = InjectionConfig(method="procrustes", injection_points=frozenset({0}))
        plain = forward(model, image)
        restyled = forward(model, image, cfg, image, np.random.default_rng(0))
        np.testing.assert_allclose(restyled.data, plain.data, atol=1e-4)

    def test_injection_none_matches_plain(self, model, image):
        """Test that method none ignores the web image."""
        cfg = InjectionConfig(method="none")
        web = np.random.default_rng(3).random((4, 4, 3))
        np.testing.assert_array_equal(
            forward(model, image, cfg, web, np.random.default_rng(0)).data,
            forward(model, image).data,
        )

    def test_predict_labels(self, model, image):
        """Test that predictions are the per-pixel argmax."""
        pred = predict_labels(model, image)
        np.testing.assert_array_equal(pred.data, forward(model, image).argmax())


class TestLosses:
    """Tests for the segmentation losses."""

    def test_uniform_two_class(self):
        """Test that a (0.5, 0.5) prediction costs ln 2."""
        probs = ProbabilityMap(np.array([[[0.5, 0.5]]]))
        assert seg_loss(probs, LabelMap(np.array([[0]]), 2)) == pytest.approx(np.log(2), abs=1e-6)

    def test_ignore_pixels_do_not_count(self):
        """Test that IGNORE pixels are excluded from the mean."""
        probs = ProbabilityMap(np.array([[[0.5, 0.5], [0.01, 0.99]]]))
        labels = LabelMap(np.array([[1, IGNORE]]), 2)
        assert seg_loss(probs, labels) == pytest.approx(np.log(2), abs=1e-6)

    def test_all_ignore_raises(self):
        """Test that a fully ignored map has no loss."""
        probs = ProbabilityMap(np.array([[[0.5, 0.5]]]))
        with pytest.raises(EmptySupervisionError):
            seg_loss(probs, LabelMap(np.array([[IGNORE]]), 2))

    def test_shape_mismatch(self):
        """Test that differing spatial sizes are rejected."""
        probs = ProbabilityMap(np.array([[[0.5, 0.5]]]))
        with pytest.raises(ShapeError):
            seg_loss(probs, LabelMap(np.array([[0, 1]]), 2))

    def test_combined_with_empty_pseudo_labels(self):
        """Test that an all-IGNORE web map contributes nothing."""
        probs = ProbabilityMap(np.array([[[0.5, 0.5]]]))
        labels = LabelMap(np.array([[0]]), 2)
        empty = LabelMap(np.array([[IGNORE]]), 2)
        assert combined_loss(probs, labels, probs, empty) == pytest.approx(seg_loss(probs, labels))

    def test_combined_adds_both_terms(self):
        """Test that the combined loss is the sum of the two means."""
        probs = ProbabilityMap(np.array([[[0.5, 0.5]]]))
        labels = LabelMap(np.array([[0]]), 2)
        assert combined_loss(probs, labels, probs, labels) == pytest.approx(2 * np.log(2), abs=1e-6)

    def test_zero_head_is_uniform(self, image):
        """Test that a zero classifier predicts the uniform distribution."""
        model = ToySegmenter.initialize(num_classes=4, seed=0, feature_channels=4)
        model.w3[:] = 0.0
        model.b3[:] = 0.0
        labels = LabelMap(np.zeros((5, 6), dtype=np.uint8), 4)
        assert loss_value(model, image, labels) == pytest.approx(np.log(4))


class TestBackward:
    """Tests for the analytic gradients."""

    @pytest.mark.parametrize("with_context", [False, True])
    @pytest.mark.parametrize("seed", range(20))
    def test_matches_finite_differences(self, seed, with_context):
        """Test analytic gradients against central differences, with and without injection."""
        rng = np.random.default_rng(seed)
        model = ToySegmenter.initialize(num_classes=3, seed=seed, feature_channels=4)
        image = rng.random((5, 6, 3))
        data = rng.integers(0, 3, size=(5, 6))
        data[0, :2] = IGNORE
        labels = LabelMap(data, 3)
        context = {}
        if with_context:
            context = {
                0: InjectionTransform(random_orthogonal(3, rng).data.T, np.zeros(3), "procrustes"),
                1: InjectionTransform(random_orthogonal(4, rng).data.T, np.zeros(4), "procrustes"),
                2: InjectionTransform(
                    np.diag(rng.uniform(0.5, 2.0, 4)), rng.normal(size=4), "adain"
                ),
            }

        loss, grads = backward(model, image, labels, context)

        assert loss == pytest.approx(loss_value(model, image, labels, context))
        for name, value in model.params().items():
            indices = list(np.ndindex(value.shape))
            for pick in rng.choice(len(indices), size=min(5, len(indices)), replace=False):
                index = indices[pick]
                expected = numeric_gradient(model, image, labels, context, name, index)
                np.testing.assert_allclose(grads[name][index], expected, rtol=1e-4, atol=1e-7)

    def test_label_shape_mismatch(self, model, image):
        """Test that labels of another size are rejected."""
        with pytest.raises(ShapeError):
            backward(model, image, LabelMap(np.zeros((2, 2), dtype=np.uint8), 3))


class TestSGD:
    """Tests for the optimizer."""

    def _tiny_model(self, bias):
        return ToySegmenter(
            w1=np.zeros((3, 1)),
            b1=np.zeros(1),
            w2=np.zeros((3, 3, 1, 1)),
            b2=np.zeros(1),
            w3=np.zeros((1, 1)),
            b3=np.array([bias]),
        )

    def test_hand_computed_steps(self):
        """Test two momentum steps with weight decay against hand values."""
        model = self._tiny_model(1.0)
        sgd = SGD(learning_rate=0.1, momentum=0.9, weight_decay=0.1, trainable=("b3",))
        grads = {"b3": np.array([0.5])}

        sgd.step(model, grads)
        assert model.b3[0] == pytest.approx(0.94)
        sgd.step(model, grads)
        assert model.b3[0] == pytest.approx(0.8266)

    def test_frozen_parameters_untouched(self):
        """Test that parameters outside the trainable set are not decayed."""
        model = self._tiny_model(1.0)
        model.w3[:] = 2.0
        sgd = SGD(learning_rate=0.1, weight_decay=0.5, trainable=("b3",))
        grads = {name: np.ones_like(value) for name, value in model.params().items()}

        sgd.step(model, grads)

        assert model.w3[0, 0] == 2.0

    def test_zero_learning_rate(self, model):
        """Test that lr = 0 leaves the weights unchanged."""
        before = model.copy()
        grads = {name: np.ones_like(value) for name, value in model.params().items()}

        SGD(learning_rate=0.0).step(model, grads)

        for name, value in model.params().items():
            np.testing.assert_array_equal(value, before.params()[name])


class TestCheckpoint:
    """Tests for checkpoint files."""

    def test_round_trip_in_float32(self, model, tmp_path):
        """Test that weights come back at float32 precision."""
        path = tmp_path / "ckpt" / "model.wdgk"
        save_checkpoint(path, model)

        back = load_checkpoint(path)

        assert path.read_bytes()[:4] == b"WDGK"
        for name, value in model.params().items():
            np.testing.assert_array_equal(back.params()[name], value.astype(np.float32))

    def test_bad_magic(self, tmp_path):
        """Test that a foreign file is rejected."""
        path = tmp_path / "x.wdgk"
        path.write_bytes(b"NOPE" + bytes(20))
        with pytest.raises(ValidationError, match="checkpoint"):
            load_checkpoint(path)

    def test_truncated(self, model, tmp_path):
        """Test that a cut-off payload is rejected."""
        path = tmp_path / "model.wdgk"
        save_checkpoint(path, model)
        path.write_bytes(path.read_bytes()[:-8])
        with pytest.raises(ValidationError, match="truncated"):
            load_checkpoint(path)
