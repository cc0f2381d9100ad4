import unittest

import numpy as np

from tests.test_helpers import unit_rows
from python_cdc_decoupling.augmentation import (IDENTITY, AugmentationChannel, apply_augmentation,
                                                describe_pipeline, resolve_channels)
from python_cdc_decoupling.classes.config import ConfigError
from python_cdc_decoupling.classes.enums import ChannelKind
from python_cdc_decoupling.numerics import Rng


class TestChannelParsing(unittest.TestCase):

    def test_parse_and_describe(self):
        """Test that a channel spec prints back as written."""
        channel = AugmentationChannel.parse("subspace-rotation:0.3:4")
        self.assertEqual(channel.kind, ChannelKind.SUBSPACE_ROTATION)
        self.assertEqual(channel.params, (0.3, 4.0))
        self.assertEqual(channel.describe(), "subspace-rotation:0.3:4")

    def test_unknown_kind(self):
        """Test that an unknown augmentation kind is refused."""
        with self.assertRaises(ConfigError):
            AugmentationChannel.parse("colour-jitter:0.1")

    def test_wrong_arity(self):
        """Test that each kind takes exactly one parameter."""
        with self.assertRaises(ConfigError):
            AugmentationChannel.parse("gaussian-jitter")

    def test_invalid_parameters(self):
        """Test the parameter range of each kind."""
        for text in ["coordinate-mask:1.0", "scale-jitter:-0.1", "subspace-rotation:0.3:0", "gaussian-jitter:x"]:
            with self.assertRaises(ConfigError, msg=text):
                AugmentationChannel.parse(text)


class TestResolveChannels(unittest.TestCase):

    def test_standard_preset_cycles(self):
        """Test that the standard preset cycles over the templates."""
        # Act
        pipelines = resolve_channels("standard", 6)

        # Assert
        self.assertEqual(len(pipelines), 6)
        self.assertEqual(pipelines[4], pipelines[0])
        self.assertEqual(pipelines[0][0].kind, ChannelKind.GAUSSIAN_JITTER)
        self.assertEqual(pipelines[3][0].kind, ChannelKind.SCALE_JITTER)

    def test_shared_mask_prepends_mask(self):
        """Test that shared-mask puts a mask in front of every pipeline."""
        for pipeline in resolve_channels("shared-mask", 4):
            self.assertEqual(pipeline[0].kind, ChannelKind.COORDINATE_MASK)
            self.assertEqual(len(pipeline), 2)

    def test_identity(self):
        """Test the identity preset."""
        self.assertEqual(resolve_channels("identity", 3), [(IDENTITY,)] * 3)

    def test_explicit_spec(self):
        """Test that an explicit spec gives one pipeline per template."""
        pipelines = resolve_channels("gaussian-jitter:0.05;coordinate-mask:0.1+scale-jitter:0.2", 2)
        self.assertEqual(describe_pipeline(pipelines[1]), "coordinate-mask:0.1+scale-jitter:0.2")

    def test_empty_spec(self):
        """Test that an empty spec is refused."""
        with self.assertRaises(ConfigError):
            resolve_channels(" ; ", 2)


class TestApplyAugmentation(unittest.TestCase):

    def setUp(self):
        self.x = unit_rows(Rng(0), 1, 12)[0]

    def test_identity_returns_input(self):
        """Test that the identity pipeline leaves a sample alone."""
        np.testing.assert_array_equal(apply_augmentation(self.x, IDENTITY, Rng(1)), self.x)

    def test_zero_parameter_is_identity(self):
        """Test that a zero-strength step changes nothing."""
        channel = AugmentationChannel(ChannelKind.GAUSSIAN_JITTER, (0.0,))
        np.testing.assert_array_equal(apply_augmentation(self.x, channel, Rng(1)), self.x)

    def test_outputs_are_unit_norm(self):
        """Test that every view is renormalized."""
        for pipeline in resolve_channels("standard", 4) + resolve_channels("shared-mask", 4):
            for seed in range(20):
                result = apply_augmentation(self.x, pipeline, Rng(seed))
                self.assertAlmostEqual(float(np.linalg.norm(result)), 1.0, delta=1e-12)

    def test_same_stream_same_view(self):
        """Test that a seeded stream reproduces a view."""
        pipeline = resolve_channels("standard", 3)[2]
        first = apply_augmentation(self.x, pipeline, Rng.derive(4, "augment", 0, 1, 2))
        second = apply_augmentation(self.x, pipeline, Rng.derive(4, "augment", 0, 1, 2))
        np.testing.assert_array_equal(first, second)

    def test_jitter_moves_the_sample(self):
        """Test that gaussian jitter changes the sample."""
        channel = AugmentationChannel.parse("gaussian-jitter:0.5")
        result = apply_augmentation(self.x, channel, Rng(3))
        self.assertFalse(np.allclose(result, self.x))

    def test_full_mask_falls_back_to_input(self):
        """Test that masking every coordinate returns the input."""
        # Arrange
        channel = AugmentationChannel.parse("coordinate-mask:0.999999")

        # Act
        result = apply_augmentation(np.array([1.0, 0.0]), channel, Rng(2))

        # Assert
        self.assertAlmostEqual(float(np.linalg.norm(result)), 1.0, delta=1e-12)

    def test_rotation_preserves_norm_before_renormalization(self):
        """Test that the plane rotation is norm preserving."""
        channel = AugmentationChannel.parse("subspace-rotation:3.0:10")
        result = apply_augmentation(self.x, channel, Rng(8))
        self.assertAlmostEqual(float(np.linalg.norm(result)), 1.0, delta=1e-12)


if __name__ == "__main__":
    unittest.main()
