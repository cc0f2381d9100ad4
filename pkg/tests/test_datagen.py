import unittest
from unittest.mock import patch

import numpy as np
import pytest

from tests.test_helpers import small_scm_config
from python_cdc_decoupling.classes.config import ConfigError, ScmConfig
from python_cdc_decoupling.classes.enums import SplitTag
from python_cdc_decoupling.datagen import (DimensionTooSmall, UnknownClass, centroid_transfer_gap, class_name,
                                           generate_scm_dataset, orthonormal_factors, split_base_new)
from python_cdc_decoupling.numerics import Rng


class TestOrthonormalFactors(unittest.TestCase):
    """Unit tests for the factor basis."""

    def test_gram_matrix_is_identity(self):
        """Test that twenty factors in R^64 are orthonormal."""
        factors = orthonormal_factors(20, 64, Rng(1))
        np.testing.assert_allclose(factors @ factors.T, np.eye(20), atol=1e-10)

    def test_square_basis(self):
        """Test a full basis of R^6."""
        factors = orthonormal_factors(6, 6, Rng(2))
        np.testing.assert_allclose(factors @ factors.T, np.eye(6), atol=1e-10)

    def test_too_many_factors(self):
        """Test that more factors than dimensions is refused."""
        with self.assertRaises(DimensionTooSmall):
            orthonormal_factors(5, 4, Rng(0))


class TestGenerateScmDataset(unittest.TestCase):
    """Unit tests for the synthetic benchmark."""

    def test_default_counts(self):
        """Test the default split sizes and class layout."""
        # Act
        dataset = generate_scm_dataset(ScmConfig())

        # Assert
        self.assertEqual(dataset.counts(), {"base-train": 80, "base-test": 160, "new-test": 160})
        self.assertEqual((dataset.dim, dataset.num_classes), (64, 10))
        self.assertEqual(dataset.base_classes, [0, 1, 2, 3, 4])
        self.assertEqual(dataset.new_classes, [5, 6, 7, 8, 9])
        self.assertEqual(dataset.class_names[7], "class_07")

    def test_same_seed_same_dataset(self):
        """Test that a seed reproduces the dataset exactly."""
        first = generate_scm_dataset(small_scm_config(seed=4))
        second = generate_scm_dataset(small_scm_config(seed=4))
        self.assertTrue(first.equals(second))

    def test_other_seed_other_dataset(self):
        """Test that another seed gives another dataset."""
        first = generate_scm_dataset(small_scm_config(seed=4))
        second = generate_scm_dataset(small_scm_config(seed=5))
        self.assertFalse(first.equals(second))

    def test_features_and_anchors_are_unit_norm(self):
        """Test that samples and anchors are unit vectors."""
        dataset = generate_scm_dataset(small_scm_config())
        np.testing.assert_allclose(np.linalg.norm(dataset.features, axis=1), 1.0, atol=1e-12)
        np.testing.assert_allclose(np.linalg.norm(dataset.anchors, axis=1), 1.0, atol=1e-12)

    def test_dimension_too_small(self):
        """Test that d must hold every factor and the style direction."""
        with self.assertRaises(DimensionTooSmall):
            generate_scm_dataset(ScmConfig(d=4, n_relevant=8, n_irrelevant=0, factors_per_class=1, c_base=2, c_new=2))

    def test_too_few_factor_combinations(self):
        """Test that classes need distinct factor subsets."""
        with self.assertRaises(ConfigError):
            ScmConfig(n_relevant=3, factors_per_class=3, c_base=2, c_new=0)

    def test_noise_free_nearest_anchor_is_exact(self):
        """Test that without nuisances the nearest anchor is the label."""
        # Arrange
        config = small_scm_config(noise_sigma=0.0, n_irrelevant=0, anchor_noise=0.0, style_strength=0.0,
                                  anchor_style_mean=0.0, anchor_style_spread=0.0)

        # Act
        dataset = generate_scm_dataset(config)

        # Assert
        predicted = np.argmax(dataset.features @ dataset.anchors.T, axis=1)
        np.testing.assert_array_equal(predicted, dataset.labels)

    def test_new_split_ignores_the_signature(self):
        """Test that the confounder only reaches base samples."""
        # Arrange
        full = generate_scm_dataset(small_scm_config(confound_strength=1.0, noise_sigma=0.0))
        none = generate_scm_dataset(small_scm_config(confound_strength=0.0, noise_sigma=0.0))

        # Act
        full_new, _ = full.partition(SplitTag.NEW_TEST)
        none_new, _ = none.partition(SplitTag.NEW_TEST)
        full_base, _ = full.partition(SplitTag.BASE_TRAIN)
        none_base, _ = none.partition(SplitTag.BASE_TRAIN)

        # Assert
        np.testing.assert_allclose(full_new, none_new, atol=1e-12)
        self.assertFalse(np.allclose(full_base, none_base))

    def test_style_is_shared_by_every_sample(self):
        """Test that the style strength moves every sample along one direction."""
        # Arrange
        plain = generate_scm_dataset(small_scm_config(style_strength=0.0, noise_sigma=0.0))
        styled = generate_scm_dataset(small_scm_config(style_strength=1.0, noise_sigma=0.0))

        # Act
        singular = np.linalg.svd(styled.features - plain.features, compute_uv=False)

        # Assert
        self.assertGreater(singular[0] ** 2 / np.sum(singular ** 2), 0.8)
        np.testing.assert_allclose(plain.anchors, styled.anchors, atol=1e-15)

    def test_anchor_style_weight_varies_per_class(self):
        """Test that anchors carry the style direction with class-specific weights."""
        # Arrange
        none = generate_scm_dataset(small_scm_config(anchor_style_mean=0.0, anchor_style_spread=0.0))
        spread = generate_scm_dataset(small_scm_config(anchor_style_mean=0.0, anchor_style_spread=0.5))

        # Act
        changed = np.linalg.norm(spread.anchors - none.anchors, axis=1)

        # Assert
        self.assertTrue(np.all(changed > 0.0))
        self.assertGreater(float(np.ptp(changed)), 0.0)
        np.testing.assert_array_equal(none.features, spread.features)

    def test_anchor_signature_only_moves_anchors(self):
        """Test that the anchor signature leaves the samples alone."""
        without = generate_scm_dataset(small_scm_config(anchor_signature=0.0))
        with_signature = generate_scm_dataset(small_scm_config(anchor_signature=0.5))
        np.testing.assert_array_equal(without.features, with_signature.features)
        self.assertFalse(np.allclose(without.anchors, with_signature.anchors))

    def test_negative_style_is_rejected(self):
        """Test validation of the style knobs."""
        for key in ("style_strength", "anchor_style_spread", "anchor_signature"):
            with self.assertRaises(ConfigError, msg=key):
                small_scm_config(**{key: -0.1})

    @pytest.mark.slow
    def test_confounder_degrades_transfer(self):
        """Test that a nearest-centroid model loses accuracy on new classes."""
        for seed in range(5):
            _, _, gap = centroid_transfer_gap(generate_scm_dataset(ScmConfig(seed=seed)))
            self.assertGreater(gap, 5.0, msg=f"seed={seed}")


class TestSplitBaseNew(unittest.TestCase):
    """Unit tests for re-splitting a dataset."""

    def setUp(self):
        self.dataset = generate_scm_dataset(small_scm_config())

    def test_moves_classes_to_new(self):
        """Test that unlisted classes become new classes."""
        # Act
        result = split_base_new(self.dataset, [0, 1])

        # Assert
        self.assertEqual(result.base_classes, [0, 1])
        self.assertEqual(result.new_classes, [2, 3, 4])
        self.assertEqual(result.counts(), {"base-train": 12, "base-test": 10, "new-test": 15})

    def test_shots_subsample_per_class(self):
        """Test seeded per-class subsampling."""
        # Act
        result = split_base_new(self.dataset, [0, 1, 2], shots=2, seed=9)

        # Assert
        train_x, train_y = result.partition(SplitTag.BASE_TRAIN)
        self.assertEqual(sorted(train_y.tolist()), [0, 0, 1, 1, 2, 2])
        again = split_base_new(self.dataset, [0, 1, 2], shots=2, seed=9)
        np.testing.assert_array_equal(again.partition(SplitTag.BASE_TRAIN)[0], train_x)

    def test_too_many_shots_keeps_everything(self):
        """Test that asking for too many shots warns per class."""
        with patch("python_cdc_decoupling.datagen.logger") as mock_logger:
            result = split_base_new(self.dataset, [0, 1, 2], shots=50)
        self.assertEqual(result.counts()["base-train"], 18)
        self.assertEqual(mock_logger.warning.call_count, 3)

    def test_every_class_base_leaves_new_empty(self):
        """Test the warning for an empty new partition."""
        with patch("python_cdc_decoupling.datagen.logger") as mock_logger:
            result = split_base_new(self.dataset, range(5))
        self.assertEqual(result.counts()["new-test"], 0)
        mock_logger.warning.assert_called_once()

    def test_unknown_class(self):
        """Test that base classes must exist."""
        with self.assertRaises(UnknownClass):
            split_base_new(self.dataset, [0, 7])


class TestClassName(unittest.TestCase):

    def test_zero_padded(self):
        """Test the two-digit class names."""
        self.assertEqual(class_name(3), "class_03")
        self.assertEqual(class_name(12), "class_12")


if __name__ == "__main__":
    unittest.main()
