import math
import unittest
from unittest.mock import patch

import numpy as np

from tests.test_helpers import orthonormal_dataset, random_bank, small_scm_config, small_train_config, zero_bank
from python_cdc_decoupling.classes.config import TrainConfig
from python_cdc_decoupling.classes.enums import SplitTag
from python_cdc_decoupling.datagen import generate_scm_dataset
from python_cdc_decoupling.templates import IncompatibleCheckpoint, TemplateBank, materialize
from python_cdc_decoupling.trainer import (EmptyDataset, EmptyPartition, MissingAnchors, augment_batch, evaluate,
                                           harmonic_mean, mean_cross_template_similarity, predict, predict_averaged,
                                           template_similarity_matrix, train, training_pipelines)


def straight_line_predict(x, rows, evidence_tau, clamp):
    """Fusion written out with plain loops, used as an oracle."""
    x = np.asarray(x, dtype=float) / math.sqrt(sum(v * v for v in x))
    num_classes = rows.shape[1]
    beliefs, uncertainty = None, None
    for m in range(rows.shape[0]):
        evidence = [min(math.exp(sum(rows[m, c, k] * x[k] for k in range(x.size)) / evidence_tau), clamp)
                    for c in range(num_classes)]
        strength = sum(evidence) + num_classes
        b = [e / strength for e in evidence]
        u = num_classes / strength
        if beliefs is None:
            beliefs, uncertainty = b, u
            continue
        k = sum(beliefs[i] * b[j] for i in range(num_classes) for j in range(num_classes) if i != j)
        beliefs = [(beliefs[c] * b[c] + beliefs[c] * u + b[c] * uncertainty) / (1 - k) for c in range(num_classes)]
        uncertainty = uncertainty * u / (1 - k)
    total = sum(beliefs)
    return [b / total for b in beliefs], uncertainty


class TestHarmonicMean(unittest.TestCase):
    """Unit tests for the harmonic mean."""

    def test_published_rows(self):
        """Test two reference base/new/HM rows."""
        self.assertAlmostEqual(harmonic_mean(82.69, 63.22), 71.66, delta=0.01)
        self.assertAlmostEqual(harmonic_mean(94.07, 73.23), 82.35, delta=0.01)

    def test_degenerate(self):
        """Test the zero and equal cases."""
        self.assertEqual(harmonic_mean(100.0, 0.0), 0.0)
        self.assertEqual(harmonic_mean(100.0, 100.0), 100.0)


class TestTrain(unittest.TestCase):
    """Unit tests for the training loop."""

    def setUp(self):
        self.dataset = generate_scm_dataset(small_scm_config())

    def test_zero_learning_rate_keeps_theta(self):
        """Test that lr = 0 leaves the initialization."""
        # Arrange
        config = small_train_config(learning_rate=0.0)

        # Act
        bank, history = train(self.dataset, config)

        # Assert
        initial = train(self.dataset, config.replace(epochs=0))[0]
        np.testing.assert_array_equal(bank.theta, initial.theta)
        self.assertEqual(len(history.epochs), 2)

    def test_zero_epochs(self):
        """Test that zero epochs gives an empty history."""
        bank, history = train(self.dataset, small_train_config(epochs=0))
        self.assertEqual(history.epochs, [])
        self.assertEqual(bank.m, 3)

    def test_is_deterministic(self):
        """Test that a seeded run repeats exactly."""
        first, first_history = train(self.dataset, small_train_config())
        second, second_history = train(self.dataset, small_train_config())
        np.testing.assert_array_equal(first.theta, second.theta)
        self.assertEqual(first_history.totals, second_history.totals)

    def test_seed_changes_the_run(self):
        """Test that the seed matters."""
        first, _ = train(self.dataset, small_train_config(seed=1))
        second, _ = train(self.dataset, small_train_config(seed=2))
        self.assertFalse(np.array_equal(first.theta, second.theta))

    def test_history_records_every_epoch(self):
        """Test the epoch records and their loss identity."""
        # Act
        _, history = train(self.dataset, small_train_config(epochs=3))

        # Assert
        self.assertEqual([record.epoch for record in history.epochs], [0, 1, 2])
        train_count = len(self.dataset.indices(SplitTag.BASE_TRAIN))
        self.assertEqual(history.epochs[0].iterations, math.ceil(train_count / 4))
        for record in history.epochs:
            loss = record.loss
            self.assertAlmostEqual(
                loss.total, loss.trusted_ce + loss.beta * loss.decoupling + loss.gamma * loss.consistency, delta=1e-9
            )

    def test_single_template_warns_and_skips_decoupling(self):
        """Test the M = 1 warning and zero decoupling term."""
        # Arrange
        config = small_train_config(m=1)

        # Act
        with patch("python_cdc_decoupling.trainer.logger") as mock_logger:
            _, history = train(self.dataset, config)

        # Assert
        mock_logger.warning.assert_called_once()
        self.assertTrue(all(record.loss.decoupling == 0.0 for record in history.epochs))

    def test_no_train_samples(self):
        """Test that training needs base-train samples."""
        dataset = self.dataset.select(self.dataset.indices(SplitTag.BASE_TEST, SplitTag.NEW_TEST))
        with self.assertRaises(EmptyDataset):
            train(dataset, small_train_config())

    def test_missing_anchors(self):
        """Test that training needs anchors."""
        self.dataset.anchors = None
        with self.assertRaises(MissingAnchors):
            train(self.dataset, small_train_config())

    def test_incompatible_bank(self):
        """Test that a bank of the wrong shape is refused."""
        with self.assertRaises(IncompatibleCheckpoint):
            train(self.dataset, small_train_config(), bank=random_bank(num_classes=5, dim=8))

    def test_image_branch_off_uses_identity_views(self):
        """Test identity views without the image branch."""
        # Arrange
        config = small_train_config(image_branch=False)
        features = self.dataset.features[:3]

        # Act
        views = augment_batch(features, [0, 1, 2], training_pipelines(config), config.seed, 0)

        # Assert
        for m in range(config.m):
            np.testing.assert_array_equal(views[m], features)

    def test_augmented_views_differ_per_template(self):
        """Test that templates see different views."""
        config = small_train_config()
        views = augment_batch(self.dataset.features[:2], [0, 1], training_pipelines(config), config.seed, 0)
        self.assertEqual(views.shape, (3, 2, self.dataset.dim))
        self.assertFalse(np.allclose(views[0], views[1]))

    def test_template_dim_is_capped_at_embedding_dim(self):
        """Test that p above d falls back to p = d with a warning."""
        # Act
        with patch("python_cdc_decoupling.trainer.logger") as mock_logger:
            bank, _ = train(self.dataset, small_train_config(template_dim=64, epochs=0))

        # Assert
        self.assertEqual(bank.template_dim, self.dataset.dim)
        mock_logger.warning.assert_called_once()


class TestPredict(unittest.TestCase):
    """Unit tests for fused inference."""

    def test_single_template_is_its_own_opinion(self):
        """Test that one template is not fused with anything."""
        # Arrange
        bank = zero_bank(np.eye(3), m=1)

        # Act
        fused = predict([1.0, 0.0, 0.0], bank, TrainConfig(m=1))

        # Assert
        evidence = np.array([math.exp(10.0), 1.0, 1.0])
        np.testing.assert_allclose(fused.beliefs, evidence / (evidence.sum() + 3), atol=1e-15)
        self.assertEqual(fused.fused_count, 1)
        self.assertEqual(fused.predicted_class, 0)

    def test_vacuous_prediction(self):
        """Test the uniform fallback for a vacuous opinion."""
        # Arrange
        bank = zero_bank(np.eye(3)[:2], m=2)
        x = -np.array([1.0, 1.0, 0.0]) / math.sqrt(2.0)

        # Act
        fused = predict(x, bank, TrainConfig(evidence_tau=5e-4))

        # Assert
        self.assertTrue(fused.vacuous)
        np.testing.assert_array_equal(fused.probabilities, [0.5, 0.5])
        self.assertEqual(fused.uncertainty, 1.0)

    def test_matches_straight_line_oracle(self):
        """Test fused inference against a loop-by-loop oracle."""
        # Arrange
        dataset = generate_scm_dataset(small_scm_config(seed=3))
        config = small_train_config(seed=3)
        bank, _ = train(dataset, config)
        rows = materialize(bank)

        for x in dataset.features[:100]:
            # Act
            fused = predict(x, bank, config)

            # Assert
            probabilities, uncertainty = straight_line_predict(x, rows, config.evidence_tau, config.clamp)
            np.testing.assert_allclose(fused.probabilities, probabilities, atol=1e-10)
            self.assertAlmostEqual(fused.uncertainty, uncertainty, delta=1e-10)

    def test_class_restriction(self):
        """Test prediction within a subset of classes."""
        bank = zero_bank(np.eye(4), m=2)
        fused = predict([0.0, 0.0, 1.0, 0.0], bank, TrainConfig(), class_indices=[2, 3])
        self.assertEqual(fused.probabilities.size, 2)
        self.assertEqual(fused.predicted_class, 0)

    def test_averaged_classifier(self):
        """Test the mean of per-template softmaxes."""
        bank = zero_bank(np.eye(3), m=2)
        probs = predict_averaged([0.0, 1.0, 0.0], bank, TrainConfig(tau=1.0))
        expected = np.exp([0.0, 1.0, 0.0]) / np.sum(np.exp([0.0, 1.0, 0.0]))
        np.testing.assert_allclose(probs, expected, atol=1e-15)


class TestEvaluate(unittest.TestCase):
    """Unit tests for the base-to-new evaluation."""

    def test_perfect_templates(self):
        """Test perfect scores with anchors equal to the samples."""
        # Arrange
        dataset = orthonormal_dataset()
        bank = zero_bank(dataset.anchors, m=2)

        # Act
        report = evaluate(dataset, bank, TrainConfig(m=2))

        # Assert
        self.assertEqual(report.base_accuracy, 100.0)
        self.assertEqual(report.new_accuracy, 100.0)
        self.assertEqual(report.harmonic_mean, 100.0)
        self.assertEqual(report.per_template_accuracy, [100.0, 100.0])
        self.assertEqual((report.base_count, report.new_count), (4, 4))
        self.assertEqual(report.conflict_count, 0)

    def test_average_classifier(self):
        """Test evaluation with the averaged classifier."""
        dataset = orthonormal_dataset()
        report = evaluate(dataset, zero_bank(dataset.anchors, m=2), TrainConfig(m=2, classifier="average"))
        self.assertEqual(report.harmonic_mean, 100.0)
        self.assertEqual(report.classifier, "average")

    def test_consistent_harmonic_mean(self):
        """Test that the report HM matches its accuracies."""
        dataset = generate_scm_dataset(small_scm_config())
        report = evaluate(dataset, random_bank(m=2, num_classes=5, dim=16, seed=1), TrainConfig(m=2))
        self.assertAlmostEqual(report.harmonic_mean, harmonic_mean(report.base_accuracy, report.new_accuracy))
        self.assertEqual(len(report.per_template_accuracy), 2)
        self.assertTrue(0.0 <= report.mean_uncertainty <= 1.0)

    def test_empty_new_partition(self):
        """Test that evaluation needs a new-test partition."""
        dataset = orthonormal_dataset()
        base_only = dataset.select(dataset.indices(SplitTag.BASE_TRAIN, SplitTag.BASE_TEST))
        with self.assertRaises(EmptyPartition):
            evaluate(base_only, zero_bank(dataset.anchors), TrainConfig())

    def test_evaluation_leaves_a_degenerate_bank_untouched(self):
        """Test that evaluating re-jitters a copy, never the bank itself."""
        # Arrange
        dataset = orthonormal_dataset()
        projection = np.zeros((4, 1))
        projection[0, 0] = 1.0
        bank = TemplateBank(theta=np.array([[-1.0], [0.0]]), anchors=dataset.anchors, projection=projection, seed=2)

        # Act
        with patch("python_cdc_decoupling.templates.logger"):
            first = evaluate(dataset, bank, TrainConfig(m=2))
            second = evaluate(dataset, bank, TrainConfig(m=2))

        # Assert
        np.testing.assert_array_equal(bank.theta, [[-1.0], [0.0]])
        self.assertEqual(first.to_dict(), second.to_dict())


class TestTemplateSimilarity(unittest.TestCase):
    """Unit tests for the template similarity diagnostics."""

    def test_identical_templates(self):
        """Test that identical templates have similarity one."""
        bank = zero_bank(np.eye(3), m=3)
        np.testing.assert_allclose(template_similarity_matrix(bank), np.ones((3, 3)), atol=1e-12)
        self.assertAlmostEqual(mean_cross_template_similarity(bank), 1.0, delta=1e-12)

    def test_single_template(self):
        """Test that M = 1 has no cross-template similarity."""
        self.assertIsNone(mean_cross_template_similarity(zero_bank(np.eye(3), m=1)))

    def test_matrix_is_symmetric(self):
        """Test symmetry and the unit diagonal."""
        matrix = template_similarity_matrix(random_bank(m=4, scale=2.0))
        np.testing.assert_allclose(matrix, matrix.T, atol=1e-12)
        np.testing.assert_allclose(np.diag(matrix), np.ones(4), atol=1e-12)


if __name__ == "__main__":
    unittest.main()
