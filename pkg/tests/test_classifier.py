"""Unit tests for speckle_viscometry.classifier module."""

import os
import tempfile
import unittest

import numpy as np
from scipy import optimize

from speckle_viscometry import classifier
from speckle_viscometry.errors import InvalidArgumentError, MissingMetadataError, RegionTooSmallError, TrainingError
from speckle_viscometry.framestore import write_sequence
from speckle_viscometry.frames import FrameSequence
from speckle_viscometry.models import CropRegion, FrameSelection, ManifestEntry, PairwiseSvm, SvmModel


def xor_dataset(copies: int = 6, seed: int = 0) -> classifier.Dataset:
    """Jittered XOR corners: equal coordinates are class 0, unequal class 1."""
    rng = np.random.default_rng(seed)
    vectors = []
    for i in range(copies):
        for x, y in ((0, 0), (1, 1), (0, 1), (1, 0)):
            point = np.array([x, y], dtype=np.float64) + rng.normal(0, 0.05, 2)
            vectors.append(classifier.FeatureVector(values=point, label=int(x != y), sequence_id=f"s{i}"))
    return classifier.Dataset.from_vectors(vectors, {0: "same", 1: "different"})


def dual_objective(alpha: np.ndarray, y: np.ndarray, kernel: np.ndarray) -> float:
    """Soft-margin dual objective."""
    weighted = alpha * y
    return float(alpha.sum() - 0.5 * weighted @ kernel @ weighted)


def fixed_model(biases: list[float]) -> SvmModel:
    """Three-class model whose pairwise decision values equal the given biases."""
    pairs = [
        PairwiseSvm(positive=a, negative=b, support_vectors=[[0.0]], alphas=[0.0], sv_labels=[1], bias=bias)
        for (a, b), bias in zip([(0, 1), (0, 2), (1, 2)], biases, strict=True)
    ]
    return SvmModel(classes=[0, 1, 2], gamma=1.0, C=1.0, feature_mean=[0.0], feature_std=[1.0], pairs=pairs)


class TestDataset(unittest.TestCase):
    """Tests for stacking feature vectors."""

    def test_from_vectors(self):
        """Test shapes, labels and names."""
        dataset = xor_dataset(copies=2)
        self.assertEqual(dataset.features.shape, (8, 2))
        self.assertEqual(len(dataset), 8)
        self.assertEqual(dataset.class_names[1], "different")

    def test_invalid_vectors(self):
        """Test empty, unlabelled, ragged and non-finite input."""
        with self.assertRaises(InvalidArgumentError):
            classifier.Dataset.from_vectors([])
        with self.assertRaises(InvalidArgumentError):
            classifier.Dataset.from_vectors([classifier.FeatureVector(values=np.zeros(2))])
        ragged = [
            classifier.FeatureVector(values=np.zeros(2), label=0),
            classifier.FeatureVector(values=np.zeros(3), label=1),
        ]
        with self.assertRaises(InvalidArgumentError):
            classifier.Dataset.from_vectors(ragged)
        with self.assertRaises(InvalidArgumentError):
            classifier.Dataset.from_vectors([classifier.FeatureVector(values=np.array([np.nan, 1.0]), label=0)])


class TestFeatures(unittest.TestCase):
    """Tests for downsampling and difference images."""

    def test_downsample_block_means(self):
        """Test 2x2 block means of a ramp."""
        image = np.arange(128 * 128, dtype=np.float64).reshape(128, 128)
        small = classifier.downsample(image)
        self.assertEqual(small.shape, (64, 64))
        self.assertAlmostEqual(small[0, 0], 64.5)
        self.assertAlmostEqual(small.mean(), image.mean())

    def test_downsample_uneven(self):
        """Test a frame that does not divide evenly."""
        small = classifier.downsample(np.full((100, 70), 3.0))
        np.testing.assert_allclose(small, 3.0)

    def test_featurize(self):
        """Test n frames giving n - 1 absolute difference vectors."""
        frames = np.zeros((5, 64, 64), dtype=np.uint8)
        for i in range(5):
            frames[i] = 10 * i
        seq = FrameSequence(frames, fps=30.0, shutter_s=1 / 30)
        vectors = classifier.featurize(
            seq, FrameSelection(indices=[0, 1, 3, 4]), CropRegion.full_frame(64, 64), label=2, sequence_id="a"
        )
        self.assertEqual(len(vectors), 3)
        self.assertEqual(vectors[0].values.size, 4096)
        np.testing.assert_allclose(vectors[1].values, 20.0)
        self.assertEqual((vectors[2].label, vectors[2].sequence_id), (2, "a"))

    def test_featurize_translation_covariant(self):
        """Test that shifting both frames by whole blocks shifts the features by cells."""
        frames = np.random.default_rng(12).integers(0, 256, size=(2, 128, 128), dtype=np.uint8)
        shifted = np.roll(frames, (4, 6), axis=(1, 2))
        region = CropRegion.full_frame(128, 128)
        selection = FrameSelection(indices=[0, 1])
        base = classifier.featurize(FrameSequence(frames, fps=30.0, shutter_s=1 / 30), selection, region)
        moved = classifier.featurize(FrameSequence(shifted, fps=30.0, shutter_s=1 / 30), selection, region)
        np.testing.assert_allclose(
            moved[0].values.reshape(64, 64), np.roll(base[0].values.reshape(64, 64), (2, 3), axis=(0, 1))
        )

    def test_featurize_selection_outside(self):
        """Test a selection past the last frame."""
        seq = FrameSequence(np.zeros((3, 64, 64), dtype=np.uint8), fps=30.0, shutter_s=1 / 30)
        with self.assertRaises(InvalidArgumentError):
            classifier.featurize(seq, FrameSelection(indices=[0, 3]), CropRegion.full_frame(64, 64))

    def test_sequence_features_with_stabilizer_and_auto_crop(self):
        """Test stabilized selection on a flickering capture with no static speckle."""
        rng = np.random.default_rng(13)
        frames = rng.integers(0, 150, size=(30, 64, 64)) + np.where(np.arange(30) % 2 == 0, 50, 0)[:, None, None]
        seq = FrameSequence(frames.astype(np.uint8), fps=30.0, shutter_s=1 / 30)
        vectors = classifier.sequence_features(seq, label=1, sequence_id="s", use_stabilizer=True, crop="auto")
        self.assertEqual(len(vectors), 9)
        self.assertEqual(vectors[0].values.size, 4096)
        # selected frames are all bright, so no difference image spans a dark frame
        self.assertTrue(all(v.values.mean() < 60 for v in vectors))

    def test_featurize_small_region(self):
        """Test a region below 64 x 64."""
        seq = FrameSequence(np.zeros((3, 64, 64), dtype=np.uint8), fps=30.0, shutter_s=1 / 30)
        with self.assertRaises(RegionTooSmallError):
            classifier.featurize(seq, FrameSelection(indices=[0, 1]), CropRegion(cx=32, cy=32, width=32, height=64))


class TestSmo(unittest.TestCase):
    """Tests for the binary dual solver."""

    def test_matches_reference_qp(self):
        """Test the dual objective against a general constrained optimizer."""
        rng = np.random.default_rng(7)
        x = np.vstack([rng.normal(-1, 1, (10, 2)), rng.normal(1, 1, (10, 2))])
        y = np.array([-1] * 10 + [1] * 10)
        kernel = classifier.rbf_kernel(x, x, 0.5)
        C = 1.0
        alpha, _ = classifier.smo(kernel, y, C, tolerance=1e-6)
        self.assertTrue(np.all(alpha >= -1e-12) and np.all(alpha <= C + 1e-12))
        self.assertAlmostEqual(float(alpha @ y), 0.0, delta=1e-9)

        reference = optimize.minimize(
            lambda a: -dual_objective(a, y, kernel),
            np.zeros(20),
            jac=lambda a: -(np.ones(20) - y * (kernel @ (a * y))),
            bounds=[(0.0, C)] * 20,
            constraints=[{"type": "eq", "fun": lambda a: a @ y, "jac": lambda a: y.astype(np.float64)}],
            method="SLSQP",
            options={"ftol": 1e-12, "maxiter": 1000},
        )
        self.assertAlmostEqual(dual_objective(alpha, y, kernel), -reference.fun, delta=1e-4)

    def test_separable_pair(self):
        """Test two points: both become support vectors with equal weight."""
        kernel = classifier.rbf_kernel(np.array([[0.0], [1.0]]), np.array([[0.0], [1.0]]), 1.0)
        alpha, bias = classifier.smo(kernel, np.array([1, -1]), C=100.0, tolerance=1e-9)
        self.assertAlmostEqual(alpha[0], alpha[1])
        self.assertAlmostEqual(bias, 0.0, places=6)

    def test_all_bounded_pair(self):
        """Test a tiny C: both multipliers sit at the box and the bias comes from the bounds."""
        kernel = classifier.rbf_kernel(np.array([[0.0], [1.0]]), np.array([[0.0], [1.0]]), 1.0)
        alpha, bias = classifier.smo(kernel, np.array([1, -1]), C=1e-3)
        np.testing.assert_allclose(alpha, [1e-3, 1e-3])
        self.assertAlmostEqual(bias, 0.0, places=9)


class TestTrainPredict(unittest.TestCase):
    """Tests for the one-vs-one machine."""

    def test_xor(self):
        """Test that the RBF machine separates XOR."""
        train = xor_dataset()
        model = classifier.train_svm(train)
        predicted = [p.label for p in classifier.predict(model, train.features)]
        self.assertEqual(predicted, train.labels.tolist())
        self.assertEqual(model.training_sequences, [f"s{i}" for i in range(6)])
        fresh = xor_dataset(copies=2, seed=9)
        self.assertEqual([p.label for p in classifier.predict(model, fresh.features)], fresh.labels.tolist())

    def test_predict_feature_vectors(self):
        """Test predicting from a list of vectors."""
        model = classifier.train_svm(xor_dataset())
        vectors = [classifier.FeatureVector(values=np.array([1.0, 0.0]))]
        self.assertEqual(classifier.predict(model, vectors)[0].label, 1)

    def test_training_order_does_not_change_predictions(self):
        """Test that a shuffled training set predicts the same labels."""
        train = xor_dataset()
        order = np.random.default_rng(5).permutation(len(train))
        shuffled = classifier.Dataset(
            train.features[order], train.labels[order], [train.sequence_ids[i] for i in order], train.class_names
        )
        points = np.vstack([xor_dataset(copies=3, seed=21).features, [[0.1, 0.9], [0.9, 0.1], [0.9, 0.9]]])
        first = [p.label for p in classifier.predict(classifier.train_svm(train), points)]
        second = [p.label for p in classifier.predict(classifier.train_svm(shuffled), points)]
        self.assertEqual(first, second)

    def test_tie_breaks(self):
        """Test a three-way vote tie resolved by margin, then by lowest label."""
        by_margin = classifier.predict(fixed_model([1.0, -2.0, 3.0]), np.zeros((1, 1)))[0]
        self.assertEqual(by_margin.votes, {0: 1, 1: 1, 2: 1})
        self.assertEqual(by_margin.label, 1)
        by_label = classifier.predict(fixed_model([1.0, -1.0, 1.0]), np.zeros((1, 1)))[0]
        self.assertEqual(by_label.label, 0)

    def test_training_requirements(self):
        """Test one class, a singleton class and a bad C."""
        dataset = xor_dataset()
        one_class = classifier.Dataset(dataset.features, np.zeros(len(dataset), dtype=np.int64), dataset.sequence_ids)
        with self.assertRaises(InvalidArgumentError):
            classifier.train_svm(one_class)
        labels = dataset.labels.copy()
        labels[0] = 5
        with self.assertRaises(InvalidArgumentError):
            classifier.train_svm(classifier.Dataset(dataset.features, labels, dataset.sequence_ids))
        with self.assertRaises(InvalidArgumentError):
            classifier.train_svm(dataset, C=0.0)
        with self.assertRaises(InvalidArgumentError):
            classifier.train_svm(dataset, gamma=-1.0)

    def test_identical_vectors(self):
        """Test a pair whose vectors cannot be told apart."""
        dataset = classifier.Dataset(np.ones((4, 3)), np.array([0, 0, 1, 1]), ["a", "b", "c", "d"])
        with self.assertRaises(TrainingError) as context:
            classifier.train_svm(dataset)
        self.assertEqual(context.exception.pair, (0, 1))


class TestEvaluation(unittest.TestCase):
    """Tests for confusion matrices and regrouping."""

    def test_perfect_classifier(self):
        """Test a diagonal matrix."""
        matrix = classifier.confusion_matrix([0, 1, 2, 2], [0, 1, 2, 2])
        self.assertEqual(matrix.counts, [[1, 0, 0], [0, 1, 0], [0, 0, 2]])
        self.assertEqual(matrix.accuracy, 1.0)
        self.assertEqual(matrix.recall, [1.0, 1.0, 1.0])

    def test_constant_classifier(self):
        """Test accuracy 1/k on k balanced classes."""
        truth = [0, 0, 1, 1, 2, 2, 3, 3]
        matrix = classifier.confusion_matrix(truth, [1] * 8)
        self.assertEqual(matrix.accuracy, 0.25)
        self.assertEqual(matrix.recall, [0.0, 1.0, 0.0, 0.0])

    def test_empty(self):
        """Test an empty test set."""
        with self.assertRaises(InvalidArgumentError):
            classifier.confusion_matrix([], [])

    def test_regroup(self):
        """Test merging classes and an unmapped label."""
        np.testing.assert_array_equal(classifier.regroup([0, 1, 2, 3], {0: 0, 1: 0, 2: 1, 3: 1}), [0, 0, 1, 1])
        with self.assertRaises(InvalidArgumentError):
            classifier.regroup([4], {0: 0})

    def test_evaluate(self):
        """Test held-out evaluation, regrouping and the overlap check."""
        model = classifier.train_svm(xor_dataset())
        fresh = xor_dataset(copies=2, seed=9)
        test = classifier.Dataset(fresh.features, fresh.labels, [f"t{i}" for i in range(len(fresh))])
        self.assertEqual(classifier.evaluate(model, test).accuracy, 1.0)
        merged = classifier.evaluate(model, test, {0: 0, 1: 0})
        self.assertEqual(merged.labels, [0])
        self.assertEqual(merged.accuracy, 1.0)
        with self.assertRaises(InvalidArgumentError):
            classifier.evaluate(model, fresh)

    def test_confusion_frame(self):
        """Test class names on both axes."""
        frame = classifier.confusion_frame(classifier.confusion_matrix([0, 1], [0, 0]), {0: "water", 1: "oil"})
        self.assertEqual(frame.loc["oil", "water"], 1)
        self.assertEqual(frame.index.name, "true")


class TestDatasetFiles(unittest.TestCase):
    """Tests for manifests, datasets and model files."""

    def setUp(self):
        """Write a still and a fluctuating sequence per class."""
        self.tmp = tempfile.TemporaryDirectory()
        rng = np.random.default_rng(0)
        still = rng.integers(0, 256, size=(64, 64), dtype=np.uint8)
        for replicate in range(2):
            static = [np.clip(still.astype(int) + rng.integers(-2, 3, size=(64, 64)), 0, 255) for _ in range(11)]
            write_sequence([f.astype(np.uint8) for f in static], os.path.join(self.tmp.name, f"still_{replicate}"))
            moving = [rng.integers(0, 256, size=(64, 64), dtype=np.uint8) for _ in range(11)]
            write_sequence(moving, os.path.join(self.tmp.name, f"moving_{replicate}"))
        self.entries = [
            ManifestEntry(dir=f"{kind}_{replicate}", label=label, class_name=kind)
            for replicate in range(2)
            for label, kind in enumerate(["still", "moving"])
        ]

    def tearDown(self):
        """Remove the sequences."""
        self.tmp.cleanup()

    def test_build_train_save_load(self):
        """Test the manifest-to-model path."""
        dataset = classifier.build_dataset(self.entries, root=self.tmp.name, threads=2)
        self.assertEqual(dataset.features.shape, (36, 4096))
        self.assertEqual(dataset.class_names, {0: "still", 1: "moving"})
        self.assertEqual(dataset.sequence_ids[0], "still_0")
        model = classifier.train_svm(dataset)
        path = os.path.join(self.tmp.name, "models", "svm.json")
        classifier.save_model(model, path)
        loaded = classifier.load_svm(path)
        self.assertEqual(loaded, model)
        np.testing.assert_allclose(
            classifier.decision_values(loaded, dataset.features[:3]),
            classifier.decision_values(model, dataset.features[:3]),
        )

    def test_manifest_file(self):
        """Test reading a manifest and rejecting a non-list."""
        path = os.path.join(self.tmp.name, "manifest.json")
        with open(path, "w", encoding="utf-8") as f:
            f.write('[{"dir": "still_0", "label": 0}]')
        self.assertEqual(classifier.read_manifest_entries(path)[0].dir, "still_0")
        with open(path, "w", encoding="utf-8") as f:
            f.write('{"dir": "still_0"}')
        with self.assertRaises(InvalidArgumentError):
            classifier.read_manifest_entries(path)

    def test_missing_sequence_and_model(self):
        """Test unreadable inputs."""
        with self.assertRaises(InvalidArgumentError):
            classifier.build_dataset([], root=self.tmp.name)
        with self.assertRaises(MissingMetadataError):
            classifier.build_dataset([ManifestEntry(dir="absent", label=0)], root=self.tmp.name)
        with self.assertRaises(InvalidArgumentError):
            classifier.load_svm(os.path.join(self.tmp.name, "absent.json"))


if __name__ == "__main__":
    unittest.main()
