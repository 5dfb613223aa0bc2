"""RBF-kernel SVM classification of speckle-fluctuation difference images.

Features are absolute differences of consecutive selected frames, block-mean
downsampled to a 64x64 grid. Multi-class problems are split one-vs-one and
each binary dual is solved by sequential minimal optimization with
maximal-violating-pair selection.
"""

import json
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np
import pandas as pd
from scipy.spatial.distance import cdist

from speckle_viscometry.errors import FrameStoreError, InvalidArgumentError, RegionTooSmallError, TrainingError
from speckle_viscometry.framestore import read_sequence
from speckle_viscometry.frames import FrameSequence
from speckle_viscometry.models import ConfusionMatrix, CropRegion, FrameSelection, ManifestEntry, PairwiseSvm, SvmModel
from speckle_viscometry.pipeline import crop_dynamic
from speckle_viscometry.stabilizer import consecutive_selection, stabilize
from speckle_viscometry.utils import SpeckleMessage, load_model, resolve_threads

GRID = 64
DEFAULT_C = 10.0
KKT_TOLERANCE = 1e-3
MAX_ITERATIONS = 1_000_000
MIN_CURVATURE = 1e-12


@dataclass
class FeatureVector:
    """One difference image, flattened, with its class label and source sequence."""

    values: np.ndarray
    label: int | None = None
    sequence_id: str = ""


@dataclass
class Dataset:
    """Stacked feature vectors bound to their source sequences."""

    features: np.ndarray
    labels: np.ndarray
    sequence_ids: list[str]
    class_names: dict[int, str] = field(default_factory=dict)

    @classmethod
    def from_vectors(cls, vectors: list[FeatureVector], class_names: dict[int, str] | None = None) -> "Dataset":
        """Stack feature vectors; every vector needs a label."""
        if not vectors:
            raise InvalidArgumentError("Dataset needs at least one feature vector")
        if any(v.label is None for v in vectors):
            raise InvalidArgumentError("Every feature vector in a dataset needs a label")
        dims = {v.values.size for v in vectors}
        if len(dims) != 1:
            raise InvalidArgumentError(f"Feature vectors have inconsistent dimensions {sorted(dims)}")
        features = np.stack([np.asarray(v.values, dtype=np.float64).ravel() for v in vectors])
        if not np.all(np.isfinite(features)):
            raise InvalidArgumentError("Feature values must be finite")
        return cls(
            features=features,
            labels=np.array([v.label for v in vectors], dtype=np.int64),
            sequence_ids=[v.sequence_id for v in vectors],
            class_names=dict(class_names or {}),
        )

    def __len__(self) -> int:
        """Number of feature vectors."""
        return int(self.labels.size)


@dataclass
class Prediction:
    """Predicted label with its one-vs-one vote tally."""

    label: int
    votes: dict[int, int]
    margin: dict[int, float]


def _block_edges(length: int) -> np.ndarray:
    """Start offsets of GRID near-equal blocks covering length pixels."""
    return (np.arange(GRID) * length) // GRID


def downsample(image: np.ndarray) -> np.ndarray:
    """Block-mean an image of at least GRID x GRID pixels to GRID x GRID."""
    height, width = image.shape
    row_edges, col_edges = _block_edges(height), _block_edges(width)
    sums = np.add.reduceat(np.add.reduceat(image, row_edges, axis=0), col_edges, axis=1)
    rows = np.diff(np.append(row_edges, height))
    cols = np.diff(np.append(col_edges, width))
    return sums / np.outer(rows, cols)


def featurize(
    seq: FrameSequence, selection: FrameSelection, region: CropRegion, label: int | None = None, sequence_id: str = ""
) -> list[FeatureVector]:
    """Difference images of consecutive selected frames over the region.

    Args:
        seq: Single-channel sequence.
        selection: Selected frames; n frames give n - 1 vectors.
        region: Crop region, at least 64 x 64.
        label: Class label attached to every vector.
        sequence_id: Source sequence attached to every vector.

    Returns:
        Unstandardized feature vectors of length 4096.

    Raises:
        RegionTooSmallError: The region is smaller than 64 x 64.

    """
    if region.width < GRID or region.height < GRID:
        raise RegionTooSmallError(f"Region {region.width}x{region.height} is smaller than {GRID}x{GRID}")
    if selection.indices[-1] >= len(seq):
        raise InvalidArgumentError(f"Selected frame {selection.indices[-1]} is outside a {len(seq)}-frame sequence")
    rows, cols = region.slices()
    vectors = []
    for a, b in zip(selection.indices, selection.indices[1:], strict=False):
        diff = np.abs(seq.frames[b, rows, cols].astype(np.float64) - seq.frames[a, rows, cols].astype(np.float64))
        vectors.append(FeatureVector(values=downsample(diff).ravel(), label=label, sequence_id=sequence_id))
    return vectors


def rbf_kernel(x: np.ndarray, y: np.ndarray, gamma: float) -> np.ndarray:
    """Kernel matrix exp(-gamma * ||x - y||^2)."""
    return np.exp(-gamma * cdist(np.atleast_2d(x), np.atleast_2d(y), "sqeuclidean"))


def smo(kernel: np.ndarray, y: np.ndarray, C: float, tolerance: float = KKT_TOLERANCE) -> tuple[np.ndarray, float]:
    """Solve a binary soft-margin dual by SMO.

    Works on beta = y * alpha with A_k <= beta_k <= B_k and sum(beta) = 0. Each
    step moves the maximal violating pair; the loop ends when the violation
    drops below tolerance.

    Args:
        kernel: (n, n) kernel matrix.
        y: Labels in {-1, +1}.
        C: Box constraint.
        tolerance: KKT tolerance.

    Returns:
        (alpha, bias) with alpha in [0, C].

    """
    y = y.astype(np.float64)
    n = y.size
    lower = np.minimum(0.0, y * C)
    upper = np.maximum(0.0, y * C)
    beta = np.zeros(n)
    gradient = y.copy()
    for _ in range(MAX_ITERATIONS):
        can_rise = beta < upper
        can_fall = beta > lower
        i = int(np.argmax(np.where(can_rise, gradient, -np.inf)))
        j = int(np.argmin(np.where(can_fall, gradient, np.inf)))
        if gradient[i] - gradient[j] <= tolerance:
            break
        curvature = max(kernel[i, i] + kernel[j, j] - 2.0 * kernel[i, j], MIN_CURVATURE)
        step = min(upper[i] - beta[i], beta[j] - lower[j], (gradient[i] - gradient[j]) / curvature)
        beta[i] = min(beta[i] + step, upper[i])
        beta[j] = max(beta[j] - step, lower[j])
        gradient -= step * (kernel[i] - kernel[j])
    else:  # pragma: no cover
        logging.warning(
            SpeckleMessage(stage="train", target=f"{n} vectors", message="SMO hit the iteration limit").to_json()
        )
    free = (beta > lower) & (beta < upper)
    if free.any():
        bias = float(gradient[free].mean())
    else:
        rise = np.where(beta < upper, gradient, -np.inf).max()
        fall = np.where(beta > lower, gradient, np.inf).min()
        bias = float((rise + fall) / 2.0)
    return y * beta, bias


def _train_pair(
    features: np.ndarray, labels: np.ndarray, positive: int, negative: int, gamma: float, C: float, tolerance: float
) -> PairwiseSvm:
    """Train one binary sub-problem."""
    members = (labels == positive) | (labels == negative)
    x = features[members]
    if np.ptp(x, axis=0).max() == 0.0:
        raise TrainingError("All feature vectors are identical", (positive, negative))
    y = np.where(labels[members] == positive, 1, -1)
    alpha, bias = smo(rbf_kernel(x, x, gamma), y, C, tolerance)
    support = alpha > 0
    if not support.any():  # pragma: no cover
        raise TrainingError("No support vectors", (positive, negative))
    return PairwiseSvm(
        positive=positive,
        negative=negative,
        support_vectors=x[support].tolist(),
        alphas=alpha[support].tolist(),
        sv_labels=y[support].tolist(),
        bias=bias,
    )


def train_svm(
    dataset: Dataset,
    C: float = DEFAULT_C,
    gamma: float | None = None,
    tolerance: float = KKT_TOLERANCE,
    threads: int | None = None,
) -> SvmModel:
    """Train a one-vs-one RBF SVM.

    Features are standardized with the training mean and std (std 0 maps to
    1). The default gamma is 1 / (d * var) of the standardized features.

    Args:
        dataset: Training vectors.
        C: Box constraint.
        gamma: RBF width; None selects the heuristic.
        tolerance: KKT tolerance of SMO.
        threads: Worker threads for the pairwise problems.

    Returns:
        The trained model.

    Raises:
        InvalidArgumentError: Fewer than two classes or fewer than two vectors
            in some class.
        TrainingError: A pair whose vectors are all identical.

    """
    if not C > 0:
        raise InvalidArgumentError(f"C must be positive, got {C}")
    classes, counts = np.unique(dataset.labels, return_counts=True)
    if classes.size < 2:
        raise InvalidArgumentError("Training needs at least two classes")
    if counts.min() < 2:
        raise InvalidArgumentError(f"Class {int(classes[np.argmin(counts)])} has fewer than two training vectors")

    mean = dataset.features.mean(axis=0)
    std = dataset.features.std(axis=0)
    std[std == 0] = 1.0
    features = (dataset.features - mean) / std
    if gamma is None:
        variance = float(features.var())
        gamma = 1.0 / (features.shape[1] * variance) if variance > 0 else 1.0 / features.shape[1]
    if not gamma > 0:
        raise InvalidArgumentError(f"gamma must be positive, got {gamma}")

    pairs = [(int(a), int(b)) for a, b in combinations(classes, 2)]
    logging.info(
        SpeckleMessage(
            stage="train",
            target=f"{len(dataset)} vectors",
            message=f"Training {len(pairs)} pairwise SVMs (C={C}, gamma={gamma:.6g})",
        ).to_json()
    )
    with ThreadPoolExecutor(max_workers=resolve_threads(threads)) as executor:
        trained = list(
            executor.map(
                lambda pair: _train_pair(features, dataset.labels, pair[0], pair[1], gamma, C, tolerance), pairs
            )
        )
    return SvmModel(
        classes=[int(c) for c in classes],
        class_names={int(k): v for k, v in dataset.class_names.items()},
        gamma=gamma,
        C=C,
        tolerance=tolerance,
        feature_mean=mean.tolist(),
        feature_std=std.tolist(),
        pairs=trained,
        training_sequences=sorted(set(dataset.sequence_ids) - {""}),
    )


def decision_values(model: SvmModel, features: np.ndarray) -> np.ndarray:
    """Pairwise decision values, shape (m, n_pairs); positive favours pair.positive."""
    x = (np.atleast_2d(features) - np.asarray(model.feature_mean)) / np.asarray(model.feature_std)
    values = np.empty((x.shape[0], len(model.pairs)))
    for p, pair in enumerate(model.pairs):
        coef = np.asarray(pair.alphas) * np.asarray(pair.sv_labels)
        values[:, p] = rbf_kernel(x, np.asarray(pair.support_vectors), model.gamma) @ coef + pair.bias
    return values


def predict(model: SvmModel, features) -> list[Prediction]:
    """One-vs-one majority vote.

    Ties go to the class with the larger summed |decision value| over its won
    pairs, then to the lowest label.
    """
    if isinstance(features, list):
        features = np.stack([np.asarray(v.values, dtype=np.float64).ravel() for v in features])
    values = decision_values(model, np.asarray(features, dtype=np.float64))
    predictions = []
    for row in values:
        votes = {c: 0 for c in model.classes}
        margin = {c: 0.0 for c in model.classes}
        for pair, value in zip(model.pairs, row, strict=False):
            winner = pair.positive if value > 0 else pair.negative
            votes[winner] += 1
            margin[winner] += abs(float(value))
        label = min(model.classes, key=lambda c: (-votes[c], -margin[c], c))
        predictions.append(Prediction(label=label, votes=votes, margin=margin))
    return predictions


def regroup(labels, mapping: dict[int, int]) -> np.ndarray:
    """Map class labels onto group labels (e.g. viscous vs less viscous)."""
    try:
        return np.array([mapping[int(label)] for label in np.asarray(labels).ravel()], dtype=np.int64)
    except KeyError as e:
        raise InvalidArgumentError(f"Label {e.args[0]} has no group in the mapping") from e


def confusion_matrix(true_labels, predicted_labels, labels: list[int] | None = None) -> ConfusionMatrix:
    """Counts of true (rows) against predicted (columns) labels."""
    true_labels = np.asarray(true_labels, dtype=np.int64)
    predicted_labels = np.asarray(predicted_labels, dtype=np.int64)
    if true_labels.size == 0:
        raise InvalidArgumentError("Cannot evaluate an empty test set")
    if labels is None:
        labels = sorted({int(x) for x in true_labels} | {int(x) for x in predicted_labels})
    position = {label: i for i, label in enumerate(labels)}
    counts = np.zeros((len(labels), len(labels)), dtype=np.int64)
    for t, p in zip(true_labels, predicted_labels, strict=False):
        counts[position[int(t)], position[int(p)]] += 1
    rows = counts.sum(axis=1)
    recall = [float(counts[i, i] / rows[i]) if rows[i] else 0.0 for i in range(len(labels))]
    return ConfusionMatrix(
        labels=list(labels),
        counts=counts.tolist(),
        accuracy=float(np.trace(counts) / counts.sum()),
        recall=recall,
    )


def evaluate(model: SvmModel, test: Dataset, mapping: dict[int, int] | None = None) -> ConfusionMatrix:
    """Predict a test set and tabulate the confusion matrix.

    Args:
        model: Trained model.
        test: Test vectors; must share no sequence id with the training set.
        mapping: Optional label regrouping applied to truth and prediction.

    Raises:
        InvalidArgumentError: Test and training sequences overlap.

    """
    overlap = (set(test.sequence_ids) - {""}) & set(model.training_sequences)
    if overlap:
        raise InvalidArgumentError(f"Test sequences overlap the training set: {sorted(overlap)}")
    predicted = np.array([p.label for p in predict(model, test.features)], dtype=np.int64)
    truth = test.labels
    labels = sorted(set(model.classes) | {int(x) for x in truth})
    if mapping is not None:
        truth, predicted = regroup(truth, mapping), regroup(predicted, mapping)
        labels = sorted(set(mapping.values()))
    return confusion_matrix(truth, predicted, labels)


def confusion_frame(matrix: ConfusionMatrix, names: dict[int, str] | None = None) -> pd.DataFrame:
    """Confusion matrix as a DataFrame indexed by true label, columns by predicted label."""
    names = names or {}
    tags = [names.get(label, str(label)) for label in matrix.labels]
    frame = pd.DataFrame(matrix.counts, index=tags, columns=tags)
    frame.index.name = "true"
    return frame


def sequence_features(
    seq: FrameSequence,
    label: int | None = None,
    sequence_id: str = "",
    use_stabilizer: bool = False,
    n_select: int = 10,
    threshold: float = 0.85,
    crop: str = "full",
) -> list[FeatureVector]:
    """Select frames, pick the region and featurize one sequence."""
    selection = stabilize(seq, threshold, n_select) if use_stabilizer else consecutive_selection(0, n_select)
    if crop == "auto":
        region = crop_dynamic(seq.frames[selection.indices[0]])
    else:
        region = CropRegion.full_frame(seq.height, seq.width)
    return featurize(seq, selection, region, label, sequence_id)


def read_manifest_entries(path: str) -> list[ManifestEntry]:
    """Read a dataset manifest: a JSON list of {dir, label, ...}."""
    try:
        with open(path, encoding="utf-8") as f:
            document = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise InvalidArgumentError(f"Cannot read manifest {path}: {e}") from e
    if not isinstance(document, list):
        raise InvalidArgumentError(f"Manifest {path} must be a JSON list")
    return [load_model(ManifestEntry, entry) for entry in document]


def build_dataset(
    entries: list[ManifestEntry],
    root: str = ".",
    use_stabilizer: bool = False,
    n_select: int = 10,
    threshold: float = 0.85,
    crop: str = "full",
    threads: int | None = None,
) -> Dataset:
    """Read and featurize every sequence of a manifest.

    Relative dirs are resolved against root. The sequence id defaults to the
    dir when the manifest gives none.
    """
    if not entries:
        raise InvalidArgumentError("Manifest lists no sequences")

    def one(entry: ManifestEntry) -> list[FeatureVector]:
        """Featurize one manifest entry."""
        directory = entry.dir if os.path.isabs(entry.dir) else os.path.join(root, entry.dir)
        try:
            seq = read_sequence(directory)
        except FrameStoreError:
            logging.error(
                SpeckleMessage(stage="dataset", target=entry.dir, message="Cannot read sequence").to_json()
            )
            raise
        return sequence_features(
            seq, entry.label, entry.sequence_id or entry.dir, use_stabilizer, n_select, threshold, crop
        )

    with ThreadPoolExecutor(max_workers=resolve_threads(threads)) as executor:
        vectors = [v for chunk in executor.map(one, entries) for v in chunk]
    names = {entry.label: entry.class_name for entry in entries if entry.class_name}
    return Dataset.from_vectors(vectors, names)


def save_model(model: SvmModel, path: str) -> None:
    """Write a model as JSON."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        f.write(model.model_dump_json())


def load_svm(path: str) -> SvmModel:
    """Read a model written by save_model."""
    try:
        with open(path, encoding="utf-8") as f:
            return load_model(SvmModel, f.read())
    except OSError as e:
        raise InvalidArgumentError(f"Cannot read model {path}: {e}") from e
