"""
Classification harness for FoldMark.
Soft-margin kernel SVMs (one-vs-rest) trained with an SMO solver, stratified
k-fold evaluation and confusion-matrix metrics.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from sklearn.metrics import confusion_matrix as sklearn_confusion_matrix

from .errors import ClassifierError, ConvergenceError

logger = logging.getLogger(__name__)

_TAU = 1e-12

# Reference 7-emotion confusion matrix (rows: truth, columns: prediction)
REFERENCE_CLASSES: Tuple[str, ...] = (
    'anger', 'contempt', 'disgust', 'fear', 'happy', 'sadness', 'surprise')
REFERENCE_CONFUSION = np.array([
    [38, 2, 3, 0, 0, 2, 0],
    [1, 15, 0, 0, 1, 1, 0],
    [5, 0, 54, 0, 0, 0, 0],
    [0, 0, 0, 19, 4, 0, 2],
    [0, 2, 0, 1, 66, 0, 0],
    [3, 0, 1, 1, 1, 22, 0],
    [0, 2, 0, 0, 1, 0, 80],
])


def quadratic_kernel(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    return (u @ v.T + 1.0) ** 2


def linear_kernel(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    return u @ v.T


KERNELS: Dict[str, Callable[[np.ndarray, np.ndarray], np.ndarray]] = {
    'quadratic': quadratic_kernel,
    'linear': linear_kernel,
}


@dataclass(frozen=True)
class Dataset:
    """Feature matrix with integer labels; class_names index by sorted label."""
    features: np.ndarray = field(compare=False)
    labels: np.ndarray = field(compare=False)
    class_names: Tuple[str, ...] = ()

    def __post_init__(self):
        features = np.atleast_2d(np.asarray(self.features, dtype=float))
        labels = np.asarray(self.labels).astype(int).ravel()
        if features.shape[0] != labels.shape[0]:
            raise ClassifierError(
                f"{features.shape[0]} feature rows but {labels.shape[0]} labels")
        if not np.all(np.isfinite(features)):
            raise ClassifierError("features contain non-finite values")
        if len(np.unique(labels)) < 2:
            raise ClassifierError("dataset needs at least two classes")
        object.__setattr__(self, 'features', features)
        object.__setattr__(self, 'labels', labels)
        if not self.class_names:
            object.__setattr__(self, 'class_names', tuple(str(c) for c in self.classes))
        elif len(self.class_names) != len(self.classes):
            raise ClassifierError(
                f"{len(self.class_names)} class names for {len(self.classes)} classes")

    @property
    def classes(self) -> np.ndarray:
        return np.unique(self.labels)

    @property
    def size(self) -> int:
        return self.features.shape[0]

    def class_counts(self) -> Dict[int, int]:
        return {int(c): int(np.sum(self.labels == c)) for c in self.classes}

    def subset(self, rows: np.ndarray) -> 'Dataset':
        return Dataset(self.features[rows], self.labels[rows], ())


@dataclass(frozen=True)
class BinarySvm:
    """One-vs-rest member: f(x) = sum(coef_i K(sv_i, x)) - rho, coef_i = alpha_i y_i."""
    positive_class: int
    support_vectors: np.ndarray = field(compare=False)
    coefficients: np.ndarray = field(compare=False)
    rho: float = 0.0
    iterations: int = 0


@dataclass(frozen=True)
class SvmModel:
    """Standardization parameters plus one binary SVM per class."""
    classes: Tuple[int, ...]
    binaries: Tuple[BinarySvm, ...]
    mean: np.ndarray = field(compare=False)
    scale: np.ndarray = field(compare=False)
    kernel: str = 'quadratic'
    c: float = 1.0

    @property
    def width(self) -> int:
        return self.mean.shape[0]

    def standardize(self, features: np.ndarray) -> np.ndarray:
        data = np.atleast_2d(np.asarray(features, dtype=float))
        if data.shape[1] != self.width:
            raise ClassifierError(f"expected {self.width} features, got {data.shape[1]}")
        return (data - self.mean) / self.scale


def _solve_binary(kernel_matrix: np.ndarray, y: np.ndarray, c: float, tol: float,
                  max_iterations: int) -> Tuple[np.ndarray, float, int]:
    """
    SMO on the soft-margin dual with maximal-violating-pair selection.

    Returns:
        (alpha, rho, iterations)

    Raises:
        ConvergenceError: KKT gap still above tol after max_iterations
    """
    n = len(y)
    q = (y[:, None] * y[None, :]) * kernel_matrix
    diagonal = np.diag(q)
    alpha = np.zeros(n)
    gradient = -np.ones(n)

    for iteration in range(max_iterations):
        up = ((alpha < c) & (y > 0)) | ((alpha > 0) & (y < 0))
        low = ((alpha < c) & (y < 0)) | ((alpha > 0) & (y > 0))
        score = -y * gradient
        if not up.any() or not low.any():
            break
        i = int(np.flatnonzero(up)[np.argmax(score[up])])
        j = int(np.flatnonzero(low)[np.argmin(score[low])])
        if score[i] - score[j] < tol:
            break

        old_i, old_j = alpha[i], alpha[j]
        if y[i] != y[j]:
            quad = max(diagonal[i] + diagonal[j] + 2.0 * q[i, j], _TAU)
            delta = (-gradient[i] - gradient[j]) / quad
            diff = alpha[i] - alpha[j]
            alpha[i] += delta
            alpha[j] += delta
            if diff > 0:
                if alpha[j] < 0:
                    alpha[j], alpha[i] = 0.0, diff
            elif alpha[i] < 0:
                alpha[i], alpha[j] = 0.0, -diff
            if diff > 0:
                if alpha[i] > c:
                    alpha[i], alpha[j] = c, c - diff
            elif alpha[j] > c:
                alpha[j], alpha[i] = c, c + diff
        else:
            quad = max(diagonal[i] + diagonal[j] - 2.0 * q[i, j], _TAU)
            delta = (gradient[i] - gradient[j]) / quad
            total = alpha[i] + alpha[j]
            alpha[i] -= delta
            alpha[j] += delta
            if total > c:
                if alpha[i] > c:
                    alpha[i], alpha[j] = c, total - c
            elif alpha[j] < 0:
                alpha[j], alpha[i] = 0.0, total
            if total > c:
                if alpha[j] > c:
                    alpha[j], alpha[i] = c, total - c
            elif alpha[i] < 0:
                alpha[i], alpha[j] = 0.0, total

        gradient += q[:, i] * (alpha[i] - old_i) + q[:, j] * (alpha[j] - old_j)
    else:
        raise ConvergenceError(f"SMO did not reach tolerance {tol} in {max_iterations} iterations",
                               iterations=max_iterations)

    y_gradient = y * gradient
    free = (alpha > 0) & (alpha < c)
    if free.any():
        rho = float(np.mean(y_gradient[free]))
    else:
        at_upper = alpha >= c
        upper_side = (at_upper & (y < 0)) | (~at_upper & (y > 0))
        ub = np.min(y_gradient[upper_side]) if upper_side.any() else np.inf
        lb = np.max(y_gradient[~upper_side]) if (~upper_side).any() else -np.inf
        rho = float((ub + lb) / 2.0) if np.isfinite(ub) and np.isfinite(lb) else 0.0
    return alpha, rho, iteration


def svm_train(data: Dataset, c: float = 1.0, seed: int = 0, kernel: str = 'quadratic',
              tol: float = 1e-3, max_iterations: int = 100000) -> SvmModel:
    """
    Train one-vs-rest soft-margin SVMs on standardized features.

    The seed fixes the row order the solver scans, which decides ties in
    working-set selection.

    Raises:
        ClassifierError: c <= 0 or unknown kernel
        ConvergenceError: A binary problem did not converge
    """
    if c <= 0:
        raise ClassifierError(f"C must be positive, got {c}")
    if kernel not in KERNELS:
        raise ClassifierError(f"unknown kernel {kernel!r}; choose from {sorted(KERNELS)}")

    mean = data.features.mean(axis=0)
    scale = data.features.std(axis=0)
    scale[scale == 0] = 1.0
    order = np.random.default_rng(seed).permutation(data.size)
    x = (data.features[order] - mean) / scale
    labels = data.labels[order]
    kernel_matrix = KERNELS[kernel](x, x)

    binaries = []
    for cls in data.classes:
        y = np.where(labels == cls, 1.0, -1.0)
        alpha, rho, iterations = _solve_binary(kernel_matrix, y, c, tol, max_iterations)
        support = alpha > 0
        binaries.append(BinarySvm(int(cls), x[support], alpha[support] * y[support], rho, iterations))
        logger.debug("class %d: %d support vectors, %d iterations", cls, int(support.sum()), iterations)

    return SvmModel(tuple(int(c_) for c_ in data.classes), tuple(binaries), mean, scale, kernel, c)


def decision_function(model: SvmModel, features: np.ndarray) -> np.ndarray:
    """Per-class decision values, shape (rows, classes)."""
    x = model.standardize(features)
    kernel = KERNELS[model.kernel]
    columns = [kernel(x, b.support_vectors) @ b.coefficients - b.rho if len(b.coefficients)
               else np.full(x.shape[0], -b.rho) for b in model.binaries]
    return np.column_stack(columns)


def svm_predict(model: SvmModel, features: np.ndarray) -> np.ndarray:
    """Class with the largest decision value; ties go to the lowest class."""
    scores = decision_function(model, features)
    return np.asarray(model.classes)[np.argmax(scores, axis=1)]


@dataclass(frozen=True)
class Metrics:
    accuracy: float
    macro_f1: float
    precision: np.ndarray = field(compare=False)
    recall: np.ndarray = field(compare=False)
    f1: np.ndarray = field(compare=False)


def metrics(confusion: np.ndarray) -> Metrics:
    """
    Accuracy and macro-F1 from a confusion matrix (rows truth, columns prediction).

    Raises:
        ClassifierError: Non-square matrix or negative entries
    """
    matrix = np.asarray(confusion, dtype=float)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise ClassifierError(f"confusion matrix must be square, got shape {matrix.shape}")
    if np.any(matrix < 0):
        raise ClassifierError("confusion matrix has negative entries")

    diagonal = np.diag(matrix)
    total = matrix.sum()
    predicted = matrix.sum(axis=0)
    actual = matrix.sum(axis=1)
    with np.errstate(divide='ignore', invalid='ignore'):
        precision = np.where(predicted > 0, diagonal / predicted, 0.0)
        recall = np.where(actual > 0, diagonal / actual, 0.0)
        f1 = np.where(precision + recall > 0,
                      2 * precision * recall / (precision + recall), 0.0)
    accuracy = float(diagonal.sum() / total) if total > 0 else 0.0
    return Metrics(accuracy, float(f1.mean()), precision, recall, f1)


def confusion_matrix(truth: Sequence[int], predicted: Sequence[int],
                     classes: Sequence[int]) -> np.ndarray:
    """Counts with rows as truth and columns as prediction, in `classes` order."""
    labels = [int(c) for c in classes]
    return np.asarray(sklearn_confusion_matrix(np.asarray(truth, dtype=int), np.asarray(predicted, dtype=int),
                                               labels=labels), dtype=int)


def stratified_folds(labels: np.ndarray, k: int, seed: int) -> np.ndarray:
    """Fold number per row: each class is shuffled and dealt round-robin."""
    rng = np.random.default_rng(seed)
    folds = np.empty(len(labels), dtype=int)
    for cls in np.unique(labels):
        rows = rng.permutation(np.flatnonzero(labels == cls))
        folds[rows] = np.arange(len(rows)) % k
    return folds


@dataclass(frozen=True)
class EvaluationReport:
    """k-fold results for one feature set."""
    name: str
    k: int
    c: float
    seed: int
    class_names: Tuple[str, ...]
    fold_accuracy: Tuple[float, ...]
    fold_macro_f1: Tuple[float, ...]
    confusion: np.ndarray = field(compare=False)

    @property
    def mean_accuracy(self) -> float:
        return float(np.mean(self.fold_accuracy))

    @property
    def mean_macro_f1(self) -> float:
        return float(np.mean(self.fold_macro_f1))

    def to_dict(self) -> Dict[str, Any]:
        return {
            'name': self.name,
            'k': self.k,
            'c': self.c,
            'seed': self.seed,
            'classes': list(self.class_names),
            'mean_accuracy': self.mean_accuracy,
            'mean_macro_f1': self.mean_macro_f1,
            'fold_accuracy': list(self.fold_accuracy),
            'fold_macro_f1': list(self.fold_macro_f1),
            'confusion': self.confusion.tolist(),
        }


def kfold_evaluate(data: Dataset, k: int = 10, c: float = 1.0, seed: int = 0,
                   kernel: str = 'quadratic', tol: float = 1e-3, max_iterations: int = 100000,
                   jobs: int = 1, name: str = '') -> EvaluationReport:
    """
    Stratified k-fold cross-validation.

    Args:
        data: Dataset with at least k samples per class
        k: Fold count (>= 2)
        c: SVM regularization
        seed: Fold shuffle and solver seed
        kernel: 'quadratic' or 'linear'
        tol: KKT tolerance
        max_iterations: Solver iteration bound per binary problem
        jobs: Folds trained concurrently
        name: Feature-set label for the report

    Raises:
        ClassifierError: k < 2 or a class has fewer than k samples
    """
    if k < 2:
        raise ClassifierError(f"k must be at least 2, got {k}")
    small = {cls: n for cls, n in data.class_counts().items() if n < k}
    if small:
        raise ClassifierError(f"classes with fewer than {k} samples: {small}")

    folds = stratified_folds(data.labels, k, seed)
    classes = data.classes

    def run_fold(fold: int) -> np.ndarray:
        train = np.flatnonzero(folds != fold)
        test = np.flatnonzero(folds == fold)
        model = svm_train(data.subset(train), c, seed, kernel, tol, max_iterations)
        predicted = svm_predict(model, data.features[test])
        return confusion_matrix(data.labels[test], predicted, classes)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            confusions: List[np.ndarray] = list(pool.map(run_fold, range(k)))
    else:
        confusions = [run_fold(fold) for fold in range(k)]

    per_fold = [metrics(m) for m in confusions]
    report = EvaluationReport(name, k, c, seed, data.class_names,
                              tuple(m.accuracy for m in per_fold),
                              tuple(m.macro_f1 for m in per_fold),
                              np.sum(confusions, axis=0))
    logger.info("%s: %d-fold accuracy %.4f, macro-F1 %.4f", name or 'features', k,
                report.mean_accuracy, report.mean_macro_f1)
    return report
