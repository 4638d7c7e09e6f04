"""
Tests for the kernel SVM, metrics and k-fold evaluation.
"""
import itertools
import math

import numpy as np
import pytest
from sklearn.svm import SVC

from libs.classify import (REFERENCE_CLASSES, REFERENCE_CONFUSION, BinarySvm, Dataset, SvmModel,
                           confusion_matrix, decision_function, kfold_evaluate, linear_kernel,
                           metrics, quadratic_kernel, stratified_folds, svm_predict, svm_train)
from libs.errors import ClassifierError, ConvergenceError


def blobs(per_class=12, classes=3, seed=0):
    """Well-separated Gaussian clusters, one per class."""
    rng = np.random.default_rng(seed)
    centres = [(6.0 * math.cos(2 * math.pi * c / classes), 6.0 * math.sin(2 * math.pi * c / classes))
               for c in range(classes)]
    features = np.vstack([rng.normal(centre, 0.3, size=(per_class, 2)) for centre in centres])
    labels = np.repeat(np.arange(classes), per_class)
    return Dataset(features, labels)


def xor(per_cluster=10, seed=0):
    rng = np.random.default_rng(seed)
    corners = [(1.0, 1.0), (-1.0, -1.0), (1.0, -1.0), (-1.0, 1.0)]
    features = np.vstack([rng.normal(corner, 0.1, size=(per_cluster, 2)) for corner in corners])
    labels = np.repeat([0, 0, 1, 1], per_cluster)
    return Dataset(features, labels)


class TestMetrics:
    """Confusion-matrix metrics."""

    def test_reference_confusion(self):
        """Test accuracy and recall of the reference 7-class matrix."""
        result = metrics(REFERENCE_CONFUSION)
        assert len(REFERENCE_CLASSES) == 7
        assert result.accuracy == pytest.approx(294 / 327)
        assert result.recall[REFERENCE_CLASSES.index('surprise')] == pytest.approx(80 / 83)
        assert 0.0 < result.macro_f1 < 1.0

    def test_perfect_and_empty_classes(self):
        """Test a diagonal matrix scores 1 and an unused class scores 0."""
        assert metrics(np.diag([3, 4])).macro_f1 == pytest.approx(1.0)
        partial = metrics(np.array([[2, 0], [0, 0]]))
        assert partial.accuracy == 1.0
        assert partial.f1[1] == 0.0

    def test_invalid_matrices(self):
        """Test non-square and negative matrices are rejected."""
        with pytest.raises(ClassifierError):
            metrics(np.zeros((2, 3)))
        with pytest.raises(ClassifierError):
            metrics(np.array([[1, -1], [0, 1]]))

    def test_confusion_matrix(self):
        """Test rows are truth and columns predictions."""
        matrix = confusion_matrix([0, 0, 1, 2], [0, 1, 1, 2], [0, 1, 2])
        np.testing.assert_array_equal(matrix, [[1, 1, 0], [0, 1, 0], [0, 0, 1]])

    def test_reference_class_totals(self):
        """Test per-class truth and prediction totals of the reference matrix."""
        np.testing.assert_array_equal(REFERENCE_CONFUSION.sum(axis=1), [45, 18, 59, 25, 69, 28, 83])
        np.testing.assert_array_equal(REFERENCE_CONFUSION.sum(axis=0), [47, 21, 58, 21, 73, 25, 82])
        assert REFERENCE_CONFUSION.sum() == 327
        result = metrics(REFERENCE_CONFUSION)
        diagonal = np.diag(REFERENCE_CONFUSION)
        np.testing.assert_allclose(result.recall, diagonal / REFERENCE_CONFUSION.sum(axis=1))
        np.testing.assert_allclose(result.precision, diagonal / REFERENCE_CONFUSION.sum(axis=0))

    def test_reference_rebuilt_from_labels(self):
        """Test expanding the reference counts into label pairs gives the matrix back."""
        classes = range(len(REFERENCE_CLASSES))
        truth, predicted = [], []
        for t, p in itertools.product(classes, classes):
            truth += [t] * int(REFERENCE_CONFUSION[t, p])
            predicted += [p] * int(REFERENCE_CONFUSION[t, p])
        np.testing.assert_array_equal(confusion_matrix(truth, predicted, list(classes)),
                                      REFERENCE_CONFUSION)


class TestKernels:
    """Kernel functions."""

    def test_quadratic_kernel_expansion(self):
        """Test (u.v + 1)^2 equals the explicit degree-2 feature map's inner product."""
        def phi(x):
            r2 = math.sqrt(2.0)
            return np.array([1.0, r2 * x[0], r2 * x[1], x[0] ** 2, x[1] ** 2, r2 * x[0] * x[1]])

        rng = np.random.default_rng(3)
        u, v = rng.normal(size=(4, 2)), rng.normal(size=(5, 2))
        expected = np.array([[phi(a) @ phi(b) for b in v] for a in u])
        np.testing.assert_allclose(quadratic_kernel(u, v), expected, atol=1e-12)
        np.testing.assert_allclose(linear_kernel(u, v), u @ v.T)


class TestSvm:
    """Training and prediction."""

    def test_separable_blobs(self):
        """Test both kernels fit well-separated clusters exactly."""
        data = blobs()
        for kernel in ('quadratic', 'linear'):
            model = svm_train(data, c=1.0, kernel=kernel)
            np.testing.assert_array_equal(svm_predict(model, data.features), data.labels)

    def test_xor_needs_quadratic(self):
        """Test XOR is learned by the quadratic kernel but not the linear one."""
        data = xor()
        quadratic = svm_train(data, c=10.0, kernel='quadratic')
        assert np.mean(svm_predict(quadratic, data.features) == data.labels) == 1.0
        linear = svm_train(data, c=10.0, kernel='linear')
        assert np.mean(svm_predict(linear, data.features) == data.labels) < 1.0

    def test_decision_function_by_hand(self):
        """Test decision values of a hand-built linear model."""
        model = SvmModel((0, 1), (
            BinarySvm(0, np.array([[1.0, 0.0]]), np.array([2.0]), 1.0),
            BinarySvm(1, np.array([[0.0, 1.0]]), np.array([1.0]), 0.0),
        ), np.zeros(2), np.ones(2), kernel='linear')
        np.testing.assert_allclose(decision_function(model, [[3.0, 4.0]]), [[5.0, 4.0]])
        assert svm_predict(model, [[3.0, 4.0]])[0] == 0

    def test_ties_go_to_lowest_class(self):
        """Test equal decision values predict the lowest class label."""
        empty = np.zeros((0, 2))
        model = SvmModel((3, 7), (BinarySvm(3, empty, np.zeros(0), 0.0),
                                  BinarySvm(7, empty, np.zeros(0), 0.0)),
                         np.zeros(2), np.ones(2))
        np.testing.assert_array_equal(svm_predict(model, [[1.0, 2.0], [0.0, 0.0]]), [3, 3])

    def test_wrong_width(self):
        """Test prediction needs the training feature width."""
        model = svm_train(blobs(), kernel='linear')
        with pytest.raises(ClassifierError):
            svm_predict(model, np.zeros((1, 3)))

    def test_invalid_parameters(self):
        """Test C and kernel validation."""
        with pytest.raises(ClassifierError):
            svm_train(blobs(), c=0.0)
        with pytest.raises(ClassifierError):
            svm_train(blobs(), kernel='rbf')

    def test_iteration_bound(self):
        """Test the solver reports non-convergence."""
        with pytest.raises(ConvergenceError):
            svm_train(xor(), max_iterations=1)

    def test_deterministic(self):
        """Test identical seeds give identical models."""
        first = svm_train(xor(), seed=4)
        second = svm_train(xor(), seed=4)
        for a, b in zip(first.binaries, second.binaries):
            np.testing.assert_array_equal(a.coefficients, b.coefficients)
            assert a.rho == b.rho

    @pytest.mark.parametrize('seed', range(3))
    def test_matches_libsvm(self, seed):
        """Test binary decision values agree with libsvm's degree-2 polynomial SVC."""
        data = blobs(per_class=15, classes=2, seed=seed)
        model = svm_train(data, c=1.0, kernel='quadratic', tol=1e-6)
        x = model.standardize(data.features)
        reference = SVC(C=1.0, kernel='poly', degree=2, gamma=1.0, coef0=1.0, tol=1e-6)
        reference.fit(x, np.where(data.labels == 1, 1, -1))
        ours = decision_function(model, data.features)[:, 1]
        np.testing.assert_allclose(ours, reference.decision_function(x), atol=1e-3)
        np.testing.assert_array_equal(svm_predict(model, data.features), data.labels)


class TestDataset:
    """Dataset validation."""

    def test_row_mismatch(self):
        """Test features and labels must have the same length."""
        with pytest.raises(ClassifierError):
            Dataset(np.zeros((3, 2)), [0, 1])

    def test_single_class(self):
        """Test a dataset needs two classes."""
        with pytest.raises(ClassifierError):
            Dataset(np.zeros((3, 2)), [1, 1, 1])

    def test_non_finite(self):
        """Test NaN features are rejected."""
        with pytest.raises(ClassifierError):
            Dataset(np.array([[np.nan, 0.0], [1.0, 1.0]]), [0, 1])

    def test_class_names(self):
        """Test default class names follow sorted labels."""
        data = Dataset(np.zeros((4, 1)), [2, 0, 2, 0])
        assert data.class_names == ('0', '2')
        assert data.class_counts() == {0: 2, 2: 2}


class TestKfold:
    """Stratified cross-validation."""

    def test_stratified_folds(self):
        """Test each fold receives its share of every class."""
        labels = np.array([0] * 10 + [1] * 5)
        folds = stratified_folds(labels, 5, seed=1)
        for fold in range(5):
            assert np.sum((folds == fold) & (labels == 0)) == 2
            assert np.sum((folds == fold) & (labels == 1)) == 1
        np.testing.assert_array_equal(folds, stratified_folds(labels, 5, seed=1))

    def test_separable_evaluation(self):
        """Test k-fold on separable blobs is perfect."""
        data = blobs()
        report = kfold_evaluate(data, k=3, name='blobs')
        assert report.mean_accuracy == pytest.approx(1.0)
        assert report.mean_macro_f1 == pytest.approx(1.0)
        assert report.confusion.sum() == data.size
        np.testing.assert_array_equal(np.diag(report.confusion), [12, 12, 12])
        assert report.to_dict()['name'] == 'blobs'

    def test_parallel_folds_match(self):
        """Test concurrent folds give the same report."""
        data = blobs(seed=2)
        serial = kfold_evaluate(data, k=4, seed=5)
        parallel = kfold_evaluate(data, k=4, seed=5, jobs=3)
        np.testing.assert_array_equal(serial.confusion, parallel.confusion)
        assert serial.fold_accuracy == parallel.fold_accuracy

    def test_too_few_samples(self):
        """Test a class smaller than k is rejected."""
        with pytest.raises(ClassifierError):
            kfold_evaluate(blobs(per_class=3), k=4)
        with pytest.raises(ClassifierError):
            kfold_evaluate(blobs(), k=1)
