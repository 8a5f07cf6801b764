import numpy as np
import pytest

from sketchepitome.classifier import (
    LinearSvmOvr,
    RbfSvmOvr,
    SketchClassifier,
    _rbf_kernel,
    cross_validate,
    evaluate,
    load_model,
    save_model,
    stratified_folds,
)
from sketchepitome.errors import DataError


def two_blob_data(n=40, seed=0):
    rng = np.random.default_rng(seed)
    X = np.concatenate([rng.normal(-2, 0.5, size=(n, 2)), rng.normal(2, 0.5, size=(n, 2))])
    y = ["a"] * n + ["b"] * n
    return X, y


def qp_oracle(Kt, y, C, iters=60_000, step=0.02):
    """Projected gradient ascent on the box-constrained dual."""
    alpha = np.zeros(len(y))
    Q = np.outer(y, y) * Kt
    for _ in range(iters):
        grad = 1.0 - Q @ alpha
        alpha = np.clip(alpha + step * grad, 0.0, C)
    return alpha


class TestLinearSvm:
    def test_separable_training_accuracy(self):
        X, y = two_blob_data()
        svm = LinearSvmOvr(C=10.0, seed=0).fit(X, y)
        assert np.mean(svm.predict(X) == np.asarray(y, dtype=object)) == 1.0

    def test_objective_decreases(self):
        X, y = two_blob_data(seed=4)
        svm = LinearSvmOvr(C=1.0, epochs=20, seed=1).fit(X, y)
        assert svm.objective_trace_[-1] < svm.objective_trace_[0]

    def test_single_category_rejected(self):
        with pytest.raises(DataError):
            LinearSvmOvr().fit(np.zeros((5, 2)), ["same"] * 5)

    def test_dimension_mismatch(self):
        X, y = two_blob_data()
        svm = LinearSvmOvr(seed=0).fit(X, y)
        with pytest.raises(DataError):
            svm.decision_function(np.zeros((3, 5)))

    def test_zero_feature_predicts_bias_argmax(self):
        X, y = two_blob_data(seed=2)
        svm = LinearSvmOvr(C=1.0, seed=0).fit(X, y)
        scores = svm.decision_function(np.zeros((1, 2)))[0]
        np.testing.assert_allclose(scores, svm.biases_)
        assert svm.predict(np.zeros((1, 2)))[0] == svm.classes_[np.argmax(svm.biases_)]

    def test_seed_reproducibility(self):
        X, y = two_blob_data(seed=3)
        a = LinearSvmOvr(C=1.0, seed=5).fit(X, y)
        b = LinearSvmOvr(C=1.0, seed=5).fit(X, y)
        assert np.array_equal(a.weights_, b.weights_)
        assert np.array_equal(a.biases_, b.biases_)

    def test_argmax_consistency(self):
        rng = np.random.default_rng(6)
        X = rng.normal(size=(30, 4))
        y = [["u", "v", "w"][i % 3] for i in range(30)]
        svm = LinearSvmOvr(C=10.0, seed=0).fit(X, y)
        probes = rng.normal(size=(50, 4))
        scores = svm.decision_function(probes)
        preds = svm.predict(probes)
        for row, p in zip(scores, preds):
            assert p == svm.classes_[np.argmax(row)]


class TestRbfSvm:
    def test_xor_training_accuracy(self):
        X = np.array([[0.0, 0.0], [1.0, 1.0], [0.0, 1.0], [1.0, 0.0]])
        y = ["p", "p", "n", "n"]
        svm = RbfSvmOvr(C=100.0, gamma=1.0).fit(X, y)
        assert np.mean(svm.predict(X) == np.asarray(y, dtype=object)) == 1.0

    def test_xor_duals_match_qp_oracle(self):
        X = np.array([[0.0, 0.0], [1.0, 1.0], [0.0, 1.0], [1.0, 0.0]])
        yy = np.array([1.0, 1.0, -1.0, -1.0])
        C, gamma = 100.0, 1.0
        Kt = _rbf_kernel(X, X, gamma) + 1.0
        oracle_alpha = qp_oracle(Kt, yy, C)
        svm = RbfSvmOvr(C=C, gamma=gamma).fit(X, ["p", "p", "n", "n"])
        # class "n" and "p" problems are sign flips of each other; compare "p"
        p_index = list(svm.classes_).index("p")
        mine = np.zeros(4)
        sv = svm.support_vectors_[p_index]
        coef = svm.dual_coefs_[p_index]
        for vec, c in zip(sv, coef):
            i = int(np.argmin(np.abs(X - vec).sum(axis=1)))
            mine[i] = c * yy[i]  # back to raw alpha
        np.testing.assert_allclose(mine, oracle_alpha, atol=1e-5)

    def test_bias_equals_coef_sum(self):
        X, y = two_blob_data(n=15, seed=8)
        svm = RbfSvmOvr(C=10.0, gamma=0.5).fit(X, y)
        for r in range(2):
            assert abs(svm.biases_[r] - svm.dual_coefs_[r].sum()) < 1e-12


class TestCrossValidate:
    def test_single_candidate(self):
        X, y = two_blob_data(n=20, seed=1)
        best, table = cross_validate(X, y, c_grid=(1.0,), folds=4, seed=0)
        assert best == (1.0, None)
        assert len(table) == 1

    def test_deterministic(self):
        X, y = two_blob_data(n=20, seed=2)
        first = cross_validate(X, y, c_grid=(0.01, 100.0), folds=4, seed=3)
        second = cross_validate(X, y, c_grid=(0.01, 100.0), folds=4, seed=3)
        assert first == second

    def test_tie_breaks_to_smallest(self):
        X, y = two_blob_data(n=20, seed=5)  # separable: every C works
        best, table = cross_validate(X, y, c_grid=(100.0, 0.1, 10.0), folds=4, seed=0)
        accs = [row["mean_accuracy"] for row in table]
        assert best[0] == min(
            row["C"] for row in table if row["mean_accuracy"] == max(accs)
        )

    def test_stratified_proportions(self):
        rng = np.random.default_rng(7)
        y = ["a"] * 25 + ["b"] * 10 + ["c"] * 15
        folds = stratified_folds(y, 5, seed=1)
        y_arr = np.asarray(y, dtype=object)
        for f in range(5):
            members = y_arr[folds == f]
            for cat, total in (("a", 25), ("b", 10), ("c", 15)):
                expected = total / 5
                assert abs((members == cat).sum() - expected) <= 1

    def test_category_too_small(self):
        y = ["a"] * 10 + ["b"] * 3
        with pytest.raises(DataError):
            stratified_folds(y, 5, seed=0)


class TestEvaluate:
    def test_training_set_separable(self):
        X, y = two_blob_data(seed=9)
        svm = LinearSvmOvr(C=10.0, seed=0).fit(X, y)
        report = evaluate(svm, X, y)
        assert report.accuracy == 1.0
        assert report.confusion.trace() == len(y)

    def test_single_wrong_item(self):
        X, y = two_blob_data(seed=10)
        svm = LinearSvmOvr(C=10.0, seed=0).fit(X, y)
        report = evaluate(svm, X[:1], ["b"])  # first point is really "a"
        assert report.accuracy == 0.0
        assert report.confusion[1, 0] == 1
        assert report.confusion.sum() == 1

    def test_accuracy_is_confusion_trace(self):
        rng = np.random.default_rng(11)
        X = rng.normal(size=(100, 3))
        y = [["a", "b", "c"][i % 3] for i in range(100)]
        svm = LinearSvmOvr(C=1.0, seed=0).fit(X, y)
        report = evaluate(svm, rng.normal(size=(40, 3)), [["a", "b", "c"][i % 3] for i in range(40)])
        assert report.accuracy == report.confusion.trace() / report.confusion.sum()
        np.testing.assert_array_equal(
            report.per_category_counts, report.confusion.sum(axis=1)
        )

    def test_empty_test_set(self):
        X, y = two_blob_data(seed=12)
        svm = LinearSvmOvr(seed=0).fit(X, y)
        with pytest.raises(DataError):
            evaluate(svm, np.zeros((0, 2)), [])


def tiny_canvas_problem(side=64, per_class=12, seed=0):
    """Small canvas classification problem: horizontal vs vertical bars."""
    rng = np.random.default_rng(seed)
    X, y = [], []
    for i in range(per_class):
        c = np.zeros((side, side), dtype=np.uint8)
        r = int(rng.integers(12, side - 12))
        c[r - 1:r + 1, 8:-8] = 1
        X.append(c)
        y.append("horizontal")
    for i in range(per_class):
        c = np.zeros((side, side), dtype=np.uint8)
        col = int(rng.integers(12, side - 12))
        c[8:-8, col - 1:col + 1] = 1
        X.append(c)
        y.append("vertical")
    return np.stack(X), y


@pytest.fixture(scope="module")
def tiny_fitted():
    X, y = tiny_canvas_problem()
    clf = SketchClassifier(
        side=64, grid=8, patch=16, pca_dim=16, gmm_components=4,
        pca_sample=5000, gmm_sample=2000, c_grid=(1.0, 10.0), folds=3, seed=1,
    ).fit(X, y)
    return clf, X, y


class TestSketchClassifier:
    def test_fit_predict(self, tiny_fitted):
        clf, X, y = tiny_fitted
        assert np.mean(clf.predict(X) == np.asarray(y, dtype=object)) == 1.0

    def test_classify_matches_predict(self, tiny_fitted):
        clf, X, y = tiny_fitted
        category, scores = clf.predict_canvas(X[0])
        assert category == clf.classes_[np.argmax(scores)]

    def test_save_load_identical_scores(self, tiny_fitted, tmp_path):
        clf, X, y = tiny_fitted
        path = tmp_path / "model.epit"
        save_model(clf, path)
        loaded = load_model(path)
        assert list(loaded.classes_) == list(clf.classes_)
        for canvas in X[:6]:
            a = clf.predict_canvas(canvas)
            b = loaded.predict_canvas(canvas)
            assert a[0] == b[0]
            np.testing.assert_allclose(a[1], b[1], atol=1e-12, rtol=0)

    def test_container_magic_and_version(self, tiny_fitted, tmp_path):
        clf, X, y = tiny_fitted
        path = tmp_path / "model.epit"
        save_model(clf, path)
        raw = path.read_bytes()
        assert raw[:4] == b"EPIT"
        bad = tmp_path / "bad.epit"
        bad.write_bytes(b"XXXX" + raw[4:])
        with pytest.raises(DataError):
            load_model(bad)
        future = tmp_path / "future.epit"
        future.write_bytes(raw[:4] + b"\x63\x00\x00\x00" + raw[8:])
        with pytest.raises(DataError):
            load_model(future)
        truncated = tmp_path / "short.epit"
        truncated.write_bytes(raw[:-10])
        with pytest.raises(DataError):
            load_model(truncated)

    def test_rbf_round_trip(self, tmp_path):
        X, y = tiny_canvas_problem(per_class=10, seed=3)
        clf = SketchClassifier(
            side=64, grid=8, patch=16, pca_dim=8, gmm_components=2,
            pca_sample=3000, gmm_sample=1000, kernel="rbf", c_grid=(10.0,),
            gamma_grid=(0.1,), folds=2, seed=2,
        ).fit(X, y)
        path = tmp_path / "rbf.epit"
        save_model(clf, path)
        loaded = load_model(path)
        for canvas in X[:4]:
            a, sa = clf.predict_canvas(canvas)
            b, sb = loaded.predict_canvas(canvas)
            assert a == b
            np.testing.assert_allclose(sa, sb, atol=1e-12, rtol=0)

    def test_bad_canvas_shape(self):
        clf = SketchClassifier(side=64)
        with pytest.raises(DataError):
            clf.fit(np.zeros((4, 32, 32), dtype=np.uint8), ["a", "a", "b", "b"])
