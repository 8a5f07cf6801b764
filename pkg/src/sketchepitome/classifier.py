"""Multi-class sketch classification: one-vs-rest SVMs over Fisher vectors,
stratified cross-validated grid search, evaluation, and a serializable
container that carries the whole canvas-to-label pipeline (raster and
descriptor settings, PCA, GMM, decision functions) so downstream stages
never depend on ambient configuration.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.exceptions import NotFittedError

from .config import PipelineConfig
from .errors import DataError
from .features import DescriptorExtractor, DiagonalGmm, FisherEncoder, PcaReducer
from .raster import BATTERIES, augment, check_canvas, dilate, rasterize
from .sketch_io import Dataset, Sketch, split_dataset, stable_rng

MODEL_MAGIC = b"EPIT"
MODEL_VERSION = 1


def _hinge_objective(X, Y, W, lam) -> float:
    margins = (X @ W.T) * Y
    hinge = np.maximum(0.0, 1.0 - margins)
    return float(0.5 * lam * (W**2).sum() + hinge.mean(axis=0).sum())


def _pegasos(X, Y, C, epochs, seed):
    """Epoch-based stochastic subgradient descent on the hinge loss.

    All one-vs-rest problems share the sample order, so the whole weight
    matrix updates per step. The weight matrix is kept as scale * V; the
    step size 1/(lam*(t+1)) makes the scale factor t/(t+1), never zero.
    Returns (W, per-epoch objective values).
    """
    n, d = X.shape
    k = Y.shape[1]
    lam = 1.0 / (C * n)
    V = np.zeros((k, d))
    s = 1.0
    t = 0
    rng = np.random.default_rng(seed)
    objectives = []
    for _ in range(epochs):
        for i in rng.permutation(n):
            t += 1
            eta = 1.0 / (lam * (t + 1))
            x = X[i]
            viol = s * (V @ x) * Y[i] < 1.0
            s *= 1.0 - eta * lam
            if viol.any():
                V[viol] += (eta / s) * Y[i, viol][:, None] * x[None, :]
        objectives.append(_hinge_objective(X, Y, s * V, lam))
    return s * V, np.asarray(objectives)


def _encode_labels(y, classes) -> np.ndarray:
    index = {c: i for i, c in enumerate(classes)}
    Y = -np.ones((len(y), len(classes)))
    for row, label in enumerate(y):
        Y[row, index[label]] = 1.0
    return Y


def _validate_xy(X, y):
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise DataError("training features must be a non-empty 2-D array")
    if X.shape[0] != len(y):
        raise DataError(f"{X.shape[0]} feature rows but {len(y)} labels")
    classes = sorted(set(y))
    if len(classes) < 2:
        raise DataError("need at least 2 categories to train")
    return X, classes


class LinearSvmOvr(BaseEstimator, ClassifierMixin):
    """Linear one-vs-rest SVM trained by deterministic Pegasos-style SGD.

    A constant feature carries the bias; ``objective_trace_`` holds the
    full hinge objective after every epoch.
    """

    def __init__(self, C: float = 1.0, epochs: int = 20, seed: int = 0):
        self.C = C
        self.epochs = epochs
        self.seed = seed

    def fit(self, X, y):
        X, classes = _validate_xy(X, y)
        Y = _encode_labels(y, classes)
        Xb = np.hstack([X, np.ones((X.shape[0], 1))])
        W, trace = _pegasos(Xb, Y, self.C, self.epochs, self.seed)
        self.classes_ = np.asarray(classes, dtype=object)
        self.weights_ = W[:, :-1]
        self.biases_ = W[:, -1]
        self.objective_trace_ = trace
        return self

    def _check_fitted(self):
        if not hasattr(self, "weights_"):
            raise NotFittedError("LinearSvmOvr is not fitted")

    def decision_function(self, X) -> np.ndarray:
        self._check_fitted()
        X = np.asarray(X, dtype=np.float64)
        if X.shape[-1] != self.weights_.shape[1]:
            raise DataError(
                f"feature dim {X.shape[-1]} does not match model dim {self.weights_.shape[1]}"
            )
        return X @ self.weights_.T + self.biases_

    def predict(self, X) -> np.ndarray:
        scores = self.decision_function(np.atleast_2d(np.asarray(X, dtype=np.float64)))
        return self.classes_[np.argmax(scores, axis=1)]


def _rbf_kernel(A, B, gamma) -> np.ndarray:
    a2 = (A**2).sum(axis=1)[:, None]
    b2 = (B**2).sum(axis=1)[None, :]
    d2 = np.maximum(a2 + b2 - 2.0 * (A @ B.T), 0.0)
    return np.exp(-gamma * d2)


def _dual_coordinate_ascent(Kt, y, C, tol, max_sweeps):
    """Box-constrained dual solve by cyclic coordinate ascent.

    ``Kt`` is the kernel with +1 added (the bias folded into the kernel),
    so the only constraints are 0 <= alpha <= C.
    """
    n = len(y)
    alpha = np.zeros(n)
    f = np.zeros(n)
    diag = np.ascontiguousarray(np.diag(Kt))
    for _ in range(max_sweeps):
        biggest = 0.0
        for i in range(n):
            delta = (1.0 - y[i] * f[i]) / diag[i]
            new = min(max(alpha[i] + delta, 0.0), C)
            step = new - alpha[i]
            if step != 0.0:
                alpha[i] = new
                f += step * y[i] * Kt[:, i]
                biggest = max(biggest, abs(step))
        if biggest < tol:
            break
    return alpha


class RbfSvmOvr(BaseEstimator, ClassifierMixin):
    """Kernel one-vs-rest SVM solved in the dual. O(n^2) memory; intended
    for moderate training sizes, which is why the linear path is the
    default elsewhere."""

    def __init__(self, C: float = 1.0, gamma: float = 1.0, tol: float = 1e-8,
                 max_sweeps: int = 200):
        self.C = C
        self.gamma = gamma
        self.tol = tol
        self.max_sweeps = max_sweeps

    def fit(self, X, y):
        X, classes = _validate_xy(X, y)
        Y = _encode_labels(y, classes)
        Kt = _rbf_kernel(X, X, self.gamma) + 1.0
        self.classes_ = np.asarray(classes, dtype=object)
        self.support_vectors_ = []
        self.dual_coefs_ = []
        biases = []
        for r in range(len(classes)):
            alpha = _dual_coordinate_ascent(Kt, Y[:, r], self.C, self.tol, self.max_sweeps)
            coef = alpha * Y[:, r]
            mask = alpha > 1e-12
            self.support_vectors_.append(X[mask].copy())
            self.dual_coefs_.append(coef[mask].copy())
            biases.append(float(coef.sum()))
        self.biases_ = np.asarray(biases)
        return self

    def _check_fitted(self):
        if not hasattr(self, "biases_"):
            raise NotFittedError("RbfSvmOvr is not fitted")

    def decision_function(self, X) -> np.ndarray:
        self._check_fitted()
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        scores = np.empty((X.shape[0], len(self.classes_)))
        for r, (sv, coef) in enumerate(zip(self.support_vectors_, self.dual_coefs_)):
            if len(sv) == 0:
                scores[:, r] = self.biases_[r]
                continue
            scores[:, r] = _rbf_kernel(X, sv, self.gamma) @ coef + self.biases_[r]
        return scores

    def predict(self, X) -> np.ndarray:
        scores = self.decision_function(X)
        return self.classes_[np.argmax(scores, axis=1)]


# --- cross-validation --------------------------------------------------------


def stratified_folds(y, folds: int, seed: int) -> np.ndarray:
    """Fold assignment (values 0..folds-1), stratified per category.

    Each category's examples are shuffled with a generator keyed by
    (seed, category) and dealt round-robin, so every fold's class counts
    differ from perfect proportionality by at most one example.
    """
    y = list(y)
    assignment = np.empty(len(y), dtype=np.int64)
    for category in sorted(set(y)):
        idx = np.asarray([i for i, label in enumerate(y) if label == category])
        if len(idx) < folds:
            raise DataError(
                f"category {category!r} has {len(idx)} examples, fewer than {folds} folds"
            )
        order = stable_rng(seed, f"fold|{category}").permutation(len(idx))
        for pos, j in enumerate(order):
            assignment[idx[j]] = pos % folds
    return assignment


def _make_svm(kernel, C, gamma, epochs, seed):
    if kernel == "linear":
        return LinearSvmOvr(C=C, epochs=epochs, seed=seed)
    return RbfSvmOvr(C=C, gamma=gamma)


def cross_validate(
    X,
    y,
    kernel: str = "linear",
    c_grid=(0.1, 1.0, 10.0, 100.0),
    gamma_grid=None,
    folds: int = 5,
    epochs: int = 20,
    seed: int = 0,
):
    """Stratified k-fold grid search.

    Returns ((best_C, best_gamma), table) where the table rows are
    {"C", "gamma", "mean_accuracy"} in candidate order. Ties are broken
    toward the smallest C, then the smallest gamma. For the linear kernel
    gamma is None throughout.
    """
    X = np.asarray(X, dtype=np.float64)
    y = list(y)
    if kernel == "linear":
        candidates = [(float(C), None) for C in sorted(c_grid)]
    else:
        if gamma_grid is None:
            gamma_grid = (1.0 / X.shape[1], 10.0 / X.shape[1])
        candidates = [
            (float(C), float(g)) for C in sorted(c_grid) for g in sorted(gamma_grid)
        ]
    assignment = stratified_folds(y, folds, seed)
    y_arr = np.asarray(y, dtype=object)

    table = []
    best = None
    best_acc = -1.0
    for C, gamma in candidates:
        accs = []
        for f in range(folds):
            tr = assignment != f
            te = ~tr
            svm = _make_svm(kernel, C, gamma, epochs, seed)
            svm.fit(X[tr], list(y_arr[tr]))
            accs.append(float(np.mean(svm.predict(X[te]) == y_arr[te])))
        mean_acc = float(np.mean(accs))
        table.append({"C": C, "gamma": gamma, "mean_accuracy": mean_acc})
        if mean_acc > best_acc:
            best_acc = mean_acc
            best = (C, gamma)
    return best, table


# --- evaluation ---------------------------------------------------------------


@dataclass
class EvalReport:
    accuracy: float
    categories: tuple[str, ...]
    confusion: np.ndarray  # rows = true category, cols = predicted
    per_category_counts: np.ndarray

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "categories": list(self.categories),
            "confusion": self.confusion.tolist(),
            "per_category_counts": self.per_category_counts.tolist(),
        }


def evaluate(model, X, y) -> EvalReport:
    """Accuracy and confusion matrix of ``model.predict`` on a test set."""
    if len(y) == 0:
        raise DataError("empty test set")
    predicted = model.predict(X)
    categories = tuple(model.classes_)
    index = {c: i for i, c in enumerate(categories)}
    k = len(categories)
    confusion = np.zeros((k, k), dtype=np.int64)
    for true, pred in zip(y, predicted):
        if true not in index:
            raise DataError(f"test label {true!r} unknown to the model")
        confusion[index[true], index[pred]] += 1
    accuracy = float(np.trace(confusion) / confusion.sum())
    return EvalReport(
        accuracy=accuracy,
        categories=categories,
        confusion=confusion,
        per_category_counts=confusion.sum(axis=1),
    )


# --- the full canvas -> label pipeline ----------------------------------------


class SketchClassifier(BaseEstimator, ClassifierMixin):
    """End-to-end classifier over binary canvases.

    ``fit`` expects already-dilated canvases shaped (n, side, side) and
    category labels; it optionally expands the training set with the
    transform battery, extracts descriptors, fits the PCA and the GMM on a
    capped descriptor sample, Fisher-encodes every canvas, grid-searches
    (C, gamma) by stratified cross-validation, and trains the final
    one-vs-rest SVM. Everything is deterministic under ``seed``.
    """

    def __init__(
        self,
        side: int = 256,
        grid: int = 28,
        patch: int = 32,
        bins: int = 8,
        pca_dim: int = 64,
        gmm_components: int = 32,
        variance_floor: float = 1e-4,
        pca_sample: int = 200_000,
        gmm_sample: int = 25_000,
        kernel: str = "linear",
        c_grid: tuple = (0.1, 1.0, 10.0, 100.0),
        gamma_grid: tuple | None = None,
        folds: int = 5,
        epochs: int = 20,
        augment: bool = False,
        battery: str = "std30",
        seed: int = 7,
    ):
        self.side = side
        self.grid = grid
        self.patch = patch
        self.bins = bins
        self.pca_dim = pca_dim
        self.gmm_components = gmm_components
        self.variance_floor = variance_floor
        self.pca_sample = pca_sample
        self.gmm_sample = gmm_sample
        self.kernel = kernel
        self.c_grid = c_grid
        self.gamma_grid = gamma_grid
        self.folds = folds
        self.epochs = epochs
        self.augment = augment
        self.battery = battery
        self.seed = seed

    @classmethod
    def from_config(cls, config: PipelineConfig) -> "SketchClassifier":
        return cls(
            side=config.side,
            grid=config.grid,
            patch=config.patch,
            bins=config.bins,
            pca_dim=config.pca_dim,
            gmm_components=config.gmm_components,
            variance_floor=config.variance_floor,
            pca_sample=config.pca_sample,
            gmm_sample=config.gmm_sample,
            kernel=config.kernel,
            c_grid=config.c_grid,
            gamma_grid=config.gamma_grid,
            folds=config.folds,
            epochs=config.epochs,
            augment=config.augment_train,
            battery=config.battery,
            seed=config.seed,
        )

    # -- training -------------------------------------------------------------

    def _iter_training_canvases(self, X, y):
        """Deterministic (canvas, label) stream, battery-expanded if augmenting."""
        battery = BATTERIES[self.battery] if self.augment else None
        for canvas, label in zip(X, y):
            if battery is None:
                yield canvas, label
            else:
                for variant in augment(canvas, battery):
                    yield variant, label

    def fit(self, X, y):
        X = np.asarray(X)
        if X.ndim != 3 or X.shape[1:] != (self.side, self.side):
            raise DataError(
                f"training canvases must be shaped (n, {self.side}, {self.side}), "
                f"got {X.shape}"
            )
        if len(X) != len(y):
            raise DataError(f"{len(X)} canvases but {len(y)} labels")
        for canvas in X:
            check_canvas(canvas)
        y = list(y)

        extractor = DescriptorExtractor(grid=self.grid, patch=self.patch, bins=self.bins)
        n_stream = len(X) * (len(BATTERIES[self.battery]) if self.augment else 1)
        quota = max(1, math.ceil(self.pca_sample / n_stream))

        pool = []
        pooled = 0
        for i, (canvas, _) in enumerate(self._iter_training_canvases(X, y)):
            desc = extractor.extract(canvas).descriptors
            desc = desc[np.linalg.norm(desc, axis=1) > 0]
            if len(desc) == 0:
                continue
            take = min(quota, len(desc), self.pca_sample - pooled)
            if take <= 0:
                break
            pick = stable_rng(self.seed, f"pool|{i}").choice(len(desc), size=take, replace=False)
            pool.append(desc[np.sort(pick)])
            pooled += take
        if not pool:
            raise DataError("no nonzero descriptors in the training set (all canvases blank?)")
        sample = np.concatenate(pool)

        pca = PcaReducer(self.pca_dim).fit(sample)
        projected = pca.transform(sample)
        if len(projected) > self.gmm_sample:
            pick = stable_rng(self.seed, "gmm-sample").choice(
                len(projected), size=self.gmm_sample, replace=False
            )
            projected = projected[np.sort(pick)]
        gmm = DiagonalGmm(
            self.gmm_components,
            seed=self.seed,
            variance_floor=self.variance_floor,
        ).fit(projected)
        encoder = FisherEncoder(pca, gmm)

        feats = []
        labels = []
        for canvas, label in self._iter_training_canvases(X, y):
            feats.append(encoder.encode(extractor.extract(canvas).descriptors))
            labels.append(label)
        F = np.stack(feats)

        best, table = cross_validate(
            F,
            labels,
            kernel=self.kernel,
            c_grid=self.c_grid,
            gamma_grid=self.gamma_grid,
            folds=self.folds,
            epochs=self.epochs,
            seed=self.seed,
        )
        svm = _make_svm(self.kernel, best[0], best[1], self.epochs, self.seed)
        svm.fit(F, labels)

        self.extractor_ = extractor
        self.pca_ = pca
        self.gmm_ = gmm
        self.encoder_ = encoder
        self.svm_ = svm
        self.classes_ = svm.classes_
        self.best_params_ = best
        self.cv_table_ = table
        return self

    def _check_fitted(self):
        if not hasattr(self, "svm_"):
            raise NotFittedError("SketchClassifier is not fitted")

    # -- inference --------------------------------------------------------------

    def encode_canvas(self, canvas: np.ndarray) -> np.ndarray:
        self._check_fitted()
        return self.encoder_.encode(self.extractor_.extract(canvas).descriptors)

    def classify(self, feature: np.ndarray) -> tuple[str, np.ndarray]:
        """Predict from an already-encoded feature vector.

        Returns (category, per-category scores); the category is the argmax
        of the scores with ties broken by category order.
        """
        self._check_fitted()
        scores = self.svm_.decision_function(np.atleast_2d(feature))[0]
        return str(self.classes_[int(np.argmax(scores))]), scores

    def predict_canvas(self, canvas: np.ndarray) -> tuple[str, np.ndarray]:
        return self.classify(self.encode_canvas(canvas))

    def decision_function(self, X) -> np.ndarray:
        self._check_fitted()
        X = np.asarray(X)
        if X.ndim == 2:
            X = X[None]
        return np.stack([self.svm_.decision_function(self.encode_canvas(c)[None])[0] for c in X])

    def predict(self, X) -> np.ndarray:
        scores = self.decision_function(X)
        return self.classes_[np.argmax(scores, axis=1)]


# --- persistence ---------------------------------------------------------------


def _svm_payload(svm) -> dict:
    if isinstance(svm, LinearSvmOvr):
        return {
            "weights": svm.weights_.tolist(),
            "biases": svm.biases_.tolist(),
        }
    return {
        "gamma": svm.gamma,
        "per_category": [
            {
                "support_vectors": sv.tolist(),
                "dual_coefs": coef.tolist(),
                "bias": float(b),
            }
            for sv, coef, b in zip(svm.support_vectors_, svm.dual_coefs_, svm.biases_)
        ],
    }


def save_model(clf: SketchClassifier, path) -> None:
    """Write the fitted pipeline as a versioned container file."""
    clf._check_fitted()
    payload = {
        "categories": [str(c) for c in clf.classes_],
        "kernel": clf.kernel,
        "best_params": {"C": clf.best_params_[0], "gamma": clf.best_params_[1]},
        "decision": _svm_payload(clf.svm_),
        "pca": {
            "mean": clf.pca_.mean_.tolist(),
            "basis": clf.pca_.components_.tolist(),
            "d": clf.pca_.n_components,
        },
        "gmm": {
            "weights": clf.gmm_.weights_.tolist(),
            "means": clf.gmm_.means_.tolist(),
            "variances": clf.gmm_.variances_.tolist(),
        },
        "config": clf.get_params(),
    }
    payload["config"]["c_grid"] = list(payload["config"]["c_grid"])
    if payload["config"]["gamma_grid"] is not None:
        payload["config"]["gamma_grid"] = list(payload["config"]["gamma_grid"])
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MODEL_MAGIC)
        fh.write(struct.pack("<I", MODEL_VERSION))
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)


def load_model(path) -> SketchClassifier:
    """Load a container written by :func:`save_model`."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 16 or raw[:4] != MODEL_MAGIC:
        raise DataError(f"{path}: not a model container (bad magic)")
    (version,) = struct.unpack("<I", raw[4:8])
    if version != MODEL_VERSION:
        raise DataError(f"{path}: unsupported model version {version}")
    (length,) = struct.unpack("<Q", raw[8:16])
    if len(raw) - 16 != length:
        raise DataError(f"{path}: truncated or oversized payload")
    payload = json.loads(raw[16:].decode("utf-8"))

    cfg = dict(payload["config"])
    cfg["c_grid"] = tuple(cfg["c_grid"])
    if cfg["gamma_grid"] is not None:
        cfg["gamma_grid"] = tuple(cfg["gamma_grid"])
    clf = SketchClassifier(**cfg)

    pca = PcaReducer(payload["pca"]["d"])
    pca.mean_ = np.asarray(payload["pca"]["mean"], dtype=np.float64)
    pca.components_ = np.asarray(payload["pca"]["basis"], dtype=np.float64)
    pca.eigenvalues_ = None

    gmm = DiagonalGmm(
        len(payload["gmm"]["weights"]),
        seed=clf.seed,
        variance_floor=clf.variance_floor,
    )
    gmm.weights_ = np.asarray(payload["gmm"]["weights"], dtype=np.float64)
    gmm.means_ = np.asarray(payload["gmm"]["means"], dtype=np.float64)
    gmm.variances_ = np.asarray(payload["gmm"]["variances"], dtype=np.float64)
    gmm.log_likelihood_trace_ = None

    categories = payload["categories"]
    best = payload["best_params"]
    if payload["kernel"] == "linear":
        svm = LinearSvmOvr(C=best["C"], epochs=clf.epochs, seed=clf.seed)
        svm.classes_ = np.asarray(categories, dtype=object)
        svm.weights_ = np.asarray(payload["decision"]["weights"], dtype=np.float64)
        svm.biases_ = np.asarray(payload["decision"]["biases"], dtype=np.float64)
        svm.objective_trace_ = None
    else:
        svm = RbfSvmOvr(C=best["C"], gamma=payload["decision"]["gamma"])
        svm.classes_ = np.asarray(categories, dtype=object)
        svm.support_vectors_ = []
        for e in payload["decision"]["per_category"]:
            sv = np.asarray(e["support_vectors"], dtype=np.float64)
            if sv.size == 0:
                sv = sv.reshape(0, 0)
            svm.support_vectors_.append(sv)
        svm.dual_coefs_ = [
            np.asarray(e["dual_coefs"], dtype=np.float64)
            for e in payload["decision"]["per_category"]
        ]
        svm.biases_ = np.asarray(
            [e["bias"] for e in payload["decision"]["per_category"]], dtype=np.float64
        )

    clf.extractor_ = DescriptorExtractor(grid=clf.grid, patch=clf.patch, bins=clf.bins)
    clf.pca_ = pca
    clf.gmm_ = gmm
    clf.encoder_ = FisherEncoder(pca, gmm)
    clf.svm_ = svm
    clf.classes_ = svm.classes_
    clf.best_params_ = (best["C"], best["gamma"])
    clf.cv_table_ = None
    return clf


# --- dataset-level helpers -------------------------------------------------------


def dilated_canvas(sketch: Sketch, side: int) -> np.ndarray:
    """Render the full sketch and dilate it (the test-time representation)."""
    return dilate(rasterize(sketch, sketch.n_strokes, side))


@dataclass
class TrainResult:
    classifier: SketchClassifier
    n_train: int
    n_test: int
    cv_table: list
    best_params: tuple
    report: EvalReport


def train_pipeline(dataset: Dataset, config: PipelineConfig) -> TrainResult:
    """Split, fit the full pipeline on the train side, evaluate on the test
    side (dilated originals only, never battery-transformed variants)."""
    train_ds, test_ds = split_dataset(dataset, config.train_fraction, config.seed)
    if len(test_ds) == 0:
        raise DataError("test split is empty; lower train_fraction")
    X_train = np.stack([dilated_canvas(s, config.side) for s in train_ds.sketches])
    y_train = [s.category for s in train_ds.sketches]
    clf = SketchClassifier.from_config(config).fit(X_train, y_train)
    X_test = np.stack([dilated_canvas(s, config.side) for s in test_ds.sketches])
    y_test = [s.category for s in test_ds.sketches]
    report = evaluate(clf, X_test, y_test)
    return TrainResult(
        classifier=clf,
        n_train=len(train_ds),
        n_test=len(test_ds),
        cv_table=clf.cv_table_,
        best_params=clf.best_params_,
        report=report,
    )
