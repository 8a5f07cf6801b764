"""Canvas features: local orientation-histogram descriptors, PCA, a
diagonal-covariance Gaussian mixture fitted by EM, and Fisher-vector
encoding. The fit/transform classes follow the scikit-learn estimator
conventions so they compose with the wider ecosystem.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.exceptions import NotFittedError

from .errors import DataError
from .raster import check_canvas

CELLS_PER_SIDE = 4  # descriptors always use a 4x4 spatial cell layout


@dataclass(frozen=True)
class DescriptorSet:
    """Descriptors for one canvas plus their keypoint grid positions."""

    descriptors: np.ndarray  # (n, dim) float64
    positions: np.ndarray  # (n, 2) int64, (grid row, grid col)


def box_smooth(img: np.ndarray) -> np.ndarray:
    """One 3x3 box-filter pass (zero padding, divisor 9)."""
    h, w = img.shape
    padded = np.zeros((h + 2, w + 2), dtype=np.float64)
    padded[1:-1, 1:-1] = img
    out = np.zeros((h, w), dtype=np.float64)
    for dr in range(3):
        for dc in range(3):
            out += padded[dr:dr + h, dc:dc + w]
    return out / 9.0


def keypoint_centers(side: int, grid: int) -> np.ndarray:
    """Pixel centers of the regular grid x grid keypoint lattice.

    The stride is integer (side // grid) and the lattice is centered, so
    shifting ink by exactly one stride moves content from one keypoint to
    the next. Returns shape (grid,) of center coordinates, valid for both
    axes of a square canvas.
    """
    stride = side // grid
    if stride < 1:
        raise ValueError(f"grid {grid} too fine for canvas side {side}")
    start = (side - (grid - 1) * stride) // 2
    return np.arange(grid, dtype=np.int64) * stride + start


class DescriptorExtractor(BaseEstimator, TransformerMixin):
    """Orientation-histogram descriptors on a regular keypoint grid.

    Each keypoint yields one descriptor from the patch x patch window around
    it: 4x4 spatial cells, ``bins`` orientation bins per cell, gradient
    orientations taken modulo 180 degrees and weighted by gradient magnitude.
    Descriptors are L2-normalized individually; all-zero descriptors (blank
    patches) are left zero. Stateless: ``fit`` is a no-op.
    """

    def __init__(self, grid: int = 28, patch: int = 32, bins: int = 8):
        self.grid = grid
        self.patch = patch
        self.bins = bins

    @property
    def dim(self) -> int:
        return CELLS_PER_SIDE * CELLS_PER_SIDE * self.bins

    def fit(self, X=None, y=None):
        return self

    def extract(self, canvas: np.ndarray) -> DescriptorSet:
        check_canvas(canvas)
        if self.patch % CELLS_PER_SIDE != 0:
            raise ValueError(f"patch {self.patch} must be a multiple of {CELLS_PER_SIDE}")
        side = canvas.shape[0]
        if canvas.shape[0] != canvas.shape[1]:
            raise ValueError("descriptor extraction expects a square canvas")

        img = box_smooth(canvas.astype(np.float64))
        gy, gx = np.gradient(img)
        mag = np.hypot(gx, gy)
        theta = np.arctan2(gy, gx)
        theta = np.where(theta < 0, theta + np.pi, theta)  # fold to [0, pi]
        bin_idx = np.floor(theta / (np.pi / self.bins)).astype(np.int64) % self.bins

        # One integral image per orientation bin; cell sums become four
        # corner lookups regardless of patch overlap.
        integrals = np.zeros((self.bins, side + 1, side + 1), dtype=np.float64)
        for b in range(self.bins):
            w = np.where(bin_idx == b, mag, 0.0)
            integrals[b, 1:, 1:] = w.cumsum(axis=0).cumsum(axis=1)

        centers = keypoint_centers(side, self.grid)
        cs = self.patch // CELLS_PER_SIDE
        origins = centers - self.patch // 2
        # cell boundary coordinates per axis: (grid, CELLS_PER_SIDE + 1)
        edges = origins[:, None] + np.arange(CELLS_PER_SIDE + 1)[None, :] * cs
        edges = np.clip(edges, 0, side)

        g = self.grid
        n = g * g
        # Build (n, 4, 4) corner index arrays: rows vary with keypoint row,
        # cols with keypoint col.
        row_lo = edges[:, :-1]  # (g, 4)
        row_hi = edges[:, 1:]
        col_lo = row_lo
        col_hi = row_hi
        kr, kc = np.divmod(np.arange(n), g)
        R0 = row_lo[kr][:, :, None]  # (n, 4, 1)
        R1 = row_hi[kr][:, :, None]
        C0 = col_lo[kc][:, None, :]  # (n, 1, 4)
        C1 = col_hi[kc][:, None, :]

        desc = np.empty((n, CELLS_PER_SIDE, CELLS_PER_SIDE, self.bins), dtype=np.float64)
        for b in range(self.bins):
            ii = integrals[b]
            desc[:, :, :, b] = ii[R1, C1] - ii[R0, C1] - ii[R1, C0] + ii[R0, C0]
        # integral-image differencing can leave ~1e-14 negative residue
        desc = np.maximum(desc.reshape(n, self.dim), 0.0)

        norms = np.linalg.norm(desc, axis=1)
        nonzero = norms > 0
        desc[nonzero] /= norms[nonzero, None]

        positions = np.stack([kr, kc], axis=1)
        return DescriptorSet(descriptors=desc, positions=positions)

    def transform(self, X: np.ndarray) -> np.ndarray:
        """Batch form: (n, side, side) canvases -> (n, grid^2, dim)."""
        X = np.asarray(X)
        if X.ndim == 2:
            X = X[None]
        return np.stack([self.extract(c).descriptors for c in X])


class PcaReducer(BaseEstimator, TransformerMixin):
    """Principal-component projection with a deterministic sign convention.

    Fitted by SVD of the centered sample; each basis vector is flipped so
    its first nonzero coefficient is positive, making the projection
    independent of the SVD's sign freedom.
    """

    def __init__(self, n_components: int):
        self.n_components = n_components

    def fit(self, X: np.ndarray, y=None):
        X = np.asarray(X, dtype=np.float64)
        n, d = X.shape
        if self.n_components > d:
            raise DataError(f"n_components {self.n_components} exceeds input dim {d}")
        if n <= self.n_components:
            raise DataError(f"need more than {self.n_components} samples, got {n}")
        self.mean_ = X.mean(axis=0)
        _, s, vt = np.linalg.svd(X - self.mean_, full_matrices=False)
        basis = vt[: self.n_components].copy()
        for row in basis:
            nz = np.flatnonzero(np.abs(row) > 1e-12)
            if nz.size and row[nz[0]] < 0:
                row *= -1.0
        self.components_ = basis
        self.eigenvalues_ = (s[: self.n_components] ** 2) / (n - 1)
        return self

    def _check_fitted(self):
        if not hasattr(self, "components_"):
            raise NotFittedError("PcaReducer is not fitted")

    def transform(self, X: np.ndarray) -> np.ndarray:
        self._check_fitted()
        return (np.asarray(X, dtype=np.float64) - self.mean_) @ self.components_.T

    def inverse_transform(self, Z: np.ndarray) -> np.ndarray:
        self._check_fitted()
        return np.asarray(Z, dtype=np.float64) @ self.components_ + self.mean_


def _logsumexp(a: np.ndarray, axis: int) -> np.ndarray:
    m = np.max(a, axis=axis, keepdims=True)
    out = m + np.log(np.sum(np.exp(a - m), axis=axis, keepdims=True))
    return np.squeeze(out, axis=axis)


class DiagonalGmm(BaseEstimator):
    """Diagonal-covariance Gaussian mixture fitted by EM.

    Initialization is k-means++ seeding (deterministic under ``seed``)
    followed by a hard assignment; EM stops when the relative log-likelihood
    improvement drops below ``rel_tol`` or after ``max_iter`` iterations.
    ``log_likelihood_trace_`` records the total log-likelihood at the start
    of every iteration, which EM guarantees to be non-decreasing.
    """

    def __init__(
        self,
        n_components: int,
        seed: int = 0,
        max_iter: int = 100,
        rel_tol: float = 1e-6,
        variance_floor: float = 1e-4,
    ):
        self.n_components = n_components
        self.seed = seed
        self.max_iter = max_iter
        self.rel_tol = rel_tol
        self.variance_floor = variance_floor

    # -- fitting ------------------------------------------------------------

    def _kmeanspp_centers(self, X: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        n = X.shape[0]
        k = self.n_components
        centers = np.empty((k, X.shape[1]), dtype=np.float64)
        centers[0] = X[rng.integers(n)]
        d2 = np.sum((X - centers[0]) ** 2, axis=1)
        for j in range(1, k):
            total = d2.sum()
            if total <= 0:
                centers[j:] = X[rng.integers(n, size=k - j)]
                break
            probs = d2 / total
            centers[j] = X[rng.choice(n, p=probs)]
            d2 = np.minimum(d2, np.sum((X - centers[j]) ** 2, axis=1))
        return centers

    def fit(self, X: np.ndarray, y=None):
        X = np.asarray(X, dtype=np.float64)
        n, d = X.shape
        k = self.n_components
        if n < 10 * k:
            raise DataError(f"need at least {10 * k} samples to fit {k} components, got {n}")
        global_var = X.var(axis=0)
        if not (global_var > 0).any():
            raise DataError("degenerate sample: all points identical")

        rng = np.random.default_rng(self.seed)
        centers = self._kmeanspp_centers(X, rng)
        dists = ((X[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        assign = dists.argmin(axis=1)

        weights = np.empty(k)
        means = np.empty((k, d))
        variances = np.empty((k, d))
        fallback_var = np.maximum(global_var, self.variance_floor)
        for j in range(k):
            members = X[assign == j]
            if len(members) == 0:
                weights[j] = 1.0 / n
                means[j] = centers[j]
                variances[j] = fallback_var
            else:
                weights[j] = len(members) / n
                means[j] = members.mean(axis=0)
                variances[j] = np.maximum(members.var(axis=0), self.variance_floor)
        weights /= weights.sum()

        trace: list[float] = []
        prev = None
        for _ in range(self.max_iter):
            log_resp, total_ll = self._e_step(X, weights, means, variances)
            trace.append(total_ll)
            if prev is not None and abs(total_ll - prev) <= self.rel_tol * abs(prev):
                break
            prev = total_ll
            resp = np.exp(log_resp)
            nk = resp.sum(axis=0)
            nk = np.maximum(nk, 1e-12)
            weights = nk / n
            means = (resp.T @ X) / nk[:, None]
            sq = (resp.T @ (X**2)) / nk[:, None]
            variances = np.maximum(sq - means**2, self.variance_floor)

        self.weights_ = weights
        self.means_ = means
        self.variances_ = variances
        self.log_likelihood_trace_ = np.asarray(trace)
        return self

    def _check_fitted(self):
        if not hasattr(self, "weights_"):
            raise NotFittedError("DiagonalGmm is not fitted")

    # -- inference ------------------------------------------------------------

    def _component_log_prob(self, X, means, variances) -> np.ndarray:
        d = X.shape[1]
        # log N(x | mu_k, diag v_k) for all k at once
        a = (X**2) @ (0.5 / variances).T
        b = X @ (means / variances).T
        c = 0.5 * (means**2 / variances).sum(axis=1) + 0.5 * np.log(variances).sum(axis=1)
        return -(a - b + c[None, :]) - 0.5 * d * np.log(2 * np.pi)

    def _e_step(self, X, weights, means, variances):
        logp = self._component_log_prob(X, means, variances) + np.log(weights)[None, :]
        norm = _logsumexp(logp, axis=1)
        return logp - norm[:, None], float(norm.sum())

    def responsibilities(self, X: np.ndarray) -> np.ndarray:
        self._check_fitted()
        log_resp, _ = self._e_step(
            np.asarray(X, dtype=np.float64), self.weights_, self.means_, self.variances_
        )
        return np.exp(log_resp)

    def total_log_likelihood(self, X: np.ndarray) -> float:
        self._check_fitted()
        _, total = self._e_step(
            np.asarray(X, dtype=np.float64), self.weights_, self.means_, self.variances_
        )
        return total

    def loglik_gradients(self, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Analytic gradients of the total log-likelihood.

        Returns (d/d_means, d/d_variances), each shaped (K, d). These are the
        raw statistical gradients; the Fisher encoder applies its own
        normalization on top of the same sufficient statistics.
        """
        self._check_fitted()
        X = np.asarray(X, dtype=np.float64)
        gamma = self.responsibilities(X)
        s0 = gamma.sum(axis=0)
        s1 = gamma.T @ X
        s2 = gamma.T @ (X**2)
        mu, v = self.means_, self.variances_
        centered_sq = s2 - 2 * mu * s1 + (mu**2) * s0[:, None]
        d_mu = (s1 - mu * s0[:, None]) / v
        d_var = centered_sq / (2 * v**2) - s0[:, None] / (2 * v)
        return d_mu, d_var


class FisherEncoder(BaseEstimator, TransformerMixin):
    """Fisher-vector encoding of descriptor sets against a fitted PCA + GMM.

    Descriptors are PCA-projected; the encoding concatenates the normalized
    mean and variance gradient blocks (dimension 2 * K * d), then applies
    signed square-root and L2 normalization. All-zero descriptors carry no
    ink information and are dropped before projection; a canvas with no
    nonzero descriptors encodes to the zero vector, the only case where the
    final norm may be 0.
    """

    def __init__(self, pca: PcaReducer, gmm: DiagonalGmm):
        self.pca = pca
        self.gmm = gmm

    @property
    def dim(self) -> int:
        return 2 * self.gmm.means_.shape[0] * self.gmm.means_.shape[1]

    def raw_blocks(self, Z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Unnormalized (pre power/L2) Fisher blocks for projected descriptors.

        Returns (G_mu, G_var), each (K, d):
          G_mu_k  = 1/(T sqrt(w_k))   * sum_t gamma_tk (z_t - mu_k) / sigma_k
          G_var_k = 1/(T sqrt(2 w_k)) * sum_t gamma_tk [((z_t - mu_k)/sigma_k)^2 - 1]
        """
        gmm = self.gmm
        gmm._check_fitted()
        t = Z.shape[0]
        gamma = gmm.responsibilities(Z)
        s0 = gamma.sum(axis=0)
        s1 = gamma.T @ Z
        s2 = gamma.T @ (Z**2)
        mu, v, w = gmm.means_, gmm.variances_, gmm.weights_
        sigma = np.sqrt(v)
        g_mu = (s1 - mu * s0[:, None]) / sigma / (t * np.sqrt(w))[:, None]
        centered_sq = s2 - 2 * mu * s1 + (mu**2) * s0[:, None]
        g_var = (centered_sq / v - s0[:, None]) / (t * np.sqrt(2 * w))[:, None]
        return g_mu, g_var

    def encode(self, descriptors: np.ndarray) -> np.ndarray:
        descriptors = np.asarray(descriptors, dtype=np.float64)
        if descriptors.ndim != 2:
            raise ValueError("descriptors must be a 2-D (count, dim) array")
        k, d = self.gmm.means_.shape
        if self.pca.components_.shape[0] != d:
            raise DataError(
                f"PCA output dim {self.pca.components_.shape[0]} does not match GMM dim {d}"
            )
        if descriptors.shape[1] != self.pca.components_.shape[1]:
            raise DataError(
                f"descriptor dim {descriptors.shape[1]} does not match "
                f"PCA input dim {self.pca.components_.shape[1]}"
            )
        nonzero = np.linalg.norm(descriptors, axis=1) > 0
        if not nonzero.any():
            return np.zeros(2 * k * d)
        Z = self.pca.transform(descriptors[nonzero])
        g_mu, g_var = self.raw_blocks(Z)
        fv = np.concatenate([g_mu.ravel(), g_var.ravel()])
        fv = np.sign(fv) * np.sqrt(np.abs(fv))
        norm = np.linalg.norm(fv)
        if norm > 0:
            fv /= norm
        return fv

    def fit(self, X=None, y=None):
        return self

    def transform(self, X) -> np.ndarray:
        """Encode a batch: iterable of (count, dim) descriptor arrays."""
        return np.stack([self.encode(d) for d in X])
