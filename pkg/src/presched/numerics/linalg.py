"""PCA with a deterministic sign convention."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class PCABasis:
    mean: np.ndarray  # (d,)
    components: np.ndarray  # (d, k), orthonormal columns
    explained_variance: np.ndarray  # (k,)

    def project(self, X: np.ndarray) -> np.ndarray:
        return (np.asarray(X, dtype=np.float64) - self.mean) @ self.components

    def reconstruct(self, Z: np.ndarray) -> np.ndarray:
        return Z @ self.components.T + self.mean


def fit_pca(X, out_dims: int) -> PCABasis:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError("PCA expects an n x d matrix")
    n, d = X.shape
    if n < 2:
        raise ValueError("PCA needs at least two rows")
    if not 1 <= out_dims <= d:
        raise ValueError(f"out_dims must lie in [1, {d}], got {out_dims}")
    mean = X.mean(axis=0)
    _, s, vt = np.linalg.svd(X - mean, full_matrices=True)
    comps = vt[:out_dims].T.copy()
    # largest-magnitude loading of every component is made positive
    pivot = np.argmax(np.abs(comps), axis=0)
    signs = np.sign(comps[pivot, np.arange(out_dims)])
    signs[signs == 0] = 1.0
    comps *= signs
    var = np.zeros(out_dims)
    m = min(out_dims, s.size)
    var[:m] = s[:m] ** 2 / (n - 1)
    return PCABasis(mean, comps, var)


def pca_reduce(X, out_dims: int) -> np.ndarray:
    """Project column-centred ``X`` onto its top ``out_dims`` principal axes."""
    return fit_pca(X, out_dims).project(X)
