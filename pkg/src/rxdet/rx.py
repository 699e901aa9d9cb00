"""Linear global RX detector.

Characterizes the background by its spectral mean ``mu`` and covariance
``Sigma = (1/n) Xc.T @ Xc`` (sample-count normalization), then scores a pixel
by its squared Mahalanobis distance

    score(x) = (x - mu).T @ inv(Sigma + ridge*I) @ (x - mu)

evaluated through the Cholesky factor, never an explicit inverse.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError
from .numerics import SpdFactor, spd_factorize, whiten_solve

DEFAULT_RIDGE = 1e-2


@dataclass(frozen=True)
class RxModel:
    """Fitted background state: mean plus factored regularized covariance."""

    mean: np.ndarray
    cov_factor: SpdFactor
    d: int
    ridge: float
    n_fit: int


def rx_fit(X, ridge: float = DEFAULT_RIDGE) -> RxModel:
    """Fit mean and covariance of the background pixels.

    Parameters
    ----------
    X : (n, d) array_like
        Background samples, n >= 2.
    ridge : float
        Diagonal regularizer added before factorization.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise DataError(f"X must be 2-D, got shape {X.shape}")
    n, d = X.shape
    if n < 2:
        raise DataError(f"need at least 2 samples to fit a covariance, got {n}")
    mean = X.mean(axis=0)
    Xc = X - mean
    cov = (Xc.T @ Xc) / n
    factor = spd_factorize(cov, ridge)
    return RxModel(mean=mean, cov_factor=factor, d=d, ridge=factor.ridge, n_fit=n)


def rx_score(model: RxModel, X) -> np.ndarray:
    """Squared Mahalanobis distance of each row of X from the background."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2 or X.shape[1] != model.d:
        raise DataError(
            f"test pixels have shape {X.shape}, model expects (k, {model.d})"
        )
    W = whiten_solve(model.cov_factor, (X - model.mean).T)
    return np.einsum("ij,ij->j", W, W)
