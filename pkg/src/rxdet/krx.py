"""Kernel RX detector with Gaussian kernel and background subsampling.

Scores are the uncentered feature-space quadratic form expressed through
kernel matrices.  The default regularization rides on the squared Gram
system actually inverted:

    score(x) = k.T @ inv(K @ K + ridge*I) @ k,
    k = [K(x, s_1), ..., K(x, s_N)],  K[i, j] = K(s_i, s_j)

over an N-pixel support subsampled uniformly without replacement from the
background.  An alternative placement, ``reg="feature"``, rides the ridge on
the feature-space second moment instead and kernelizes to

    score(x) = (K(x, x) - k.T @ inv(K + ridge*I) @ k) / ridge,

which is the exact sample-side form of ``phi(x).T (Phi.T Phi + ridge I)^-1
phi(x)`` and therefore the exact infinite-feature-count limit of the
randomized detector; it serves as the reference when measuring that
detector's fidelity.  The two placements agree as ridge -> 0 but differ
measurably at practical ridges.

The shipped kernel is the Gaussian RBF ``K(x, y) = exp(-||x - y||^2 /
(2 sigma^2))``; any callable mapping two sample matrices to a kernel matrix
can be plugged in instead.

Note a consequence of the uncentered formulas: a pixel far outside the
kernel reach of every support point has k ~ 0 and scores near zero, i.e.
this detector targets off-manifold pixels *within* reach, not arbitrarily
distant ones.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np

from .errors import DataError
from .numerics import (
    RngSpec,
    SpdFactor,
    median_lengthscale,
    pairwise_sq_dists,
    spd_factorize,
    whiten_solve,
)

DEFAULT_RIDGE = 1e-2
MEDIAN = "median"

SQUARED_GRAM = "squared-gram"
FEATURE = "feature"
_REGS = (SQUARED_GRAM, FEATURE)

_CHILD_SUBSAMPLE = 0
_CHILD_MEDIAN = 1

_SCORE_BLOCK = 2048


def gauss_kernel(X, Y, sigma: float) -> np.ndarray:
    """Gaussian RBF kernel matrix between rows of X and rows of Y."""
    if sigma <= 0:
        raise DataError(f"sigma must be positive, got {sigma}")
    D2 = pairwise_sq_dists(X, Y)
    return np.exp(D2 / (-2.0 * sigma * sigma))


@dataclass(frozen=True)
class GaussianKernel:
    """Pluggable kernel interface; the only implementation shipped."""

    sigma: float

    def __call__(self, X, Y) -> np.ndarray:
        return gauss_kernel(X, Y, self.sigma)


@dataclass(frozen=True)
class KrxModel:
    support: np.ndarray
    sigma: float
    gram_factor: SpdFactor
    ridge: float
    rng_used: RngSpec
    kernel: Callable = None
    reg: str = SQUARED_GRAM

    def __post_init__(self):
        if self.kernel is None:
            object.__setattr__(self, "kernel", GaussianKernel(self.sigma))
        if self.reg not in _REGS:
            raise DataError(f"unknown reg {self.reg!r}; expected one of {_REGS}")


def krx_fit(
    X,
    N: int,
    sigma: Union[float, str] = MEDIAN,
    ridge: float = DEFAULT_RIDGE,
    rng: RngSpec = RngSpec(),
    kernel: Optional[Callable] = None,
    reg: str = SQUARED_GRAM,
) -> KrxModel:
    """Subsample a support set and factorize its regularized Gram system.

    Parameters
    ----------
    X : (n, d) array_like
        Background pixels.
    N : int
        Support size, 2 <= N <= n, drawn uniformly without replacement.
    sigma : float or "median"
        Gaussian lengthscale; "median" resolves it as the median pairwise
        distance over the support actually fitted.  Ignored when an explicit
        ``kernel`` callable is supplied.
    ridge : float
        Regularizer; added to K @ K ("squared-gram", default) or to K
        ("feature", which needs ridge > 0).
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise DataError(f"X must be 2-D, got shape {X.shape}")
    n = X.shape[0]
    if not 2 <= N <= n:
        raise DataError(f"subsample size N={N} must satisfy 2 <= N <= n={n}")
    if reg not in _REGS:
        raise DataError(f"unknown reg {reg!r}; expected one of {_REGS}")
    if reg == FEATURE and ridge <= 0:
        raise DataError("feature regularization needs a positive ridge")
    idx = rng.child(_CHILD_SUBSAMPLE).generator().permutation(n)[:N]
    support = np.ascontiguousarray(X[idx])

    if kernel is None:
        if sigma == MEDIAN:
            sigma = median_lengthscale(support, rng=rng.child(_CHILD_MEDIAN))
        else:
            sigma = float(sigma)
            if sigma <= 0:
                raise DataError(f"sigma must be positive, got {sigma}")
        kernel = GaussianKernel(sigma)
    else:
        sigma = float(sigma) if sigma != MEDIAN else float("nan")

    K = kernel(support, support)
    factor = spd_factorize(K @ K if reg == SQUARED_GRAM else K, ridge)
    return KrxModel(
        support=support,
        sigma=sigma,
        gram_factor=factor,
        ridge=factor.ridge,
        rng_used=rng,
        kernel=kernel,
        reg=reg,
    )


def _kernel_diag(kernel: Callable, X: np.ndarray) -> np.ndarray:
    if isinstance(kernel, GaussianKernel):
        return np.ones(X.shape[0], dtype=np.float64)
    return np.ascontiguousarray(np.diagonal(kernel(X, X)), dtype=np.float64)


def krx_score(model: KrxModel, X) -> np.ndarray:
    """Score test pixels against the fitted support, blockwise over pixels."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    d = model.support.shape[1]
    if X.ndim != 2 or X.shape[1] != d:
        raise DataError(f"test pixels have shape {X.shape}, model expects (k, {d})")
    scores = np.empty(X.shape[0], dtype=np.float64)
    for i0 in range(0, X.shape[0], _SCORE_BLOCK):
        i1 = min(X.shape[0], i0 + _SCORE_BLOCK)
        Kb = model.kernel(model.support, X[i0:i1])
        W = whiten_solve(model.gram_factor, Kb)
        q = np.einsum("ij,ij->j", W, W)
        if model.reg == SQUARED_GRAM:
            scores[i0:i1] = q
        else:
            diag = _kernel_diag(model.kernel, X[i0:i1])
            scores[i0:i1] = np.maximum(diag - q, 0.0) / model.ridge
    return scores
