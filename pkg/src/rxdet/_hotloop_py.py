"""Pure-NumPy twin of the compiled per-pixel scoring core.

The batch entry point is defined as a loop over the single-pixel routine, so
batch and streaming scores are bit-identical by construction.  Slower than
the compiled core (one Python-level iteration per pixel) but always
available.
"""

import numpy as np
from scipy.linalg import solve_triangular

BACKEND = "python"


def rrx_score_one(x, W, L, mu=None):
    D = W.shape[0]
    t = W @ x
    z = np.empty(2 * D, dtype=np.float64)
    np.cos(t, out=z[:D])
    np.sin(t, out=z[D:])
    z *= 1.0 / np.sqrt(D)
    if mu is not None:
        z -= mu
    y = solve_triangular(L, z, lower=True, check_finite=False)
    return float(y @ y)


def rrx_score_block(X, W, L, mu=None):
    out = np.empty(X.shape[0], dtype=np.float64)
    for i in range(X.shape[0]):
        out[i] = rrx_score_one(X[i], W, L, mu)
    return out
