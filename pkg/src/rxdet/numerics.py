"""Shared numerical kernels.

Symmetric positive-definite factorization and solves, pairwise squared
distances, the median-distance lengthscale heuristic, and deterministic
Gaussian sampling.  Every matrix "inverse" in the detectors goes through
:func:`spd_factorize` + :func:`solve`; an explicit inverse is never formed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve, solve_triangular
from scipy.linalg.lapack import dpotrf

from .errors import DataError, DegenerateDataError, NumericError

#: Cap on the number of pairwise distances inspected by the median heuristic.
#: All-pairs enumeration on full scenes (tens of thousands of pixels) is
#: infeasible, so above this cap a seeded uniform subsample of distinct pairs
#: is used instead.
DEFAULT_MAX_PAIRS = 1_000_000

_SYM_TOL = 1e-8

# Child streams are spaced so that derived ids never collide with the small
# top-level stream ids callers actually use (0, 1, 2, ...).
_CHILD_SPREAD = 1009


@dataclass(frozen=True)
class RngSpec:
    """Coordinates of a deterministic random stream.

    The pair (seed, stream) fully determines every draw, independent of
    platform and thread count; streams with different ids never overlap.
    Built on the counter-based Philox generator seeded through a
    ``SeedSequence`` spawn key.
    """

    seed: int = 0
    stream: int = 0

    def __post_init__(self) -> None:
        if not 0 <= int(self.seed) < 2**64:
            raise DataError(f"seed must be an unsigned 64-bit integer, got {self.seed}")
        if int(self.stream) < 0:
            raise DataError(f"stream id must be non-negative, got {self.stream}")

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(entropy=int(self.seed), spawn_key=(int(self.stream),))
        return np.random.Generator(np.random.Philox(ss))

    def child(self, k: int) -> "RngSpec":
        """Derive a dedicated sub-stream (k-th purpose of this stream).

        Collision-free as long as caller-chosen stream ids stay below
        ``_CHILD_SPREAD``, which they do everywhere in this package.
        """
        if k < 0:
            raise DataError(f"child index must be non-negative, got {k}")
        return RngSpec(self.seed, self.stream * _CHILD_SPREAD + k + 1)


@dataclass(frozen=True)
class SpdFactor:
    """Lower-triangular Cholesky factor of ``A + ridge*I``.

    ``factor @ factor.T`` reconstructs the regularized matrix; ``ridge`` is
    the value actually applied (it may exceed the requested one when a retry
    was needed to reach positive definiteness).
    """

    dim: int
    factor: np.ndarray
    ridge: float


def _as_matrix(A, name: str) -> np.ndarray:
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2:
        raise DataError(f"{name} must be 2-D, got shape {A.shape}")
    return A


def spd_factorize(A, ridge: float = 0.0) -> SpdFactor:
    """Cholesky-factorize a symmetric matrix after adding ``ridge * I``.

    Parameters
    ----------
    A : (m, m) array_like
        Symmetric within 1e-8; symmetrized as ``(A + A.T) / 2`` before use.
    ridge : float
        Non-negative diagonal regularizer.  If factorization fails at the
        requested ridge, one retry at ``10 * ridge`` is attempted (only
        meaningful for positive ridge); after that a NumericError is raised
        naming the failing pivot.
    """
    A = _as_matrix(A, "A")
    m = A.shape[0]
    if A.shape[1] != m:
        raise DataError(f"A must be square, got shape {A.shape}")
    if ridge < 0:
        raise DataError(f"ridge must be non-negative, got {ridge}")
    scale = max(1.0, float(np.max(np.abs(A)))) if A.size else 1.0
    if float(np.max(np.abs(A - A.T))) > _SYM_TOL * scale:
        raise DataError("A is not symmetric within tolerance 1e-8")
    sym = (A + A.T) / 2.0

    # One retry at 10x the user ridge; pointless when the ridge is zero.
    attempts = [float(ridge)] if ridge <= 0 else [float(ridge), float(ridge) * 10.0]
    first_info = None
    for applied in attempts:
        M = sym.copy()
        if applied:
            M[np.diag_indices(m)] += applied
        L, info = dpotrf(M, lower=1, clean=1, overwrite_a=1)
        if info == 0:
            return SpdFactor(dim=m, factor=np.ascontiguousarray(L), ridge=applied)
        if first_info is None:
            first_info = info
    tried = ", ".join(f"{r:g}" for r in attempts)
    raise NumericError(
        f"Cholesky factorization failed at pivot index {first_info - 1} "
        f"(matrix not positive definite; ridge tried: {tried})"
    )


def solve(f: SpdFactor, B) -> np.ndarray:
    """Solve ``(A + ridge*I) X = B`` from the stored factor.

    ``B`` may be a vector or an (m, k) matrix.
    """
    B = np.asarray(B, dtype=np.float64)
    if B.shape[0] != f.dim:
        raise DataError(f"right-hand side has {B.shape[0]} rows, factor dim is {f.dim}")
    return cho_solve((f.factor, True), B, check_finite=False)


def whiten_solve(f: SpdFactor, B) -> np.ndarray:
    """Forward-substitute the Cholesky factor: return ``L^{-1} B``.

    The quadratic form ``b.T @ solve(f, b)`` equals the squared column norms
    of this half-solve, which is how the detectors evaluate scores (it is
    non-negative by construction).
    """
    B = np.asarray(B, dtype=np.float64)
    if B.shape[0] != f.dim:
        raise DataError(f"right-hand side has {B.shape[0]} rows, factor dim is {f.dim}")
    return solve_triangular(f.factor, B, lower=True, check_finite=False)


def pairwise_sq_dists(X, Y) -> np.ndarray:
    """Matrix of squared Euclidean distances between rows of X and rows of Y.

    Tiny negatives from floating-point cancellation are clamped to zero.
    When ``Y is X`` the result is made exactly symmetric with an exactly
    zero diagonal.
    """
    same = Y is X
    X = _as_matrix(X, "X")
    Y = X if same else _as_matrix(Y, "Y")
    if X.shape[1] != Y.shape[1]:
        raise DataError(
            f"dimension mismatch: X has {X.shape[1]} columns, Y has {Y.shape[1]}"
        )
    xn = np.einsum("ij,ij->i", X, X)
    yn = xn if same else np.einsum("ij,ij->i", Y, Y)
    M = xn[:, None] + yn[None, :]
    M -= 2.0 * (X @ Y.T)
    np.maximum(M, 0.0, out=M)
    if same:
        M = (M + M.T) / 2.0
        np.fill_diagonal(M, 0.0)
    return M


def _sampled_pair_indices(n: int, max_pairs: int, rng: RngSpec):
    """Uniformly sampled distinct index pairs (i < j), in generation order."""
    gen = rng.generator()
    total = n * (n - 1) // 2
    if max_pairs * 2 >= total:
        # Requesting most of the pool: rejection sampling degenerates, so
        # permute the flat upper-triangle indices instead (memory is within
        # 2x of the caller's own cap).
        flat = gen.permutation(total)[:max_pairs]
        # invert the row-major upper-triangle enumeration
        i = (
            n - 2 - np.floor(np.sqrt(-8.0 * flat + 4.0 * n * (n - 1) - 7.0) / 2.0 - 0.5)
        ).astype(np.int64)
        j = flat + i + 1 - (i * (2 * n - i - 1)) // 2
        return i, j.astype(np.int64)
    codes = np.empty(0, dtype=np.int64)
    # Rejection sampling with order-preserving dedup; the pool is at least
    # twice the request on this branch, so few rounds are needed.
    while codes.size < max_pairs:
        m = max(1024, int(1.5 * (max_pairs - codes.size)))
        i = gen.integers(0, n, size=m, dtype=np.int64)
        j = gen.integers(0, n, size=m, dtype=np.int64)
        keep = i != j
        lo = np.minimum(i[keep], j[keep])
        hi = np.maximum(i[keep], j[keep])
        batch = np.concatenate([codes, lo * n + hi])
        _, first = np.unique(batch, return_index=True)
        codes = batch[np.sort(first)]
    codes = codes[:max_pairs]
    return codes // n, codes % n


def median_lengthscale(X, max_pairs: int = DEFAULT_MAX_PAIRS, rng: RngSpec = RngSpec()) -> float:
    """Median pairwise Euclidean distance between rows of X.

    All n*(n-1)/2 pairs are used when that count does not exceed
    ``max_pairs``; otherwise the median is taken over ``max_pairs`` uniformly
    sampled distinct pairs (seeded, reproducible).

    Raises
    ------
    DegenerateDataError
        If the median distance is zero (all sampled points identical).
    """
    X = _as_matrix(X, "X")
    n = X.shape[0]
    if n < 2:
        raise DataError(f"need at least 2 points for a pairwise median, got {n}")
    if max_pairs < 1:
        raise DataError(f"max_pairs must be >= 1, got {max_pairs}")
    total = n * (n - 1) // 2
    if total <= max_pairs:
        chunks = []
        block = max(1, min(n, 512))
        cols = np.arange(n)
        for i0 in range(0, n, block):
            i1 = min(n, i0 + block)
            D2 = pairwise_sq_dists(X[i0:i1], X)
            upper = cols[None, :] > np.arange(i0, i1)[:, None]
            chunks.append(D2[upper])
        d2 = np.concatenate(chunks)
    else:
        i, j = _sampled_pair_indices(n, max_pairs, rng)
        d2 = np.empty(max_pairs, dtype=np.float64)
        block = 100_000
        for k0 in range(0, max_pairs, block):
            k1 = min(max_pairs, k0 + block)
            diff = X[i[k0:k1]] - X[j[k0:k1]]
            d2[k0:k1] = np.einsum("ij,ij->i", diff, diff)
    sigma = float(np.sqrt(np.median(d2)))
    if sigma == 0.0:
        raise DegenerateDataError(
            "median pairwise distance is zero (points are degenerate); "
            "pass an explicit lengthscale"
        )
    return sigma


def gaussian_sample(rng: RngSpec, rows: int, cols: int, scale: float = 1.0) -> np.ndarray:
    """Deterministic i.i.d. draws from N(0, scale**-2), shaped (rows, cols).

    This is the spectral sampling distribution of the Gaussian kernel with
    lengthscale ``scale``.
    """
    if scale <= 0:
        raise DataError(f"scale must be positive, got {scale}")
    if rows < 0 or cols < 0:
        raise DataError(f"rows/cols must be non-negative, got {rows}x{cols}")
    return rng.generator().standard_normal((rows, cols)) / scale
