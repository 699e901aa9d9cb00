"""Random Fourier feature basis and explicit feature maps.

A basis is D frequency rows ``w_j ~ N(0, sigma^-2 I)``; the feature map

    z(x) = (1/sqrt(D)) * [exp(i w_1.x), ..., exp(i w_D.x)]

makes ``Re <z(x), z(y)>`` an unbiased estimate of the Gaussian kernel
``exp(-||x-y||^2 / (2 sigma^2))``.  The default execution path is the exact
real isomorphism ``(1/sqrt(D)) * [cos(w_j.x) | sin(w_j.x)]`` of width 2D,
which produces the identical Gram matrix with all-real linear algebra; the
complex representation is kept for fidelity checks.  The 1/sqrt(D) scaling is
folded into the map so the approximate Gram is plainly ``Z @ Z^H``.

Note the phase-shifted single-cosine variant ``cos(w.x + b)`` is deliberately
not offered: it only approximates the expectation the complex map achieves
exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg.blas import dsyrk

from .errors import DataError
from .numerics import RngSpec, gaussian_sample

REAL = "real-cos-sin"
COMPLEX = "complex"
_REPRESENTATIONS = (REAL, COMPLEX)


@dataclass(frozen=True)
class RffBasis:
    """Frequency matrix W (D x d) plus the lengthscale and seed behind it."""

    W: np.ndarray
    sigma: float
    rng_used: RngSpec
    representation: str = REAL

    def __post_init__(self) -> None:
        W = np.ascontiguousarray(self.W, dtype=np.float64)
        if W.ndim != 2 or W.shape[0] < 1 or W.shape[1] < 1:
            raise DataError(f"W must be a (D, d) matrix with D, d >= 1, got {W.shape}")
        if not np.isfinite(W).all():
            raise DataError("W contains non-finite values")
        if self.representation not in _REPRESENTATIONS:
            raise DataError(
                f"unknown representation {self.representation!r}; "
                f"expected one of {_REPRESENTATIONS}"
            )
        W.setflags(write=False)
        object.__setattr__(self, "W", W)

    @property
    def D(self) -> int:
        return self.W.shape[0]

    @property
    def d(self) -> int:
        return self.W.shape[1]

    @property
    def feature_width(self) -> int:
        """Width of the mapped rows: D complex entries or 2D real ones."""
        return self.D if self.representation == COMPLEX else 2 * self.D


@dataclass(frozen=True)
class FeatureMatrix:
    """Mapped samples plus a link to the basis that produced them."""

    Z: np.ndarray
    basis: RffBasis


def rff_sample(
    d: int,
    D: int,
    sigma: float,
    rng: RngSpec = RngSpec(),
    representation: str = REAL,
) -> RffBasis:
    """Draw a D x d frequency matrix for the Gaussian kernel at ``sigma``."""
    if D < 1:
        raise DataError(f"feature count D must be >= 1, got {D}")
    if d < 1:
        raise DataError(f"band count d must be >= 1, got {d}")
    W = gaussian_sample(rng, D, d, scale=sigma)
    return RffBasis(W=W, sigma=float(sigma), rng_used=rng, representation=representation)


def _phases(basis: RffBasis, X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != basis.d:
        raise DataError(f"samples have shape {X.shape}, basis expects (n, {basis.d})")
    return X @ basis.W.T


def rff_map(basis: RffBasis, X) -> FeatureMatrix:
    """Map samples through the basis; rows scaled by 1/sqrt(D)."""
    T = _phases(basis, X)
    inv = 1.0 / np.sqrt(basis.D)
    if basis.representation == COMPLEX:
        Z = np.exp(1j * T)
        Z *= inv
    else:
        n, D = T.shape
        Z = np.empty((n, 2 * D), dtype=np.float64)
        np.cos(T, out=Z[:, :D])
        np.sin(T, out=Z[:, D:])
        Z *= inv
    return FeatureMatrix(Z=Z, basis=basis)


def approx_gram(basis: RffBasis, X) -> np.ndarray:
    """Randomized estimate of the Gaussian Gram matrix over rows of X.

    Real representation: computed as one symmetric rank-k update, so the
    result is exactly symmetric.
    """
    fm = rff_map(basis, X)
    if basis.representation == COMPLEX:
        return (fm.Z @ fm.Z.conj().T).real
    G = dsyrk(1.0, fm.Z)  # upper triangle of Z @ Z.T
    return np.triu(G) + np.triu(G, 1).T


def write_basis_stream(fh, basis: RffBasis) -> None:
    """ASCII header 'D d sigma seed stream representation' + W as <f8."""
    fh.write(
        f"{basis.D} {basis.d} {basis.sigma!r} "
        f"{basis.rng_used.seed} {basis.rng_used.stream} "
        f"{basis.representation}\n".encode("ascii")
    )
    fh.write(basis.W.astype("<f8").tobytes())


def read_basis_stream(fh, origin="<stream>") -> RffBasis:
    header = fh.readline()
    if not header.endswith(b"\n"):
        raise DataError(f"{origin}: missing basis header line")
    tokens = header.decode("ascii", "replace").split()
    if len(tokens) != 6:
        raise DataError(
            f"{origin}: malformed basis header {tokens!r}; expected "
            "'D d sigma seed stream representation'"
        )
    try:
        D, d = int(tokens[0]), int(tokens[1])
        sigma = float(tokens[2])
        seed, stream = int(tokens[3]), int(tokens[4])
    except ValueError as exc:
        raise DataError(f"{origin}: malformed basis header: {exc}") from exc
    representation = tokens[5]
    raw = fh.read(D * d * 8)
    if len(raw) != D * d * 8:
        raise DataError(
            f"{origin}: basis payload has {len(raw)} bytes, header promises {D * d * 8}"
        )
    W = np.frombuffer(raw, dtype="<f8").reshape(D, d).copy()
    return RffBasis(
        W=W,
        sigma=sigma,
        rng_used=RngSpec(seed=seed, stream=stream),
        representation=representation,
    )


def save_basis(basis: RffBasis, path) -> None:
    """Serialize a basis so a scoring run is reproducible from the file."""
    with open(path, "wb") as fh:
        write_basis_stream(fh, basis)


def load_basis(path) -> RffBasis:
    with open(path, "rb") as fh:
        return read_basis_stream(fh, origin=str(path))
