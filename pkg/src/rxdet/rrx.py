"""Randomized RX: linear RX machinery on explicit random Fourier features.

Fitting maps the background through a sampled basis and accumulates the
feature second-moment matrix ``Z.T @ Z`` in fixed-size row blocks, so the
resident state is O(D^2) regardless of image size.  Scoring evaluates

    score(x) = z(x).T @ inv(Z.T @ Z + ridge*I) @ z(x)

per pixel in the real cos/sin representation (width 2D), where the quadratic
form is real by construction so the final Re(.) of the complex formulation
is automatic.  No mean is removed in feature space; an optional ``center``
flag adds it for experimentation.

Batch scoring iterates the same single-pixel routine used by the streaming
scorer (a pixel is re-transformed on the fly, never stored), so the two are
bit-identical; the compiled backend makes the loop fast.
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from typing import Iterable, Iterator, Optional, Union

import numpy as np

from . import _backend
from .errors import DataError
from .numerics import RngSpec, SpdFactor, median_lengthscale, spd_factorize
from .rff import RffBasis, read_basis_stream, rff_sample, write_basis_stream

DEFAULT_D = 50
DEFAULT_RIDGE = 1e-2
MEDIAN = "median"

_CHILD_MEDIAN = 1
_CHILD_BASIS = 2

# Row-block budget for the fit-time accumulation, ~32 MiB of mapped features.
_BLOCK_BUDGET_VALUES = 1 << 22
_BLOCK_MAX_ROWS = 8192


@dataclass(frozen=True)
class RrxModel:
    """Fitted feature-space background state."""

    basis: RffBasis
    feat_factor: SpdFactor
    ridge: float
    n_fit: int
    sigma: float
    feat_mean: Optional[np.ndarray] = None
    fit_peak_bytes: int = 0

    @property
    def d(self) -> int:
        return self.basis.d

    @property
    def D(self) -> int:
        return self.basis.D


def _fit_block_rows(D: int, requested: Optional[int]) -> int:
    if requested is not None:
        if requested < 1:
            raise DataError(f"block_rows must be >= 1, got {requested}")
        return int(requested)
    return max(1, min(_BLOCK_MAX_ROWS, _BLOCK_BUDGET_VALUES // (2 * D)))


def _accumulate_second_moment(basis: RffBasis, X: np.ndarray, block_rows: int):
    """Blocked accumulation of Z.T @ Z (and the feature sum) over X.

    Only fixed-size buffers live across blocks; returns the accumulated
    (2D, 2D) matrix, the feature column sums, and the peak workspace bytes
    actually allocated (the accounting asserted by the scaling tests).
    """
    n = X.shape[0]
    D = basis.D
    m = 2 * D
    inv = 1.0 / np.sqrt(D)
    W_T = np.ascontiguousarray(basis.W.T)

    G = np.zeros((m, m), dtype=np.float64)
    P = np.empty((m, m), dtype=np.float64)
    rows = min(block_rows, n)
    Zb = np.empty((rows, m), dtype=np.float64)
    Tb = np.empty((rows, D), dtype=np.float64)
    sum_z = np.zeros(m, dtype=np.float64)

    peak_bytes = G.nbytes + P.nbytes + Zb.nbytes + Tb.nbytes + sum_z.nbytes

    for i0 in range(0, n, rows):
        i1 = min(n, i0 + rows)
        b = i1 - i0
        T = np.matmul(X[i0:i1], W_T, out=Tb[:b])
        np.cos(T, out=Zb[:b, :D])
        np.sin(T, out=Zb[:b, D:])
        Zb[:b] *= inv
        np.matmul(Zb[:b].T, Zb[:b], out=P)
        G += P
        sum_z += Zb[:b].sum(axis=0)
    return G, sum_z, peak_bytes


def rrx_fit(
    X,
    D: int = DEFAULT_D,
    sigma: Union[float, str] = MEDIAN,
    ridge: float = DEFAULT_RIDGE,
    rng: RngSpec = RngSpec(),
    center: bool = False,
    block_rows: Optional[int] = None,
) -> RrxModel:
    """Sample a basis, map the background, factorize Z.T @ Z + ridge*I.

    ``sigma="median"`` resolves the lengthscale as the median pairwise
    distance of the fitted pixels (capped subsample; see numerics).
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise DataError(f"X must be 2-D, got shape {X.shape}")
    n, d = X.shape
    if n < 1:
        raise DataError("need at least one background pixel")
    if D < 1:
        raise DataError(f"feature count D must be >= 1, got {D}")

    if sigma == MEDIAN:
        sigma = median_lengthscale(X, rng=rng.child(_CHILD_MEDIAN))
    else:
        sigma = float(sigma)
        if sigma <= 0:
            raise DataError(f"sigma must be positive, got {sigma}")

    basis = rff_sample(d, D, sigma, rng=rng.child(_CHILD_BASIS))
    G, sum_z, peak = _accumulate_second_moment(basis, X, _fit_block_rows(D, block_rows))

    feat_mean = None
    if center:
        feat_mean = sum_z / n
        G = G - n * np.outer(feat_mean, feat_mean)

    factor = spd_factorize(G, ridge)
    return RrxModel(
        basis=basis,
        feat_factor=factor,
        ridge=factor.ridge,
        n_fit=n,
        sigma=sigma,
        feat_mean=feat_mean,
        fit_peak_bytes=peak,
    )


def _check_test_pixels(model: RrxModel, X) -> np.ndarray:
    X = np.ascontiguousarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2 or X.shape[1] != model.d:
        raise DataError(
            f"test pixels have shape {X.shape}, model expects (k, {model.d})"
        )
    return X


def rrx_score(model: RrxModel, X) -> np.ndarray:
    """Score test pixels; re-transforms each pixel through the basis."""
    X = _check_test_pixels(model, X)
    return _backend.rrx_score_block(
        X, model.basis.W, model.feat_factor.factor, model.feat_mean
    )


def rrx_score_streaming(model: RrxModel, pixel_source: Iterable) -> Iterator[float]:
    """Score pixels one at a time with O(D^2) resident state.

    Yields exactly the values batch scoring would produce for the same
    pixels.  A dimension mismatch aborts the stream naming the offending
    position.
    """
    W = model.basis.W
    L = model.feat_factor.factor
    mu = model.feat_mean
    d = model.d
    for i, pixel in enumerate(pixel_source):
        x = np.ascontiguousarray(pixel, dtype=np.float64)
        if x.ndim != 1 or x.shape[0] != d:
            raise DataError(
                f"stream pixel {i} has shape {np.shape(pixel)}, expected ({d},)"
            )
        yield _backend.rrx_score_one(x, W, L, mu)


_MAGIC = b"RRXMODEL 1\n"


def save_model(model: RrxModel, path) -> None:
    """Serialize a fitted model: basis, factor, metadata in one container.

    Layout: magic line, then ASCII-tagged sections.  [BASIS] holds a basis
    file verbatim (length-prefixed), [FACTOR] the factor dim, applied ridge
    and the lower-triangular factor as little-endian float64, [META] one
    key=value per line, an optional [MEAN] block, then [END].
    """
    basis_buf = io.BytesIO()
    write_basis_stream(basis_buf, model.basis)
    basis_bytes = basis_buf.getvalue()

    buf = io.BytesIO()
    buf.write(_MAGIC)
    buf.write(b"[BASIS]\n")
    buf.write(f"{len(basis_bytes)}\n".encode("ascii"))
    buf.write(basis_bytes)
    buf.write(b"[FACTOR]\n")
    buf.write(f"{model.feat_factor.dim} {model.feat_factor.ridge!r}\n".encode("ascii"))
    buf.write(model.feat_factor.factor.astype("<f8").tobytes())
    buf.write(b"[META]\n")
    meta = {
        "n_fit": model.n_fit,
        "sigma": repr(model.sigma),
        "ridge": repr(model.ridge),
        "center": int(model.feat_mean is not None),
        "fit_peak_bytes": model.fit_peak_bytes,
    }
    for key, value in meta.items():
        buf.write(f"{key}={value}\n".encode("ascii"))
    if model.feat_mean is not None:
        buf.write(b"[MEAN]\n")
        buf.write(model.feat_mean.astype("<f8").tobytes())
    buf.write(b"[END]\n")
    with open(path, "wb") as fh:
        fh.write(buf.getvalue())


def load_model(path) -> RrxModel:
    with open(path, "rb") as fh:
        blob = fh.read()
    stream = io.BytesIO(blob)
    if stream.readline() != _MAGIC:
        raise DataError(f"{path}: not an rrx model container")

    def expect(tag: bytes):
        line = stream.readline()
        if line != tag + b"\n":
            raise DataError(f"{path}: expected section {tag.decode()}, got {line!r}")

    expect(b"[BASIS]")
    blen = int(stream.readline())
    basis = read_basis_stream(io.BytesIO(stream.read(blen)), origin=str(path))
    expect(b"[FACTOR]")
    dim_s, ridge_s = stream.readline().decode("ascii").split()
    dim = int(dim_s)
    factor_bytes = stream.read(dim * dim * 8)
    factor = np.frombuffer(factor_bytes, dtype="<f8").reshape(dim, dim).copy()
    expect(b"[META]")
    meta = {}
    while True:
        pos = stream.tell()
        line = stream.readline().decode("ascii").rstrip("\n")
        if line.startswith("["):
            stream.seek(pos)
            break
        key, _, value = line.partition("=")
        meta[key] = value
    feat_mean = None
    if int(meta.get("center", "0")):
        expect(b"[MEAN]")
        feat_mean = np.frombuffer(stream.read(dim * 8), dtype="<f8").copy()
    expect(b"[END]")
    return RrxModel(
        basis=basis,
        feat_factor=SpdFactor(dim=dim, factor=factor, ridge=float(ridge_s)),
        ridge=float(meta["ridge"]),
        n_fit=int(meta["n_fit"]),
        sigma=float(meta["sigma"]),
        feat_mean=feat_mean,
        fit_peak_bytes=int(meta.get("fit_peak_bytes", "0")),
    )
