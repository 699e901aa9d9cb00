"""ROC/AUC computation, phase benchmarking, and hyperparameter grid search.

The ROC is exact: one vertex per distinct score value (ties grouped), AUC by
trapezoid, which equals the Mann-Whitney statistic with ties counted 1/2.
Benchmarks stage each detector into the four phases of the complexity model
(transform, covariance, inversion, detection), run a discarded warm-up, and
report per-repeat wall times on a monotonic clock with BLAS pinned to one
thread for stable attribution.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
from threadpoolctl import threadpool_limits

from .errors import DataError
from .krx import gauss_kernel, krx_fit, krx_score
from .numerics import RngSpec, median_lengthscale, spd_factorize, whiten_solve
from .raster import Mask, Raster
from .rff import rff_map, rff_sample
from .rrx import rrx_fit, rrx_score
from .rx import rx_fit, rx_score
from . import _backend

PHASES = ("transform", "covariance", "inversion", "detection")


@dataclass(frozen=True)
class RocResult:
    """Exact ROC vertices (leading (0,0) included) and trapezoidal AUC."""

    thresholds: np.ndarray
    fpr: np.ndarray
    tpr: np.ndarray
    auc: float
    n_pos: int
    n_neg: int


@dataclass(frozen=True)
class BenchRecord:
    method: str
    phase: str
    wall_seconds: float
    n: int
    d: int
    param: Optional[int] = None
    peak_bytes: Optional[int] = None


@dataclass(frozen=True)
class GridSearchResult:
    lambda_grid: np.ndarray
    c_grid: np.ndarray
    mean_val_auc: np.ndarray
    best: tuple


def roc_auc(scores, labels) -> RocResult:
    """Exact ROC and AUC for anomaly scores against boolean labels.

    ``fpr``/``tpr`` run from (0, 0) to (1, 1) with one vertex per distinct
    score; ``thresholds[i]`` is the score admitted at vertex ``i + 1``.
    """
    scores = np.asarray(scores, dtype=np.float64).ravel()
    if isinstance(labels, Mask):
        labels = labels.labels
    labels = np.asarray(labels, dtype=bool).ravel()
    if scores.shape != labels.shape:
        raise DataError(
            f"{scores.size} scores vs {labels.size} labels: lengths must match"
        )
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise DataError(
            f"need both classes to build a ROC, got {n_pos} positives / {n_neg} negatives"
        )
    order = np.argsort(-scores, kind="stable")
    s = scores[order]
    y = labels[order]
    last = np.nonzero(np.diff(s))[0]
    ends = np.concatenate([last, [s.size - 1]])
    tp = np.cumsum(y)[ends]
    fp = np.cumsum(~y)[ends]
    tpr = np.concatenate([[0.0], tp / n_pos])
    fpr = np.concatenate([[0.0], fp / n_neg])
    auc = float(np.trapezoid(tpr, fpr))
    return RocResult(
        thresholds=s[ends], fpr=fpr, tpr=tpr, auc=auc, n_pos=n_pos, n_neg=n_neg
    )


def _stage_rx(X: np.ndarray, ridge: float, rng: RngSpec):
    state = {}

    def covariance():
        state["model_parts"] = (X.mean(axis=0),)
        mu = state["model_parts"][0]
        Xc = X - mu
        state["cov"] = (Xc.T @ Xc) / X.shape[0]

    def inversion():
        state["factor"] = spd_factorize(state["cov"], ridge)

    def detection():
        W = whiten_solve(state["factor"], (X - state["model_parts"][0]).T)
        state["scores"] = np.einsum("ij,ij->j", W, W)

    return [("covariance", covariance), ("inversion", inversion), ("detection", detection)]


def _stage_krx(X: np.ndarray, N: int, sigma, ridge: float, rng: RngSpec):
    n = X.shape[0]
    if not 2 <= N <= n:
        raise DataError(f"subsample size N={N} must satisfy 2 <= N <= n={n}")
    idx = rng.child(0).generator().permutation(n)[:N]
    support = np.ascontiguousarray(X[idx])
    if sigma == "median":
        sigma = median_lengthscale(support, rng=rng.child(1))
    state = {}

    def transform():
        state["kstar"] = gauss_kernel(support, X, sigma)

    def covariance():
        K = gauss_kernel(support, support, sigma)
        state["gram"] = K @ K

    def inversion():
        state["factor"] = spd_factorize(state["gram"], ridge)

    def detection():
        scores = np.empty(n, dtype=np.float64)
        kstar = state["kstar"]
        for i0 in range(0, n, 4096):
            i1 = min(n, i0 + 4096)
            W = whiten_solve(state["factor"], kstar[:, i0:i1])
            scores[i0:i1] = np.einsum("ij,ij->j", W, W)
        state["scores"] = scores

    return [
        ("transform", transform),
        ("covariance", covariance),
        ("inversion", inversion),
        ("detection", detection),
    ]


def _stage_rrx(X: np.ndarray, D: int, sigma, ridge: float, rng: RngSpec):
    if sigma == "median":
        sigma = median_lengthscale(X, rng=rng.child(1))
    basis = rff_sample(X.shape[1], D, sigma, rng=rng.child(2))
    state = {}

    def transform():
        state["Z"] = rff_map(basis, X).Z

    def covariance():
        Z = state["Z"]
        state["gram"] = Z.T @ Z

    def inversion():
        state["factor"] = spd_factorize(state["gram"], ridge)

    def detection():
        # Online-mode scoring: each pixel is re-transformed on the fly.
        state["scores"] = _backend.rrx_score_block(
            X, basis.W, state["factor"].factor, None
        )

    return [
        ("transform", transform),
        ("covariance", covariance),
        ("inversion", inversion),
        ("detection", detection),
    ]


def bench_detector(
    method: str,
    data,
    *,
    repeats: int = 3,
    rng: RngSpec = RngSpec(),
    N: Optional[int] = None,
    D: Optional[int] = None,
    sigma="median",
    ridge: float = 1e-2,
) -> list:
    """Per-phase wall timings of one detector on one scene.

    Runs one discarded warm-up pass, then ``repeats`` timed passes, emitting
    one record per phase per pass (medians are the caller's business, see
    :func:`summarize_bench`).  Timing runs serially under a single BLAS
    thread.
    """
    X = data.samples if isinstance(data, Raster) else np.asarray(data, dtype=np.float64)
    if X.ndim != 2:
        raise DataError(f"benchmark data must be 2-D samples, got shape {X.shape}")
    if repeats < 1:
        raise DataError(f"repeats must be >= 1, got {repeats}")
    n, d = X.shape

    if method == "rx":
        param = None
        stage = lambda: _stage_rx(X, ridge, rng)
    elif method == "krx":
        if N is None:
            raise DataError("krx benchmark needs N")
        param = N
        stage = lambda: _stage_krx(X, N, sigma, ridge, rng)
    elif method == "rrx":
        if D is None:
            raise DataError("rrx benchmark needs D")
        param = D
        stage = lambda: _stage_rrx(X, D, sigma, ridge, rng)
    else:
        raise DataError(f"unknown method {method!r}; expected rx, krx or rrx")

    records = []
    with threadpool_limits(limits=1):
        for rep in range(repeats + 1):
            phases = stage()
            for name, fn in phases:
                t0 = time.perf_counter()
                fn()
                elapsed = time.perf_counter() - t0
                if rep == 0:
                    continue  # warm-up pass
                records.append(
                    BenchRecord(
                        method=method,
                        phase=name,
                        wall_seconds=elapsed,
                        n=n,
                        d=d,
                        param=param,
                    )
                )
    return records


def summarize_bench(records) -> dict:
    """Median wall seconds per (method, phase, param)."""
    groups: dict = {}
    for r in records:
        groups.setdefault((r.method, r.phase, r.param), []).append(r.wall_seconds)
    return {key: float(np.median(vals)) for key, vals in groups.items()}


def write_bench_csv(records, path) -> None:
    with open(path, "w", encoding="ascii") as fh:
        fh.write("method,phase,n,d,param,wall_seconds\n")
        for r in records:
            param = "" if r.param is None else str(r.param)
            fh.write(f"{r.method},{r.phase},{r.n},{r.d},{param},{r.wall_seconds!r}\n")


def grid_search(
    train_patches: Sequence,
    val_patches: Sequence,
    method: str,
    lambda_grid,
    c_grid,
    rng: RngSpec = RngSpec(),
    *,
    D: int = 100,
    N: int = 1000,
    max_pairs: Optional[int] = None,
) -> GridSearchResult:
    """Mean validation AUC over a (lambda, c) grid; c scales the median.

    Fits on the concatenated train-patch pixels with sigma = c * m, where m
    is the median pairwise distance of the training pixels (computed once),
    scores every validation patch, and averages the per-patch AUC.  Ties for
    the best cell break toward smaller lambda, then smaller c.
    """
    if method not in ("krx", "rrx"):
        raise DataError(f"grid search supports krx and rrx, got {method!r}")
    lambda_grid = np.asarray(lambda_grid, dtype=np.float64)
    c_grid = np.asarray(c_grid, dtype=np.float64)
    if lambda_grid.size == 0 or c_grid.size == 0:
        raise DataError("lambda_grid and c_grid must be non-empty")
    if len(train_patches) == 0 or len(val_patches) == 0:
        raise DataError("need at least one train patch and one validation patch")

    Xtr = np.vstack([p.samples for p, _ in train_patches])
    kwargs = {} if max_pairs is None else {"max_pairs": max_pairs}
    m = median_lengthscale(Xtr, rng=rng.child(0), **kwargs)

    # Duplicate grid values must reproduce identical cells, so the per-cell
    # stream is derived from the first occurrence of each value.
    lam_key = [int(np.flatnonzero(lambda_grid == lam)[0]) for lam in lambda_grid]
    c_key = [int(np.flatnonzero(c_grid == c)[0]) for c in c_grid]

    mean_val_auc = np.empty((lambda_grid.size, c_grid.size), dtype=np.float64)
    for i, lam in enumerate(lambda_grid):
        for j, c in enumerate(c_grid):
            cell_rng = rng.child(16 + lam_key[i] * c_grid.size + c_key[j])
            sigma = float(c) * m
            if method == "rrx":
                model = rrx_fit(Xtr, D=D, sigma=sigma, ridge=float(lam), rng=cell_rng)
                score = rrx_score
            else:
                model = krx_fit(
                    Xtr, N=min(N, Xtr.shape[0]), sigma=sigma, ridge=float(lam), rng=cell_rng
                )
                score = krx_score
            aucs = [
                roc_auc(score(model, patch.samples), mask).auc
                for patch, mask in val_patches
            ]
            mean_val_auc[i, j] = float(np.mean(aucs))

    best_val = mean_val_auc.max()
    cells = np.argwhere(mean_val_auc == best_val)
    ordered = sorted(cells, key=lambda ij: (lambda_grid[ij[0]], c_grid[ij[1]]))
    bi, bj = (int(v) for v in ordered[0])
    return GridSearchResult(
        lambda_grid=lambda_grid,
        c_grid=c_grid,
        mean_val_auc=mean_val_auc,
        best=(float(lambda_grid[bi]), float(c_grid[bj])),
    )
