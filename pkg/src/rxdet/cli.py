"""Command-line interface.

Subcommands: detect, synth, eval, bench, gridsearch.  Every run that writes
an output also writes a ``<output>.manifest.json`` sidecar holding the fully
resolved configuration (including the resolved lengthscale and seed), so any
output can be replayed bit-identically.  Exit codes: 0 success, 2 usage
error, 3 data error, 4 numeric failure.

Options may come from a config file (``--config``, one ``key = value`` per
line, ``#`` comments); explicit flags win over the file.  The environment
variable ``RXDET_SEED`` replaces the built-in default seed (flags and config
still win).
"""

from __future__ import annotations

import functools
import json
import math
import os
import sys
import time

import click
import numpy as np

from . import __version__
from ._backend import active_backend, available_backends, get_backend
from .errors import DataError, NumericError
from .evalbench import (
    BenchRecord,
    bench_detector,
    grid_search,
    roc_auc,
    summarize_bench,
    write_bench_csv,
)
from .krx import krx_fit, krx_score
from .numerics import RngSpec
from .raster import (
    BSQ,
    CSV,
    Mask,
    ScoreMap,
    extract_mask_patches,
    extract_patches,
    full_cover_grid,
    read_mask,
    read_raster,
    read_scoremap,
    write_mask,
    write_raster,
    write_scoremap,
)
from .rrx import rrx_fit, rrx_score
from .rx import rx_fit, rx_score
from .synthgen import (
    CURVED_MIXTURE,
    GAUSSIAN_BLOB,
    REFERENCE_SEED,
    SceneSpec,
    generate_injected_patchwork,
    generate_scene,
)

_SEED_ENV = "RXDET_SEED"
_FORMATS = click.Choice([BSQ, CSV])


def _default_seed() -> int:
    raw = os.environ.get(_SEED_ENV)
    if raw is None:
        return 0
    try:
        return int(raw)
    except ValueError as exc:
        raise DataError(f"{_SEED_ENV} must be an integer, got {raw!r}") from exc


def _parse_config_file(path: str) -> dict:
    cfg = {}
    try:
        with open(path, "r", encoding="utf-8") as fh:
            for lineno, raw in enumerate(fh, 1):
                line = raw.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise DataError(
                        f"{path}:{lineno}: expected 'key = value', got {raw.rstrip()!r}"
                    )
                key, value = line.split("=", 1)
                cfg[key.strip().replace("-", "_")] = value.strip()
    except OSError as exc:
        raise DataError(f"cannot read config file {path}: {exc}") from exc
    return cfg


class _ConfigError(click.ClickException):
    exit_code = 3


def _config_option(fn):
    def callback(ctx, param, value):
        if value is None:
            return value
        try:
            cfg = _parse_config_file(value)
        except DataError as exc:
            raise _ConfigError(str(exc)) from exc
        # Config keys use flag spellings; map them onto parameter names.
        name_by_key = {}
        for p in ctx.command.params:
            for opt in p.opts:
                if opt.startswith("--"):
                    name_by_key[opt[2:].replace("-", "_")] = p.name
        mapped = {name_by_key.get(k, k): v for k, v in cfg.items()}
        ctx.default_map = {**(ctx.default_map or {}), **mapped}
        return value

    return click.option(
        "--config",
        type=click.Path(),
        is_eager=True,
        expose_value=False,
        callback=callback,
        help="Config file with one 'key = value' per line; flags override it.",
    )(fn)


def _exit_codes(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except click.ClickException:
            raise
        except DataError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(3)
        except NumericError as exc:
            click.echo(f"numeric error: {exc}", err=True)
            sys.exit(4)

    return wrapper


def _atomic_write(path: str, writer) -> None:
    tmp = f"{path}.tmp.{os.getpid()}"
    try:
        writer(tmp)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _write_manifest(output: str, command: str, config: dict, extra: dict) -> None:
    manifest = {
        "tool": "rxdet",
        "version": __version__,
        "backend": active_backend(),
        "command": command,
        "config": config,
        **extra,
    }

    def writer(tmp):
        with open(tmp, "w", encoding="utf-8") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
            fh.write("\n")

    _atomic_write(f"{output}.manifest.json", writer)


def _require_file(path: str) -> None:
    if not os.path.isfile(path):
        raise DataError(f"input file not found: {path}")


@click.group()
@click.version_option(version=__version__, prog_name="rxdet")
def main():
    """Global anomaly detection on multiband rasters (rx / krx / rrx)."""


@main.command()
@_config_option
@click.option("--input", "input_path", required=True, type=click.Path(), help="Input raster.")
@click.option("--input-format", type=_FORMATS, default=BSQ, show_default=True)
@click.option("--method", type=click.Choice(["rx", "krx", "rrx"]), required=True)
@click.option("--output", "output_path", required=True, type=click.Path(), help="Score map file.")
@click.option("--output-format", type=_FORMATS, default=BSQ, show_default=True)
@click.option("--feature-count", "-D", "feature_count", type=int, default=50, show_default=True, help="RRX feature count D.")
@click.option("--subsample", "-N", "subsample", type=int, default=3000, show_default=True, help="KRX background subsample N.")
@click.option("--sigma", default="median", show_default=True, help="Kernel lengthscale or 'median'.")
@click.option("--ridge", type=float, default=1e-2, show_default=True)
@click.option("--seed", type=int, default=None, help=f"Default 0; overridable via {_SEED_ENV}.")
@click.option("--verbose", is_flag=True)
@_exit_codes
def detect(input_path, input_format, method, output_path, output_format,
           feature_count, subsample, sigma, ridge, seed, verbose):
    """Fit a detector on a raster's pixels and write its score map."""
    seed = _default_seed() if seed is None else seed
    _require_file(input_path)
    raster = read_raster(input_path, input_format)
    sigma_arg = sigma if sigma == "median" else float(sigma)
    rng = RngSpec(seed=seed, stream=0)

    t0 = time.perf_counter()
    if method == "rx":
        model = rx_fit(raster.samples, ridge=ridge)
        fit_s = time.perf_counter() - t0
        t0 = time.perf_counter()
        scores = rx_score(model, raster.samples)
        resolved_sigma = None
    elif method == "krx":
        model = krx_fit(raster.samples, N=min(subsample, raster.n_pixels),
                        sigma=sigma_arg, ridge=ridge, rng=rng)
        fit_s = time.perf_counter() - t0
        t0 = time.perf_counter()
        scores = krx_score(model, raster.samples)
        resolved_sigma = model.sigma
    else:
        model = rrx_fit(raster.samples, D=feature_count, sigma=sigma_arg,
                        ridge=ridge, rng=rng)
        fit_s = time.perf_counter() - t0
        t0 = time.perf_counter()
        scores = rrx_score(model, raster.samples)
        resolved_sigma = model.sigma
    score_s = time.perf_counter() - t0

    smap = ScoreMap(height=raster.height, width=raster.width, scores=scores)
    _atomic_write(output_path, lambda tmp: write_scoremap(smap, tmp, output_format))
    config = {
        "input": input_path, "input_format": input_format, "method": method,
        "output": output_path, "output_format": output_format,
        "feature_count": feature_count, "subsample": subsample,
        "sigma": sigma, "ridge": ridge, "seed": seed,
    }
    _write_manifest(output_path, "detect", config, {
        "resolved_sigma": resolved_sigma,
        "timings": {"fit_seconds": fit_s, "score_seconds": score_s},
    })
    if verbose:
        click.echo(f"fit {fit_s:.3f}s score {score_s:.3f}s backend {active_backend()}")
    click.echo(f"wrote {output_path}")


@main.command()
@_config_option
@click.option("--preset", type=click.Choice(["reference", "patchwork"]), default=None,
              help="reference: 100x100x2 curved scene, 2.72%% anomalies; "
                   "patchwork: 4x4 grid of 12-band patches with injected targets.")
@click.option("--height", type=int, default=100, show_default=True)
@click.option("--width", type=int, default=100, show_default=True)
@click.option("--bands", type=int, default=2, show_default=True)
@click.option("--background", type=click.Choice([CURVED_MIXTURE, GAUSSIAN_BLOB]),
              default=CURVED_MIXTURE, show_default=True)
@click.option("--fraction", type=float, default=None,
              help="Anomalous pixel fraction  [default: 0.0272, patchwork preset: 0.003]")
@click.option("--separation", type=float, default=2.0, show_default=True)
@click.option("--blend", type=float, default=0.95, show_default=True,
              help="Target blend for the patchwork preset.")
@click.option("--seed", type=int, default=None,
              help=f"Default {REFERENCE_SEED} (reference scene); overridable via {_SEED_ENV}.")
@click.option("--output", "output_path", required=True, type=click.Path(), help="Scene raster.")
@click.option("--mask-out", "mask_path", required=True, type=click.Path(), help="Target mask.")
@_exit_codes
def synth(preset, height, width, bands, background, fraction, separation,
          blend, seed, output_path, mask_path):
    """Generate a synthetic scene plus its ground-truth target mask."""
    if seed is None:
        raw = os.environ.get(_SEED_ENV)
        seed = REFERENCE_SEED if raw is None else _default_seed()
    rng = RngSpec(seed=seed, stream=0)
    if preset == "patchwork":
        kwargs = {"blend": blend, "rng": rng}
        if fraction is not None:
            kwargs["anomaly_fraction"] = fraction
        raster, mask, _grid = generate_injected_patchwork(**kwargs)
    else:
        if preset == "reference":
            height, width, bands = 100, 100, 2
            background, fraction = CURVED_MIXTURE, 0.0272
        elif fraction is None:
            fraction = 0.0272
        spec = SceneSpec(height=height, width=width, bands=bands,
                         background=background, anomaly_fraction=fraction,
                         rng=rng, separation=separation)
        raster, mask = generate_scene(spec)
    _atomic_write(output_path, lambda tmp: write_raster(raster, tmp, BSQ))
    _atomic_write(mask_path, lambda tmp: write_mask(mask, tmp))
    config = {
        "preset": preset, "height": raster.height, "width": raster.width,
        "bands": raster.bands, "background": background, "fraction": fraction,
        "separation": separation, "blend": blend, "seed": seed,
        "output": output_path, "mask_out": mask_path,
    }
    _write_manifest(output_path, "synth", config,
                    {"anomalous_pixels": int(mask.labels.sum())})
    click.echo(f"wrote {output_path} and {mask_path} "
               f"({int(mask.labels.sum())} anomalous pixels)")


def _svg_roc(fpr, tpr, auc: float, log_x: bool) -> str:
    width, height, margin = 640, 480, 56
    fpr = np.asarray(fpr, dtype=float)
    tpr = np.asarray(tpr, dtype=float)
    if log_x:
        positive = fpr[fpr > 0]
        fmin = float(positive.min()) if positive.size else 1e-4
        fmin = min(max(fmin, 1e-6), 0.1)
        lo, hi = math.log10(fmin), 0.0

        def xmap(v):
            v = max(float(v), fmin)
            return margin + (math.log10(v) - lo) / (hi - lo) * (width - 2 * margin)

        ticks = [10.0 ** e for e in range(int(math.floor(lo)), 1)]
    else:
        def xmap(v):
            return margin + float(v) * (width - 2 * margin)

        ticks = [0.0, 0.25, 0.5, 0.75, 1.0]

    def ymap(v):
        return height - margin - float(v) * (height - 2 * margin)

    pts = " ".join(f"{xmap(x):.2f},{ymap(y):.2f}" for x, y in zip(fpr, tpr))
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<line x1="{margin}" y1="{height - margin}" x2="{width - margin}" '
        f'y2="{height - margin}" stroke="black"/>',
        f'<line x1="{margin}" y1="{margin}" x2="{margin}" y2="{height - margin}" '
        f'stroke="black"/>',
    ]
    for t in ticks:
        x = xmap(t)
        label = f"{t:g}"
        parts.append(f'<line x1="{x:.2f}" y1="{height - margin}" x2="{x:.2f}" '
                     f'y2="{height - margin + 5}" stroke="black"/>')
        parts.append(f'<text x="{x:.2f}" y="{height - margin + 18}" font-size="11" '
                     f'text-anchor="middle">{label}</text>')
    for t in (0.0, 0.25, 0.5, 0.75, 1.0):
        y = ymap(t)
        parts.append(f'<line x1="{margin - 5}" y1="{y:.2f}" x2="{margin}" y2="{y:.2f}" '
                     f'stroke="black"/>')
        parts.append(f'<text x="{margin - 8}" y="{y + 4:.2f}" font-size="11" '
                     f'text-anchor="end">{t:g}</text>')
    parts.append(f'<polyline points="{pts}" fill="none" stroke="#c22" stroke-width="1.5"/>')
    parts.append(f'<text x="{width / 2:.0f}" y="{height - 12}" font-size="13" '
                 f'text-anchor="middle">false positive rate'
                 f'{" (log)" if log_x else ""}</text>')
    parts.append(f'<text x="16" y="{height / 2:.0f}" font-size="13" '
                 f'transform="rotate(-90 16 {height / 2:.0f})" '
                 f'text-anchor="middle">true positive rate</text>')
    parts.append(f'<text x="{width - margin}" y="{margin - 8}" font-size="13" '
                 f'text-anchor="end">AUC = {auc:.4f}</text>')
    parts.append("</svg>")
    return "\n".join(parts)


@main.command(name="eval")
@_config_option
@click.option("--scores", "scores_path", required=True, type=click.Path())
@click.option("--scores-format", type=_FORMATS, default=BSQ, show_default=True)
@click.option("--mask", "mask_path", required=True, type=click.Path())
@click.option("--roc-out", type=click.Path(), default=None, help="ROC CSV output.")
@click.option("--svg-out", type=click.Path(), default=None, help="Optional ROC SVG plot.")
@click.option("--log-x", is_flag=True, help="Log-scale false-positive axis in the SVG.")
@_exit_codes
def eval_cmd(scores_path, scores_format, mask_path, roc_out, svg_out, log_x):
    """Compute ROC/AUC of a score map against a ground-truth mask."""
    _require_file(scores_path)
    _require_file(mask_path)
    smap = read_scoremap(scores_path, scores_format)
    mask = read_mask(mask_path)
    if (smap.height, smap.width) != (mask.height, mask.width):
        raise DataError(
            f"score map is {smap.height}x{smap.width}, mask is {mask.height}x{mask.width}"
        )
    roc = roc_auc(smap.scores, mask.labels)
    if roc_out:
        def writer(tmp):
            with open(tmp, "w", encoding="ascii") as fh:
                fh.write("fpr,tpr,threshold\n")
                fh.write("0.0,0.0,inf\n")
                for f, t, thr in zip(roc.fpr[1:], roc.tpr[1:], roc.thresholds):
                    fh.write(f"{float(f)!r},{float(t)!r},{float(thr)!r}\n")
        _atomic_write(roc_out, writer)
        _write_manifest(roc_out, "eval", {
            "scores": scores_path, "scores_format": scores_format,
            "mask": mask_path, "roc_out": roc_out, "svg_out": svg_out,
            "log_x": log_x,
        }, {"auc": roc.auc, "n_pos": roc.n_pos, "n_neg": roc.n_neg})
    if svg_out:
        svg = _svg_roc(roc.fpr, roc.tpr, roc.auc, log_x)

        def svg_writer(tmp):
            with open(tmp, "w", encoding="utf-8") as fh:
                fh.write(svg)

        _atomic_write(svg_out, svg_writer)
    click.echo(f"AUC {roc.auc!r}")


@main.command()
@_config_option
@click.option("--method", type=click.Choice(["rx", "krx", "rrx"]), required=True)
@click.option("--input", "input_path", type=click.Path(), default=None,
              help="Raster to benchmark on; omit to use synthetic pixels.")
@click.option("--pixels", type=int, default=10000, show_default=True,
              help="Synthetic pixel count when --input is omitted.")
@click.option("--bands", type=int, default=2, show_default=True)
@click.option("--sweep", default=None,
              help="Comma-separated D (rrx) or N (krx) values; one run each.")
@click.option("--sigma", default="median", show_default=True)
@click.option("--ridge", type=float, default=1e-2, show_default=True)
@click.option("--repeats", type=int, default=3, show_default=True)
@click.option("--seed", type=int, default=None, help=f"Default 0; overridable via {_SEED_ENV}.")
@click.option("--compare-backends", is_flag=True,
              help="Also time rrx detection under every available hot-loop backend.")
@click.option("--output", "output_path", required=True, type=click.Path(), help="Benchmark CSV.")
@_exit_codes
def bench(method, input_path, pixels, bands, sweep, sigma, ridge, repeats,
          seed, compare_backends, output_path):
    """Per-phase wall-clock benchmark (serial execution by contract)."""
    seed = _default_seed() if seed is None else seed
    rng = RngSpec(seed=seed, stream=0)
    if input_path is not None:
        _require_file(input_path)
        X = read_raster(input_path, BSQ).samples
    else:
        X = rng.child(9).generator().standard_normal((pixels, bands))
    sigma_arg = sigma if sigma == "median" else float(sigma)

    if sweep:
        try:
            values = [int(v) for v in sweep.split(",") if v.strip()]
        except ValueError as exc:
            raise DataError(f"bad --sweep value: {exc}") from exc
    else:
        values = [None]

    records = []
    for value in values:
        kwargs = {"sigma": sigma_arg, "ridge": ridge, "rng": rng, "repeats": repeats}
        if method == "rrx":
            kwargs["D"] = value if value is not None else 50
        elif method == "krx":
            kwargs["N"] = value if value is not None else min(1000, X.shape[0])
        elif value is not None:
            raise DataError("--sweep applies to krx (N) and rrx (D) only")
        records.extend(bench_detector(method, X, **kwargs))

    if compare_backends:
        records.extend(_backend_comparison(X, sigma_arg, ridge, rng, repeats))

    _atomic_write(output_path, lambda tmp: write_bench_csv(records, tmp))
    config = {
        "method": method, "input": input_path, "pixels": X.shape[0],
        "bands": X.shape[1], "sweep": sweep, "sigma": sigma, "ridge": ridge,
        "repeats": repeats, "seed": seed, "compare_backends": compare_backends,
        "output": output_path,
    }
    _write_manifest(output_path, "bench", config, {})
    for (meth, phase, param), median in sorted(summarize_bench(records).items()):
        tag = f"{meth}[{param}]" if param is not None else meth
        click.echo(f"{tag:>16} {phase:<11} median {median:.6f}s")
    click.echo(f"wrote {output_path}")


def _backend_comparison(X, sigma, ridge, rng: RngSpec, repeats: int) -> list:
    """Time rrx batch detection under each hot-loop backend."""
    model = rrx_fit(X, D=50, sigma=sigma, ridge=ridge, rng=rng)
    records = []
    for name in available_backends():
        impl = get_backend(name)
        impl.rrx_score_block(X, model.basis.W, model.feat_factor.factor, None)
        for _ in range(repeats):
            t0 = time.perf_counter()
            impl.rrx_score_block(X, model.basis.W, model.feat_factor.factor, None)
            records.append(BenchRecord(
                method=f"rrx+{name}", phase="detection",
                wall_seconds=time.perf_counter() - t0,
                n=X.shape[0], d=X.shape[1], param=model.D,
            ))
    return records


@main.command()
@_config_option
@click.option("--scene", "scene_path", required=True, type=click.Path())
@click.option("--mask", "mask_path", required=True, type=click.Path())
@click.option("--method", type=click.Choice(["krx", "rrx"]), default="rrx", show_default=True)
@click.option("--patch-h", type=int, default=100, show_default=True)
@click.option("--patch-w", type=int, default=100, show_default=True)
@click.option("--feature-count", "-D", "feature_count", type=int, default=100, show_default=True)
@click.option("--subsample", "-N", "subsample", type=int, default=1000, show_default=True)
@click.option("--lambda-grid", default="1e-5,1e-4,1e-3,1e-2,1e-1,1",
              show_default=True, help="Regularizer values (six decades).")
@click.option("--c-grid", default="0.05,0.1,0.5,1,2,5",
              show_default=True, help="Median-multiplier values (around the median).")
@click.option("--seed", type=int, default=None, help=f"Default 0; overridable via {_SEED_ENV}.")
@click.option("--output", "output_path", required=True, type=click.Path(), help="Grid CSV.")
@_exit_codes
def gridsearch(scene_path, mask_path, method, patch_h, patch_w, feature_count,
               subsample, lambda_grid, c_grid, seed, output_path):
    """Grid-search (lambda, c) on a checkerboard train/validation patch split."""
    seed = _default_seed() if seed is None else seed
    _require_file(scene_path)
    _require_file(mask_path)
    raster = read_raster(scene_path, BSQ)
    mask = read_mask(mask_path)
    if (raster.height, raster.width) != (mask.height, mask.width):
        raise DataError(
            f"scene is {raster.height}x{raster.width}, mask is {mask.height}x{mask.width}"
        )
    try:
        lam_values = [float(v) for v in lambda_grid.split(",") if v.strip()]
        c_values = [float(v) for v in c_grid.split(",") if v.strip()]
    except ValueError as exc:
        raise DataError(f"bad grid value: {exc}") from exc

    grid = full_cover_grid(raster.height, raster.width, patch_h, patch_w)
    patches = extract_patches(raster, grid)
    mask_patches = extract_mask_patches(mask, grid)
    train, val = [], []
    for (row, col, tag), patch, mpatch in zip(grid.assignments, patches, mask_patches):
        (train if tag == "train" else val).append((patch, mpatch))

    rng = RngSpec(seed=seed, stream=0)
    result = grid_search(train, val, method, lam_values, c_values, rng,
                         D=feature_count, N=subsample)

    def writer(tmp):
        with open(tmp, "w", encoding="ascii") as fh:
            fh.write("lambda\\c," + ",".join(f"{c:g}" for c in result.c_grid) + "\n")
            for i, lam in enumerate(result.lambda_grid):
                row = ",".join(repr(float(v)) for v in result.mean_val_auc[i])
                fh.write(f"{lam:g},{row}\n")

    _atomic_write(output_path, writer)
    best_lam, best_c = result.best
    best_auc = float(result.mean_val_auc.max())
    config = {
        "scene": scene_path, "mask": mask_path, "method": method,
        "patch_h": patch_h, "patch_w": patch_w, "feature_count": feature_count,
        "subsample": subsample, "lambda_grid": lambda_grid, "c_grid": c_grid,
        "seed": seed, "output": output_path,
    }
    _write_manifest(output_path, "gridsearch", config, {
        "best_lambda": best_lam, "best_c": best_c, "best_mean_val_auc": best_auc,
    })
    click.echo(f"best lambda={best_lam:g} c={best_c:g} mean-val-AUC={best_auc:.4f}")
    click.echo(f"wrote {output_path}")


if __name__ == "__main__":
    main()
