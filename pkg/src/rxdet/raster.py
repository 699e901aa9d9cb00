"""Multiband raster data model and file formats.

A scene is held as an (n, d) pixel-major sample matrix (n = height * width,
row-major pixel order) with the spatial shape kept as metadata only; the
detectors never see geometry.  Two on-disk formats are supported:

bsq-binary (canonical)
    ASCII header line ``"height width bands\\n"`` followed by
    height*width*bands little-endian IEEE-754 float64 values in
    band-sequential order: band 0's full plane row-major, then band 1, ...
    Masks use the same layout with bands=1 and values in {0.0, 1.0}.

csv
    First line ``"height,width,bands"``, then n lines of d comma-separated
    decimal values (pixel-major).  Score maps written as CSV are instead a
    bare spatial grid: height lines of width comma-separated values.

All types are immutable after construction and safe to share across threads.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError

BSQ = "bsq-binary"
CSV = "csv"
_FORMATS = (BSQ, CSV)

TRAIN = "train"
VALIDATION = "validation"
TEST = "test"
_SPLITS = (TRAIN, VALIDATION, TEST)


def _freeze(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


def _check_shape(height: int, width: int, bands: int) -> None:
    if height < 1 or width < 1 or bands < 1:
        raise DataError(f"invalid dimensions {height}x{width}x{bands}; all must be >= 1")


@dataclass(frozen=True)
class Raster:
    """An n-pixel, d-band image as an (n, d) float64 sample matrix."""

    height: int
    width: int
    bands: int
    samples: np.ndarray

    def __post_init__(self) -> None:
        _check_shape(self.height, self.width, self.bands)
        samples = np.ascontiguousarray(self.samples, dtype=np.float64)
        if samples.ndim != 2 or samples.shape != (self.height * self.width, self.bands):
            raise DataError(
                f"samples shape {np.shape(self.samples)} does not match "
                f"{self.height}x{self.width} pixels x {self.bands} bands"
            )
        if not np.isfinite(samples).all():
            raise DataError("raster contains non-finite values")
        object.__setattr__(self, "samples", _freeze(samples))

    @property
    def n_pixels(self) -> int:
        return self.height * self.width


@dataclass(frozen=True)
class Mask:
    """Per-pixel boolean target labels aligned with a raster's pixel order."""

    height: int
    width: int
    labels: np.ndarray

    def __post_init__(self) -> None:
        _check_shape(self.height, self.width, 1)
        labels = np.ascontiguousarray(self.labels, dtype=bool)
        if labels.ndim != 1 or labels.shape[0] != self.height * self.width:
            raise DataError(
                f"label count {np.size(self.labels)} does not match "
                f"{self.height}x{self.width} pixels"
            )
        object.__setattr__(self, "labels", _freeze(labels))

    @property
    def n_pixels(self) -> int:
        return self.height * self.width


@dataclass(frozen=True)
class ScoreMap:
    """Per-pixel non-negative anomaly scores aligned with a raster."""

    height: int
    width: int
    scores: np.ndarray

    def __post_init__(self) -> None:
        _check_shape(self.height, self.width, 1)
        scores = np.ascontiguousarray(self.scores, dtype=np.float64)
        if scores.ndim != 1 or scores.shape[0] != self.height * self.width:
            raise DataError(
                f"score count {np.size(self.scores)} does not match "
                f"{self.height}x{self.width} pixels"
            )
        if not np.isfinite(scores).all():
            raise DataError("score map contains non-finite values")
        if (scores < 0).any():
            raise DataError("score map contains negative values")
        object.__setattr__(self, "scores", _freeze(scores))


@dataclass(frozen=True)
class PatchGrid:
    """Non-overlapping patch layout with per-patch split tags."""

    patch_h: int
    patch_w: int
    assignments: tuple = field(default_factory=tuple)

    def __post_init__(self) -> None:
        _check_shape(self.patch_h, self.patch_w, 1)
        norm = []
        for entry in self.assignments:
            row, col, tag = entry
            if row < 0 or col < 0:
                raise DataError(f"negative patch offset ({row}, {col})")
            if tag not in _SPLITS:
                raise DataError(f"unknown split tag {tag!r}; expected one of {_SPLITS}")
            norm.append((int(row), int(col), tag))
        for a in range(len(norm)):
            ra, ca, _ = norm[a]
            for b in range(a + 1, len(norm)):
                rb, cb, _ = norm[b]
                if abs(ra - rb) < self.patch_h and abs(ca - cb) < self.patch_w:
                    raise DataError(
                        f"patches at ({ra},{ca}) and ({rb},{cb}) overlap "
                        f"for {self.patch_h}x{self.patch_w} patches"
                    )
        object.__setattr__(self, "assignments", tuple(norm))

    def check_fits(self, height: int, width: int) -> None:
        for row, col, _ in self.assignments:
            if row + self.patch_h > height or col + self.patch_w > width:
                raise DataError(
                    f"patch at ({row},{col}) of size {self.patch_h}x{self.patch_w} "
                    f"exceeds raster bounds {height}x{width}"
                )

    def tagged(self, tag: str):
        return [(r, c) for r, c, t in self.assignments if t == tag]


def _planes(samples: np.ndarray, height: int, width: int) -> np.ndarray:
    """(n, d) pixel-major samples -> (bands, height, width) planes."""
    return np.ascontiguousarray(samples.T.reshape(-1, height, width))


def _from_planes(planes: np.ndarray) -> np.ndarray:
    bands = planes.shape[0]
    return np.ascontiguousarray(planes.reshape(bands, -1).T)


def _parse_header_tokens(tokens, path) -> tuple:
    if len(tokens) != 3:
        raise DataError(f"{path}: malformed header {tokens!r}; expected 'height width bands'")
    try:
        h, w, b = (int(t) for t in tokens)
    except ValueError as exc:
        raise DataError(f"{path}: malformed header {tokens!r}: {exc}") from exc
    _check_shape(h, w, b)
    return h, w, b


def read_raster(path, format: str = BSQ) -> Raster:
    """Read a raster from ``path`` in the given format."""
    if format == BSQ:
        with open(path, "rb") as fh:
            header = fh.readline()
            if not header.endswith(b"\n"):
                raise DataError(f"{path}: missing header line")
            h, w, b = _parse_header_tokens(header.decode("ascii", "replace").split(), path)
            raw = fh.read()
        expected = h * w * b * 8
        if len(raw) != expected:
            raise DataError(
                f"{path}: dimension mismatch: header promises {h * w * b} values "
                f"({expected} bytes), file carries {len(raw)} bytes"
            )
        planes = np.frombuffer(raw, dtype="<f8").reshape(b, h, w)
        samples = _from_planes(planes)
    elif format == CSV:
        with open(path, "r", encoding="ascii") as fh:
            header = fh.readline()
            h, w, b = _parse_header_tokens(header.strip().split(","), path)
            try:
                samples = np.loadtxt(fh, delimiter=",", dtype=np.float64, ndmin=2)
            except ValueError as exc:
                raise DataError(f"{path}: malformed CSV body: {exc}") from exc
        if samples.shape != (h * w, b):
            raise DataError(
                f"{path}: dimension mismatch: header promises {h * w} rows x {b} "
                f"columns, body has shape {samples.shape}"
            )
    else:
        raise DataError(f"unknown raster format {format!r}; expected one of {_FORMATS}")
    if not np.isfinite(samples).all():
        raise DataError(f"{path}: raster contains non-finite values")
    return Raster(height=h, width=w, bands=b, samples=samples)


def write_raster(r: Raster, path, format: str = BSQ) -> None:
    """Write a raster to ``path``; bsq-binary round-trips bit-for-bit."""
    if format == BSQ:
        with open(path, "wb") as fh:
            fh.write(f"{r.height} {r.width} {r.bands}\n".encode("ascii"))
            fh.write(_planes(r.samples, r.height, r.width).astype("<f8").tobytes())
    elif format == CSV:
        buf = io.StringIO()
        buf.write(f"{r.height},{r.width},{r.bands}\n")
        for row in r.samples:
            buf.write(",".join(repr(float(v)) for v in row))
            buf.write("\n")
        with open(path, "w", encoding="ascii") as fh:
            fh.write(buf.getvalue())
    else:
        raise DataError(f"unknown raster format {format!r}; expected one of {_FORMATS}")


def read_mask(path) -> Mask:
    """Read a target mask (bsq-binary, bands=1, values in {0.0, 1.0})."""
    r = read_raster(path, BSQ)
    if r.bands != 1:
        raise DataError(f"{path}: mask must have exactly 1 band, got {r.bands}")
    vals = r.samples[:, 0]
    if not np.isin(vals, (0.0, 1.0)).all():
        raise DataError(f"{path}: mask values must all be 0.0 or 1.0")
    return Mask(height=r.height, width=r.width, labels=vals == 1.0)


def write_mask(m: Mask, path) -> None:
    r = Raster(
        height=m.height,
        width=m.width,
        bands=1,
        samples=m.labels.astype(np.float64)[:, None],
    )
    write_raster(r, path, BSQ)


def write_scoremap(map: ScoreMap, path, format: str = CSV) -> None:
    """Write a score map; CSV is a spatial grid, bsq-binary round-trips."""
    if format == BSQ:
        r = Raster(height=map.height, width=map.width, bands=1, samples=map.scores[:, None])
        write_raster(r, path, BSQ)
    elif format == CSV:
        grid = map.scores.reshape(map.height, map.width)
        with open(path, "w", encoding="ascii") as fh:
            for row in grid:
                fh.write(",".join(repr(float(v)) for v in row))
                fh.write("\n")
    else:
        raise DataError(f"unknown score map format {format!r}; expected one of {_FORMATS}")


def read_scoremap(path, format: str = CSV) -> ScoreMap:
    if format == BSQ:
        r = read_raster(path, BSQ)
        if r.bands != 1:
            raise DataError(f"{path}: score map must have exactly 1 band, got {r.bands}")
        return ScoreMap(height=r.height, width=r.width, scores=r.samples[:, 0])
    if format == CSV:
        grid = np.loadtxt(path, delimiter=",", dtype=np.float64, ndmin=2)
        return ScoreMap(height=grid.shape[0], width=grid.shape[1], scores=grid.ravel())
    raise DataError(f"unknown score map format {format!r}; expected one of {_FORMATS}")


def _patch_pixel_index(height: int, width: int, row: int, col: int, ph: int, pw: int):
    rows = np.arange(row, row + ph)
    cols = np.arange(col, col + pw)
    return (rows[:, None] * width + cols[None, :]).ravel()


def extract_patches(r: Raster, grid: PatchGrid) -> list:
    """Cut the grid's patches out of a raster, in assignment order."""
    grid.check_fits(r.height, r.width)
    out = []
    for row, col, _ in grid.assignments:
        idx = _patch_pixel_index(r.height, r.width, row, col, grid.patch_h, grid.patch_w)
        out.append(
            Raster(
                height=grid.patch_h,
                width=grid.patch_w,
                bands=r.bands,
                samples=r.samples[idx],
            )
        )
    return out


def extract_mask_patches(m: Mask, grid: PatchGrid) -> list:
    grid.check_fits(m.height, m.width)
    out = []
    for row, col, _ in grid.assignments:
        idx = _patch_pixel_index(m.height, m.width, row, col, grid.patch_h, grid.patch_w)
        out.append(Mask(height=grid.patch_h, width=grid.patch_w, labels=m.labels[idx]))
    return out


def full_cover_grid(height: int, width: int, patch_h: int, patch_w: int, tags=None) -> PatchGrid:
    """Grid that tiles the raster exactly; dims must divide evenly.

    ``tags`` assigns a split per patch in row-major patch order; default is
    a train/validation checkerboard.
    """
    if height % patch_h or width % patch_w:
        raise DataError(
            f"{patch_h}x{patch_w} patches do not tile a {height}x{width} raster"
        )
    rows = height // patch_h
    cols = width // patch_w
    entries = []
    for i in range(rows):
        for j in range(cols):
            if tags is None:
                tag = TRAIN if (i + j) % 2 == 0 else VALIDATION
            else:
                tag = tags[i * cols + j]
            entries.append((i * patch_h, j * patch_w, tag))
    return PatchGrid(patch_h=patch_h, patch_w=patch_w, assignments=tuple(entries))
