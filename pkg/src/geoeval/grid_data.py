"""Raster data model, CSV ingestion and sample/prediction extraction.

Cells are addressed by ``(row, col)`` and stored row-major, i.e. the flat
index of a cell is ``row * width + col``. Spatial computations use cell
centres ``(row + 0.5, col + 0.5)`` in cell units.
"""

from __future__ import annotations

import csv
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np

from .exceptions import (
    DuplicateCellError,
    EmptyPredictionError,
    GridParseError,
    GridValueError,
    LocationError,
)

_DIMS_RE = re.compile(r"#\s*width\s*=\s*(\d+)\s+height\s*=\s*(\d+)")


class Location(NamedTuple):
    row: int
    col: int


def _frozen(a, dtype):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Grid:
    """Rectangular raster of covariate layers, one target layer and a validity mask.

    ``covariates`` has shape ``(width * height, P)``; ``target`` and
    ``valid_mask`` have shape ``(width * height,)``. Invalid cells hold NaN.
    """

    width: int
    height: int
    names: tuple[str, ...]
    covariates: np.ndarray
    target: np.ndarray
    valid_mask: np.ndarray

    def __post_init__(self):
        n = self.width * self.height
        if self.width < 1 or self.height < 1:
            raise ValueError("grid dimensions must be positive")
        names = tuple(str(s) for s in self.names)
        if len(names) < 1:
            raise ValueError("grid needs at least one covariate")
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate covariate names in {names}")
        cov = np.asarray(self.covariates, dtype=np.float64)
        if cov.ndim == 1:
            cov = cov[:, None]
        if cov.shape != (n, len(names)):
            raise ValueError(f"covariates shape {cov.shape} != {(n, len(names))}")
        tgt = np.asarray(self.target, dtype=np.float64)
        mask = np.asarray(self.valid_mask, dtype=bool)
        if tgt.shape != (n,) or mask.shape != (n,):
            raise ValueError("target and valid_mask must have width*height entries")
        if not (np.isfinite(cov[mask]).all() and np.isfinite(tgt[mask]).all()):
            raise ValueError("valid cells must have finite covariates and target")
        object.__setattr__(self, "names", names)
        object.__setattr__(self, "covariates", _frozen(cov, np.float64))
        object.__setattr__(self, "target", _frozen(tgt, np.float64))
        object.__setattr__(self, "valid_mask", _frozen(mask, bool))

    @property
    def n_covariates(self) -> int:
        return len(self.names)

    @property
    def n_valid(self) -> int:
        return int(self.valid_mask.sum())

    def flat_index(self, rows, cols) -> np.ndarray:
        return np.asarray(rows, dtype=np.int64) * self.width + np.asarray(cols, dtype=np.int64)

    def valid_flat_indices(self) -> np.ndarray:
        return np.flatnonzero(self.valid_mask)

    def locations_of(self, flat) -> np.ndarray:
        flat = np.asarray(flat, dtype=np.int64)
        return np.stack([flat // self.width, flat % self.width], axis=1)

    def layer(self, name: str) -> np.ndarray:
        """Covariate layer ``name`` reshaped to ``(height, width)``."""
        return self.covariates[:, self.names.index(name)].reshape(self.height, self.width)


def cell_centers(locations: np.ndarray) -> np.ndarray:
    return np.asarray(locations, dtype=np.float64) + 0.5


@dataclass(frozen=True, eq=False)
class SampleSet:
    """N labelled grid cells. ``locations`` is an ``(N, 2)`` array of (row, col)."""

    locations: np.ndarray
    features: np.ndarray
    target: np.ndarray
    names: tuple[str, ...] = field(default=())

    def __post_init__(self):
        locs = np.asarray(self.locations, dtype=np.int64).reshape(-1, 2)
        feats = np.asarray(self.features, dtype=np.float64)
        if feats.ndim == 1:
            feats = feats.reshape(len(locs), -1)
        tgt = np.asarray(self.target, dtype=np.float64).reshape(-1)
        if not (len(locs) == len(feats) == len(tgt)):
            raise ValueError("locations, features and target lengths differ")
        object.__setattr__(self, "locations", _frozen(locs, np.int64))
        object.__setattr__(self, "features", _frozen(feats, np.float64))
        object.__setattr__(self, "target", _frozen(tgt, np.float64))
        object.__setattr__(self, "names", tuple(self.names))

    def __len__(self):
        return len(self.target)

    @property
    def coords(self) -> np.ndarray:
        return cell_centers(self.locations)

    def subset(self, idx) -> "SampleSet":
        idx = np.asarray(idx, dtype=np.int64)
        return type(self)(self.locations[idx], self.features[idx], self.target[idx], self.names)


@dataclass(frozen=True, eq=False)
class PredictionSet(SampleSet):
    """M grid cells where predictions are required.

    ``target`` holds the held-out truth; only the experiment harness reads it.
    """

    @property
    def target_truth(self) -> np.ndarray:
        return self.target


def _as_locations(locs) -> np.ndarray:
    arr = np.asarray(locs, dtype=np.int64)
    if arr.size == 0:
        return arr.reshape(0, 2)
    return arr.reshape(-1, 2)


def extract_samples(grid: Grid, locs: Sequence[Location] | np.ndarray) -> SampleSet:
    """Pull covariate rows and targets for ``locs`` in the order given."""
    arr = _as_locations(locs)
    rows, cols = arr[:, 0], arr[:, 1]
    inside = (rows >= 0) & (rows < grid.height) & (cols >= 0) & (cols < grid.width)
    if not inside.all():
        i = int(np.flatnonzero(~inside)[0])
        raise LocationError(f"location {i} {tuple(arr[i])} outside {grid.height}x{grid.width} grid", i)
    flat = grid.flat_index(rows, cols)
    valid = grid.valid_mask[flat]
    if not valid.all():
        i = int(np.flatnonzero(~valid)[0])
        raise LocationError(f"location {i} {tuple(arr[i])} is masked (no data)", i)
    _, first = np.unique(flat, return_index=True)
    if len(first) != len(flat):
        dup = np.setdiff1d(np.arange(len(flat)), first)[0]
        raise LocationError(f"location {dup} {tuple(arr[dup])} is duplicated", int(dup))
    return SampleSet(arr, grid.covariates[flat], grid.target[flat], grid.names)


def complement_predictions(grid: Grid, samples: SampleSet) -> PredictionSet:
    """All valid cells not in ``samples``, in row-major order."""
    flat = grid.flat_index(samples.locations[:, 0], samples.locations[:, 1])
    keep = grid.valid_mask.copy()
    keep[flat] = False
    idx = np.flatnonzero(keep)
    if len(idx) == 0:
        raise EmptyPredictionError("samples cover every valid cell; no prediction locations remain")
    return PredictionSet(grid.locations_of(idx), grid.covariates[idx], grid.target[idx], grid.names)


def load_grid_csv(path, width: int | None = None, height: int | None = None) -> Grid:
    """Read a grid from ``row,col,<covariates...>,target`` CSV.

    Dimensions come from the arguments, else from an optional first line
    ``# width=W height=H``, else from the largest row/col seen.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    lineno = 0
    if lines and lines[0].lstrip().startswith("#"):
        m = _DIMS_RE.match(lines[0].strip())
        if m:
            width = width if width is not None else int(m.group(1))
            height = height if height is not None else int(m.group(2))
        lineno = 1
    reader = csv.reader(lines[lineno:])
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise GridParseError("missing header row", lineno + 1) from None
    lineno += 1
    if len(header) < 4 or header[:2] != ["row", "col"] or header[-1] != "target":
        raise GridParseError("header must be row,col,<covariate...>,target", lineno)
    names = header[2:-1]
    if len(set(names)) != len(names):
        raise GridParseError(f"duplicate covariate names in header: {names}", lineno)

    ncol = len(header)
    cells: dict[tuple[int, int], list[float]] = {}
    for rec in reader:
        lineno += 1
        if not rec or (len(rec) == 1 and not rec[0].strip()):
            continue
        if len(rec) != ncol:
            raise GridParseError(f"expected {ncol} fields, got {len(rec)}", lineno)
        try:
            r, c = int(rec[0]), int(rec[1])
        except ValueError:
            raise GridParseError(f"row/col must be integers: {rec[0]!r},{rec[1]!r}", lineno) from None
        if r < 0 or c < 0:
            raise GridParseError(f"negative cell index ({r},{c})", lineno)
        vals = []
        for name, tok in zip(header[2:], rec[2:]):
            try:
                v = float(tok)
            except ValueError:
                raise GridValueError(f"column {name!r}: not a number: {tok!r}", lineno) from None
            if not math.isfinite(v):
                raise GridValueError(f"column {name!r}: non-finite value {tok!r}", lineno)
            vals.append(v)
        if (r, c) in cells:
            raise DuplicateCellError(f"duplicate cell ({r},{c})", lineno)
        cells[(r, c)] = vals

    if not cells:
        raise GridParseError("no data rows", lineno)
    rc = np.array(list(cells.keys()), dtype=np.int64)
    height = int(rc[:, 0].max()) + 1 if height is None else int(height)
    width = int(rc[:, 1].max()) + 1 if width is None else int(width)
    if rc[:, 0].max() >= height or rc[:, 1].max() >= width:
        raise GridParseError(f"cell index outside declared {height}x{width} grid")

    data = np.array(list(cells.values()), dtype=np.float64)
    n = width * height
    flat = rc[:, 0] * width + rc[:, 1]
    cov = np.full((n, len(names)), np.nan)
    tgt = np.full(n, np.nan)
    mask = np.zeros(n, dtype=bool)
    cov[flat] = data[:, :-1]
    tgt[flat] = data[:, -1]
    mask[flat] = True
    return Grid(width, height, tuple(names), cov, tgt, mask)


def write_grid_csv(grid: Grid, path) -> None:
    """Write ``grid`` in the format read by :func:`load_grid_csv`.

    Floats use ``repr`` so finite values round-trip bit-for-bit.
    """
    path = Path(path)
    idx = grid.valid_flat_indices()
    with path.open("w", newline="", encoding="utf-8") as fh:
        fh.write(f"# width={grid.width} height={grid.height}\n")
        fh.write(",".join(["row", "col", *grid.names, "target"]) + "\n")
        cov = grid.covariates
        tgt = grid.target
        for i in idx:
            r, c = divmod(int(i), grid.width)
            vals = ",".join(repr(float(v)) for v in cov[i])
            fh.write(f"{r},{c},{vals},{float(tgt[i])!r}\n")
