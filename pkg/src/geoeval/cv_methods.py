"""Random, block and spatial+ fold splitters and the k-fold evaluation loop."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ._seeding import derive_seed, rng_for
from .clustering import ahc, canonical_labels, cluster_ensemble, kmeans
from .exceptions import FoldError, InsufficientDataError
from .forest import ForestConfig, predict, train_regressor
from .grid_data import SampleSet
from .metrics import rmse

log = logging.getLogger(__name__)

DEFAULT_K = 5
MAX_BLOCK_HALVINGS = 5


@dataclass(frozen=True, eq=False)
class FoldAssignment:
    fold_of: np.ndarray
    k: int
    method: str
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        fold_of = np.asarray(self.fold_of, dtype=np.int64)
        sizes = np.bincount(fold_of, minlength=self.k)
        if fold_of.min(initial=0) < 0 or len(sizes) != self.k or (sizes == 0).any():
            raise FoldError(f"{self.method}: fold ids must cover 0..{self.k - 1} with no empty fold")
        object.__setattr__(self, "fold_of", fold_of)

    @property
    def sizes(self) -> list[int]:
        return np.bincount(self.fold_of, minlength=self.k).tolist()

    @property
    def block_of(self) -> np.ndarray | None:
        return self.metadata.get("block_of")

    def write_csv(self, path) -> None:
        blocks = self.block_of
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["sample_index", "fold"] + (["block_id"] if blocks is not None else []))
            for i, f in enumerate(self.fold_of):
                w.writerow([i, int(f)] + ([int(blocks[i])] if blocks is not None else []))


@dataclass(frozen=True, eq=False)
class CVResult:
    predicted: np.ndarray
    rmse_cv: float
    per_fold_sizes: list


def _check_nk(n, k):
    if k < 1:
        raise ValueError("k must be >= 1")
    if n < k:
        raise InsufficientDataError(f"cannot split {n} samples into {k} folds")


def split_random(n: int, k: int = DEFAULT_K, seed: int = 0) -> FoldAssignment:
    """Random permutation cut into ``k`` folds whose sizes differ by at most one."""
    _check_nk(n, k)
    perm = rng_for(seed).permutation(n)
    fold_of = np.empty(n, dtype=np.int64)
    for f, part in enumerate(np.array_split(perm, k)):
        fold_of[part] = f
    return FoldAssignment(fold_of, k, "rdm")


def tile_ids(coords, block_side: float) -> np.ndarray:
    """Square tiles of side ``block_side`` anchored at the bounding-box minimum corner."""
    xy = np.asarray(coords, dtype=np.float64)
    cells = np.floor((xy - xy.min(axis=0)) / block_side).astype(np.int64)
    _, inv = np.unique(cells, axis=0, return_inverse=True)
    return inv.reshape(-1)


def split_block(samples: SampleSet, block_side: float, k: int = DEFAULT_K, seed: int = 0) -> FoldAssignment:
    """Group samples into square tiles, then deal shuffled tiles round-robin to folds.

    If fewer than ``k`` tiles are occupied the side is halved, up to five
    times. All samples sharing a tile share a fold.
    """
    n = len(samples)
    _check_nk(n, k)
    if not block_side > 0:
        raise ValueError("block_side must be positive")
    coords = samples.coords
    side = float(block_side)
    for halvings in range(MAX_BLOCK_HALVINGS + 1):
        blocks = tile_ids(coords, side)
        n_blocks = int(blocks.max()) + 1
        if n_blocks >= k:
            break
        if halvings == MAX_BLOCK_HALVINGS:
            raise FoldError(f"only {n_blocks} occupied blocks for k={k} after "
                            f"{MAX_BLOCK_HALVINGS} halvings (side {side})")
        side /= 2.0
    if side != block_side:
        log.debug("block side reduced from %g to %g to occupy %d folds", block_side, side, k)
    order = rng_for(seed).permutation(n_blocks)
    fold_of_block = np.empty(n_blocks, dtype=np.int64)
    fold_of_block[order] = np.arange(n_blocks) % k
    meta = {"block_side": side, "requested_block_side": float(block_side), "block_of": blocks}
    return FoldAssignment(fold_of_block[blocks], k, "blk", meta)


def _zscore(a):
    a = np.asarray(a, dtype=np.float64)
    sd = a.std(axis=0)
    return (a - a.mean(axis=0)) / np.where(sd > 0, sd, 1.0)


def n_sp_blocks(n: int, k: int) -> int:
    return min(10 * k, n)


def split_spatial_plus(samples: SampleSet, k: int = DEFAULT_K, seed: int = 0,
                       n_blocks: int | None = None) -> FoldAssignment:
    """Spatial+ folds: Ward blocks on coordinates, grouped by a cluster ensemble.

    Blocks come from Ward AHC on standardised coordinates. Each block is
    summarised by its centroid, mean covariates and mean target; k-means on
    each of those three views gives three block labelings, and the
    co-association ensemble of the views assigns blocks to folds.
    """
    n = len(samples)
    _check_nk(n, k)
    b = n_sp_blocks(n, k) if n_blocks is None else int(n_blocks)
    coords = samples.coords
    # one common scale keeps the geometry isotropic
    c = coords - coords.mean(axis=0)
    scale = c.std()
    blocks = ahc(c / (scale if scale > 0 else 1.0), b, "ward").labels

    counts = np.bincount(blocks, minlength=b).astype(np.float64)

    def block_mean(a):
        a = a.reshape(len(a), -1)
        out = np.zeros((b, a.shape[1]))
        np.add.at(out, blocks, a)
        return out / counts[:, None]

    cent = block_mean(coords)
    views_data = [
        (cent - cent.mean(axis=0)) / (cent.std() if cent.std() > 0 else 1.0),
        _zscore(block_mean(samples.features)),
        _zscore(block_mean(samples.target)),
    ]
    views = [kmeans(v, k, derive_seed(seed, i)) for i, v in enumerate(views_data)]
    fold_of_block = cluster_ensemble(views, k).labels
    fold_of = canonical_labels(fold_of_block[blocks])[0]
    return FoldAssignment(fold_of, k, "sp", {"block_of": blocks, "n_blocks": b})


def run_cv(samples: SampleSet, fa: FoldAssignment, cfg: ForestConfig = ForestConfig(),
           n_threads: int | None = None) -> CVResult:
    """Out-of-fold prediction of every sample; fold ``f`` is predicted by a
    forest trained on the other folds with seed derived from ``(cfg.seed, f)``."""
    n = len(samples)
    if len(fa.fold_of) != n:
        raise FoldError(f"fold assignment covers {len(fa.fold_of)} samples, expected {n}")
    pred = np.full(n, np.nan)
    X, y = samples.features, samples.target
    for f in range(fa.k):
        test = fa.fold_of == f
        if test.all():
            raise FoldError(f"fold {f} contains every sample; nothing to train on")
        model = train_regressor(X[~test], y[~test], cfg.with_seed(derive_seed(cfg.seed, f)), n_threads)
        pred[test] = predict(model, X[test])
    return CVResult(pred, rmse(y, pred), fa.sizes)


def split(method: str, samples: SampleSet, k: int = DEFAULT_K, seed: int = 0,
          block_side: float | None = None) -> FoldAssignment:
    if method == "rdm":
        return split_random(len(samples), k, seed)
    if method == "blk":
        if block_side is None:
            raise ValueError("block CV needs block_side")
        return split_block(samples, block_side, k, seed)
    if method == "sp":
        return split_spatial_plus(samples, k, seed)
    raise ValueError(f"unknown CV method {method!r}; expected one of rdm, blk, sp")
