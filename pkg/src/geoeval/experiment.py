"""Prediction-task sweep: dissimilarity versus cross-validation error.

For each number of selected subregions and each repetition a sample set is
drawn from randomly chosen k-means subregions of the grid. Every task yields
its dissimilarity, the actual map error on all remaining cells, and the CV
estimate of that error from the random, block and spatial+ splitters.
"""

from __future__ import annotations

import csv
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from ._seeding import derive_seed, rng_for
from .clustering import kmeans
from .cv_methods import run_cv, split_block, split_random, split_spatial_plus
from .dav import DavConfig, quantify_dissimilarity
from .exceptions import GeoEvalError, InsufficientDataError
from .forest import ForestConfig, predict, train_regressor
from .grid_data import Grid, PredictionSet, SampleSet, cell_centers, complement_predictions, extract_samples
from .metrics import CV_METHODS, BinnedRecord, bin_abs_diff, rmse, rmse_diff
from .synth import SynthConfig
from .variogram import block_side, empirical_semivariogram, fit_variogram

log = logging.getLogger(__name__)

DESK_SUBREGION_COUNTS = (1, 2, 3, 5, 8, 12, 20, 35, 60, 100)

RESULTS_HEADER = ["task_id", "n_selected", "repetition", "d_percent", "rmse_actual",
                  "rmse_cv_rdm", "rmse_cv_blk", "rmse_cv_sp",
                  "rmse_diff_rdm", "rmse_diff_blk", "rmse_diff_sp"]
BINNED_HEADER = ["bin_low", "bin_high", "count", "mean_abs_diff_rdm", "mean_abs_diff_blk", "mean_abs_diff_sp"]

# derived-seed stream ids within a task
_DAV, _ACTUAL, _SPLIT, _CV = 1, 2, 3, 4


@dataclass(frozen=True)
class ExperimentConfig:
    grid_path: Optional[str] = None  # None -> synthesise from ``synth``
    synth: SynthConfig = field(default_factory=SynthConfig)
    n_subregions: int = 100
    n_samples: int = 300
    subregion_counts: tuple = DESK_SUBREGION_COUNTS
    repetitions: int = 5
    k_folds: int = 5
    forest: ForestConfig = field(default_factory=lambda: ForestConfig(n_trees=100))
    dav: DavConfig = field(default_factory=lambda: DavConfig(forest=ForestConfig(n_trees=100)))
    seed: int = 0

    def __post_init__(self):
        if self.n_subregions < 1:
            raise ValueError("n_subregions must be >= 1")
        if not self.subregion_counts:
            raise ValueError("subregion_counts must not be empty")
        bad = [c for c in self.subregion_counts if not 1 <= c <= self.n_subregions]
        if bad:
            raise ValueError(f"subregion_counts {bad} outside [1, {self.n_subregions}]")
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")
        if self.k_folds < 2:
            raise ValueError("k_folds must be >= 2")
        if self.n_samples < self.k_folds:
            raise ValueError("n_samples must be >= k_folds")


@dataclass(frozen=True, eq=False)
class PredictionTask:
    task_id: int
    samples: SampleSet
    predictions: PredictionSet
    n_selected: int
    repetition: int
    seed: int
    selected: tuple = ()


@dataclass(frozen=True)
class EvaluationRecord:
    task_id: int
    n_selected: int
    repetition: int
    d: float
    rmse_actual: float
    rmse_cv: dict
    rmse_diff: dict
    error: Optional[str] = None

    @property
    def ok(self) -> bool:
        return self.error is None


def task_seed(seed: int, n_selected: int, repetition: int) -> int:
    return derive_seed(seed, n_selected, repetition)


def partition_subregions(grid: Grid, n_subregions: int, seed: int) -> np.ndarray:
    """K-means subregion label per cell (``-1`` on masked cells)."""
    flat = grid.valid_flat_indices()
    if len(flat) < n_subregions:
        raise InsufficientDataError(f"{len(flat)} valid cells < {n_subregions} subregions")
    pts = cell_centers(grid.locations_of(flat))
    labels = np.full(grid.width * grid.height, -1, dtype=np.int64)
    labels[flat] = kmeans(pts, n_subregions, seed).labels
    return labels


def allocate_quotas(n_samples: int, capacity, seed: int) -> np.ndarray:
    """Split ``n_samples`` as evenly as possible over subregions with given capacities.

    Base quota ``n // s``; the remainder goes one each to a seeded random
    subset. Quotas above capacity are capped and the overflow is shared among
    the others in proportion to their free capacity (largest remainder).
    """
    cap = np.asarray(capacity, dtype=np.int64)
    s = len(cap)
    if cap.sum() < n_samples:
        raise InsufficientDataError(f"selected subregions hold {int(cap.sum())} cells; "
                                    f"short by {n_samples - int(cap.sum())} for {n_samples} samples")
    q = np.full(s, n_samples // s, dtype=np.int64)
    extra = rng_for(seed).permutation(s)[: n_samples - q.sum()]
    q[extra] += 1
    while (q > cap).any():
        overflow = int((q - cap)[q > cap].sum())
        q = np.minimum(q, cap)
        free = cap - q
        share = overflow * free / free.sum()
        add = np.floor(share).astype(np.int64)
        rem = overflow - add.sum()
        frac_order = np.lexsort((np.arange(s), -(share - add)))
        add[frac_order[:rem]] += 1
        q += add
    return q


def construct_task(grid: Grid, labels: np.ndarray, n_selected: int, n_samples: int, seed: int,
                   task_id: int = 0, repetition: int = 0) -> PredictionTask:
    """Draw ``n_samples`` cells evenly from ``n_selected`` random subregions."""
    n_sub = int(labels.max()) + 1
    if not 1 <= n_selected <= n_sub:
        raise ValueError(f"n_selected={n_selected} outside [1, {n_sub}]")
    rng = rng_for(seed)
    chosen = np.sort(rng.choice(n_sub, size=n_selected, replace=False))
    members = [np.flatnonzero(labels == s) for s in chosen]
    quotas = allocate_quotas(n_samples, [len(m) for m in members], derive_seed(seed, 1))
    picked = [rng.choice(m, size=int(q), replace=False) for m, q in zip(members, quotas)]
    flat = np.concatenate(picked) if picked else np.zeros(0, np.int64)
    samples = extract_samples(grid, grid.locations_of(flat))
    preds = complement_predictions(grid, samples)
    return PredictionTask(task_id, samples, preds, n_selected, repetition, seed, tuple(int(c) for c in chosen))


def actual_rmse(task: PredictionTask, cfg: ForestConfig, n_threads: int | None = 1) -> float:
    """RMSE over all prediction locations of a forest trained on every sample."""
    model = train_regressor(task.samples.features, task.samples.target, cfg, n_threads)
    return rmse(task.predictions.target_truth, predict(model, task.predictions.features))


def task_block_side(samples: SampleSet, grid: Grid) -> float:
    fit = fit_variogram(empirical_semivariogram(samples))
    return block_side(fit, grid.width, grid.height)


def task_folds(task: PredictionTask, grid: Grid, k: int):
    seed = derive_seed(task.seed, _SPLIT)
    s = task.samples
    return {
        "rdm": split_random(len(s), k, derive_seed(seed, 0)),
        "blk": split_block(s, task_block_side(s, grid), k, derive_seed(seed, 1)),
        "sp": split_spatial_plus(s, k, derive_seed(seed, 2)),
    }


def evaluate_task(task: PredictionTask, grid: Grid, cfg: ExperimentConfig, n_threads: int | None = 1) -> EvaluationRecord:
    """Dissimilarity, actual error and the three CV estimates for one task."""
    dcfg = DavConfig(cfg.dav.forest, derive_seed(task.seed, _DAV), cfg.dav.repeats)
    d = quantify_dissimilarity(task.samples, task.predictions, dcfg).d
    actual = actual_rmse(task, cfg.forest.with_seed(derive_seed(task.seed, _ACTUAL)), n_threads)
    folds = task_folds(task, grid, cfg.k_folds)
    fcfg = cfg.forest.with_seed(derive_seed(task.seed, _CV))
    cv = {m: run_cv(task.samples, folds[m], fcfg, n_threads).rmse_cv for m in CV_METHODS}
    diff = {m: rmse_diff(actual, cv[m]) for m in CV_METHODS}
    return EvaluationRecord(task.task_id, task.n_selected, task.repetition, d, actual, cv, diff)


def load_experiment_grid(cfg: ExperimentConfig) -> Grid:
    from .grid_data import load_grid_csv
    from .synth import synthesize_dataset

    return load_grid_csv(cfg.grid_path) if cfg.grid_path else synthesize_dataset(cfg.synth)


def task_plan(cfg: ExperimentConfig) -> list[tuple[int, int, int]]:
    """``(task_id, n_selected, repetition)`` for every task of the sweep."""
    plan = []
    for i, n_sel in enumerate(cfg.subregion_counts):
        for r in range(cfg.repetitions):
            plan.append((i * cfg.repetitions + r, int(n_sel), r))
    return plan


def _fmt(v: float) -> str:
    return repr(float(v))


def write_results_csv(records, path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RESULTS_HEADER)
        for r in sorted(records, key=lambda r: r.task_id):
            if not r.ok:
                continue
            w.writerow([r.task_id, r.n_selected, r.repetition, _fmt(r.d), _fmt(r.rmse_actual)]
                       + [_fmt(r.rmse_cv[m]) for m in CV_METHODS]
                       + [_fmt(r.rmse_diff[m]) for m in CV_METHODS])


def read_results_csv(path) -> list[EvaluationRecord]:
    out = []
    with Path(path).open(newline="") as fh:
        for row in csv.DictReader(fh):
            out.append(EvaluationRecord(
                int(row["task_id"]), int(row["n_selected"]), int(row["repetition"]),
                float(row["d_percent"]), float(row["rmse_actual"]),
                {m: float(row[f"rmse_cv_{m}"]) for m in CV_METHODS},
                {m: float(row[f"rmse_diff_{m}"]) for m in CV_METHODS}))
    return out


def write_binned_csv(binned: list[BinnedRecord], path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(BINNED_HEADER)
        for b in binned:
            w.writerow([_fmt(b.bin_low), _fmt(b.bin_high), b.count]
                       + [_fmt(b.mean_abs_rmse_diff[m]) for m in CV_METHODS])


def write_errors_csv(records, path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["task_id", "n_selected", "repetition", "error"])
        for r in sorted(records, key=lambda r: r.task_id):
            if not r.ok:
                w.writerow([r.task_id, r.n_selected, r.repetition, r.error])


@dataclass
class ExperimentResult:
    records: list
    binned: list
    outputs: list = field(default_factory=list)

    @property
    def ok_records(self):
        return [r for r in self.records if r.ok]


def run_experiment(cfg: ExperimentConfig, out_dir=None, threads: int = 1, resume: bool = False,
                   grid: Grid | None = None, progress=None) -> ExperimentResult:
    """Run the sweep; optionally write results, binned results and SVG plots to ``out_dir``.

    Tasks run on ``threads`` workers; outputs are sorted by task id so they do
    not depend on scheduling. With ``resume`` the task ids already present in
    ``out_dir/results.csv`` are reused instead of recomputed.
    """
    from .plotting import emit_binned_svg, emit_scatter_svg

    grid = load_experiment_grid(cfg) if grid is None else grid
    labels = partition_subregions(grid, cfg.n_subregions, derive_seed(cfg.seed, 0))
    out = Path(out_dir) if out_dir is not None else None

    done: dict[int, EvaluationRecord] = {}
    if resume and out is not None and (out / "results.csv").exists():
        done = {r.task_id: r for r in read_results_csv(out / "results.csv")}
        log.info("resuming: %d completed tasks found", len(done))

    plan = [t for t in task_plan(cfg) if t[0] not in done]

    def job(item):
        tid, n_sel, rep = item
        seed = task_seed(cfg.seed, n_sel, rep)
        try:
            task = construct_task(grid, labels, n_sel, cfg.n_samples, seed, tid, rep)
            rec = evaluate_task(task, grid, cfg, n_threads=1)
        except (GeoEvalError, ValueError) as err:
            log.warning("task %d (n_selected=%d, rep=%d) failed: %s", tid, n_sel, rep, err)
            rec = EvaluationRecord(tid, n_sel, rep, math.nan, math.nan, {}, {}, error=str(err))
        if progress is not None:
            progress(rec)
        return rec

    if threads > 1 and len(plan) > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            new = list(ex.map(job, plan))
    else:
        new = [job(t) for t in plan]

    records = sorted(list(done.values()) + new, key=lambda r: r.task_id)
    failed = [r for r in records if not r.ok]
    if len(failed) * 2 > len(records):
        raise GeoEvalError(f"{len(failed)} of {len(records)} tasks failed; first error: {failed[0].error}")
    ok = [r for r in records if r.ok]
    binned = bin_abs_diff([(r.d, r.rmse_diff) for r in ok])
    result = ExperimentResult(records, binned)

    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        write_results_csv(records, out / "results.csv")
        write_binned_csv(binned, out / "binned.csv")
        result.outputs += [out / "results.csv", out / "binned.csv"]
        if failed:
            write_errors_csv(records, out / "errors.csv")
            result.outputs.append(out / "errors.csv")
        elif (out / "errors.csv").exists():
            (out / "errors.csv").unlink()  # left over from an earlier, resumed run
        if ok:
            emit_scatter_svg(ok, "rmse_diff", out / "scatter_rmse_diff.svg")
            emit_scatter_svg(ok, "rmse", out / "scatter_rmse.svg")
            emit_binned_svg(binned, out / "binned_abs_diff.svg")
            result.outputs += [out / "scatter_rmse_diff.svg", out / "scatter_rmse.svg",
                               out / "binned_abs_diff.svg"]
    return result
