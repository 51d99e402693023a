"""Command-line interface: ``geoeval {synth,dav,cv,experiment,plot}``."""

from __future__ import annotations

import argparse
import csv
import dataclasses
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from ._seeding import derive_seed, rng_for
from .config import (
    experiment_config,
    experiment_sections,
    read_sections,
    synth_config,
    synth_sections,
    write_manifest,
)
from .cv_methods import run_cv, split_block, split_random, split_spatial_plus
from .dav import DavConfig, quantify_dissimilarity
from .exceptions import ConfigError, GeoEvalError
from .experiment import construct_task, partition_subregions, read_results_csv, run_experiment, task_block_side
from .forest import ForestConfig
from .grid_data import complement_predictions, extract_samples, load_grid_csv, write_grid_csv
from .plotting import emit_binned_svg, emit_scatter_svg
from .synth import synthesize_dataset

log = logging.getLogger("geoeval")

METHODS = ("rdm", "blk", "sp")


class UsageError(Exception):
    pass


def resolve_threads(arg: int | None) -> int:
    if arg is not None:
        return max(1, arg)
    env = os.environ.get("GEOEVAL_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise UsageError(f"GEOEVAL_THREADS must be an integer, got {env!r}") from None
    return 1


def _sections(path):
    if path is None:
        return {}
    return read_sections(path)


def _require_file(path, what):
    p = Path(path)
    if not p.is_file():
        raise FileNotFoundError(f"{what} not found: {p}")
    return p


# -- samples ------------------------------------------------------------------

def _read_locations(path):
    with _require_file(path, "samples file").open(newline="") as fh:
        rows = list(csv.DictReader(fh))
    if rows and not {"row", "col"} <= set(rows[0]):
        raise UsageError(f"{path}: samples file needs row,col columns")
    return np.array([[int(r["row"]), int(r["col"])] for r in rows], dtype=np.int64).reshape(-1, 2)


def choose_samples(grid, args, seed):
    """Sample set from ``--samples-file``, clustered subregion sampling, or uniform random cells."""
    if args.samples_file:
        return extract_samples(grid, _read_locations(args.samples_file))
    if args.n_selected is not None:
        labels = partition_subregions(grid, args.n_subregions, derive_seed(seed, 0))
        return construct_task(grid, labels, args.n_selected, args.n_samples, derive_seed(seed, 1)).samples
    valid = grid.valid_flat_indices()
    if args.n_samples > len(valid):
        raise UsageError(f"--n-samples {args.n_samples} exceeds {len(valid)} valid cells")
    flat = np.sort(rng_for(seed, 2).choice(valid, size=args.n_samples, replace=False))
    return extract_samples(grid, grid.locations_of(flat))


def _forest_from(sections, args, section="forest"):
    from .config import build_dataclass

    cfg = build_dataclass(ForestConfig, sections.get("forest", {}), "forest")
    if section != "forest":
        cfg = build_dataclass(ForestConfig, sections.get(section, {}), section, cfg)
    if getattr(args, "n_trees", None) is not None:
        cfg = dataclasses.replace(cfg, n_trees=args.n_trees)
    return cfg


# -- commands -----------------------------------------------------------------

def cmd_synth(args) -> int:
    sections = _sections(args.config)
    cfg = synth_config(sections)
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    grid_path = out / "grid.csv"
    write_grid_csv(synthesize_dataset(cfg), grid_path)
    write_manifest(out / "manifest.json", "synth", synth_sections(cfg), {"seed": cfg.seed},
                   outputs=[grid_path])
    print(f"wrote {grid_path} ({cfg.width}x{cfg.height}, "
          f"{cfg.n_informative + 1 + cfg.n_noise_covariates} covariates)")
    return 0


def cmd_dav(args) -> int:
    sections = _sections(args.config)
    grid = load_grid_csv(_require_file(args.grid, "grid file"))
    seed = args.seed if args.seed is not None else 0
    samples = choose_samples(grid, args, seed)
    preds = complement_predictions(grid, samples)
    dav_sec = sections.get("dav", {})
    repeats = args.repeats if args.repeats is not None else int(dav_sec.get("repeats", 1))
    cfg = DavConfig(_forest_from(sections, args, "dav.forest"), derive_seed(seed, 3), repeats)
    score = quantify_dissimilarity(samples, preds, cfg)
    print(f"auc={score.auc:.6f} d={score.d:.4f}%" + (" (fallback: samples subsampled)" if score.fallback else ""))
    if args.per_repeat_csv:
        with Path(args.per_repeat_csv).open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["repeat", "auc", "d_percent"])
            per = score.per_repeat or ((score.auc, score.d),)
            for i, (a, d) in enumerate(per):
                w.writerow([i, repr(float(a)), repr(float(d))])
    return 0


def cmd_cv(args) -> int:
    sections = _sections(args.config)
    grid = load_grid_csv(_require_file(args.grid, "grid file"))
    seed = args.seed if args.seed is not None else 0
    samples = choose_samples(grid, args, seed)
    split_seed = derive_seed(seed, 4)
    if args.method == "rdm":
        fa = split_random(len(samples), args.k, split_seed)
    elif args.method == "blk":
        side = args.block_side if args.block_side is not None else task_block_side(samples, grid)
        fa = split_block(samples, side, args.k, split_seed)
    else:
        fa = split_spatial_plus(samples, args.k, split_seed)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    fold_path = out / f"folds_{args.method}.csv"
    fa.write_csv(fold_path)
    res = run_cv(samples, fa, _forest_from(sections, args).with_seed(derive_seed(seed, 5)),
                 resolve_threads(args.threads))
    print(f"method={args.method} k={fa.k} fold_sizes={','.join(map(str, fa.sizes))} rmse_cv={res.rmse_cv:.6f}")
    return 0


def cmd_experiment(args) -> int:
    sections = _sections(args.config)
    cfg = experiment_config(sections)
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    threads = resolve_threads(args.threads)
    out = Path(args.out_dir)
    if cfg.grid_path:
        _require_file(cfg.grid_path, "grid file")

    def progress(rec):
        state = f"d={rec.d:.1f}%" if rec.ok else f"FAILED: {rec.error}"
        log.info("task %d n_selected=%d rep=%d %s", rec.task_id, rec.n_selected, rec.repetition, state)

    result = run_experiment(cfg, out, threads=threads, resume=args.resume, progress=progress)
    write_manifest(out / "manifest.json", "experiment", experiment_sections(cfg), {"seed": cfg.seed},
                   inputs=[cfg.grid_path] if cfg.grid_path else [], outputs=result.outputs)
    n_ok = len(result.ok_records)
    print(f"{n_ok}/{len(result.records)} tasks ok; {len(result.binned)} bins; outputs in {out}")
    return 0


def cmd_plot(args) -> int:
    from .metrics import bin_abs_diff

    records = read_results_csv(_require_file(args.results, "results file"))
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    emit_scatter_svg(records, "rmse_diff", out / "scatter_rmse_diff.svg")
    emit_scatter_svg(records, "rmse", out / "scatter_rmse.svg")
    emit_binned_svg(bin_abs_diff([(r.d, r.rmse_diff) for r in records]), out / "binned_abs_diff.svg")
    print(f"wrote 3 plots to {out}")
    return 0


# -- parser -------------------------------------------------------------------

def _add_common(p, out_dir=True):
    p.add_argument("--config", help="INI config file or manifest JSON")
    p.add_argument("--seed", type=int, help="override the master seed")
    if out_dir:
        p.add_argument("--out-dir", default=".", help="directory for outputs (default: .)")
    p.add_argument("--threads", type=int, help="worker threads (default: $GEOEVAL_THREADS or 1)")


def _add_samples(p):
    p.add_argument("--grid", required=True, help="grid CSV (row,col,<covariates>,target)")
    g = p.add_argument_group("samples", "choose one: a file of cells, clustered sampling, or uniform random cells")
    g.add_argument("--samples-file", help="CSV with row,col columns")
    g.add_argument("--n-samples", type=int, default=300, help="number of samples (default 300)")
    g.add_argument("--n-selected", type=int, help="sample only from this many random k-means subregions")
    g.add_argument("--n-subregions", type=int, default=100, help="subregion count for --n-selected (default 100)")
    p.add_argument("--n-trees", type=int, help="override forest size")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="geoeval", description=__doc__)
    ap.add_argument("--version", action="version", version=f"geoeval {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write a synthetic grid CSV")
    _add_common(p)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("dav", help="dissimilarity between samples and the remaining cells")
    _add_common(p, out_dir=False)
    _add_samples(p)
    p.add_argument("--repeats", type=int, help="DAV repeats (AUCs averaged)")
    p.add_argument("--per-repeat-csv", help="write per-repeat AUC and d here")
    p.set_defaults(func=cmd_dav)

    p = sub.add_parser("cv", help="fold assignment and RMSE_CV for one method")
    _add_common(p)
    _add_samples(p)
    p.add_argument("--method", required=True, choices=METHODS)
    p.add_argument("--k", type=int, default=5, help="number of folds (default 5)")
    p.add_argument("--block-side", type=float, help="block side for blk (default: variogram range)")
    p.set_defaults(func=cmd_cv)

    p = sub.add_parser("experiment", help="run the dissimilarity / CV sweep")
    _add_common(p)
    p.add_argument("--resume", action="store_true", help="reuse task ids already in results.csv")
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("plot", help="redraw SVG plots from a results CSV")
    p.add_argument("--results", required=True)
    p.add_argument("--out-dir", default=".")
    p.set_defaults(func=cmd_plot)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    level = logging.INFO if args.verbose else logging.WARNING
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    log.setLevel(level)
    try:
        return args.func(args)
    except (UsageError, ConfigError) as err:
        ap.error(str(err))
    except FileNotFoundError as err:
        print(f"geoeval: error: {err}", file=sys.stderr)
        return 1
    except (GeoEvalError, ValueError, OSError) as err:
        print(f"geoeval: error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
