"""Dissimilarity quantification by adversarial validation (DAV).

Samples are labelled 1 and an equally sized random subset of prediction
locations is labelled 0. A random forest is trained on one random half of the
combined rows and scored by ROC-AUC on the other half. The AUC is mapped to a
dissimilarity percentage: ``0`` for AUC <= 0.5, rising linearly to ``100`` at
AUC = 1.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from ._seeding import derive_seed, rng_for
from .exceptions import InsufficientDataError, RangeError, SchemaError, UndefinedAUCError
from .forest import ForestConfig, predict_proba, train_classifier
from .grid_data import PredictionSet, SampleSet
from .metrics import roc_auc

log = logging.getLogger(__name__)

MAX_ATTEMPTS = 10

# stream ids for derived seeds
_SUBSAMPLE, _SHUFFLE, _FOREST = 1, 2, 3


@dataclass(frozen=True)
class DavConfig:
    forest: ForestConfig = field(default_factory=ForestConfig)
    seed: int = 0
    repeats: int = 1

    def __post_init__(self):
        if self.repeats < 1:
            raise ValueError("repeats must be >= 1")


@dataclass(frozen=True, eq=False)
class AVDataset:
    features: np.ndarray
    labels: np.ndarray
    origin: np.ndarray  # row index into the source set (samples for label 1, predictions for label 0)
    names: tuple = ()

    def __len__(self):
        return len(self.labels)

    def take(self, idx) -> "AVDataset":
        return AVDataset(self.features[idx], self.labels[idx], self.origin[idx], self.names)


@dataclass(frozen=True)
class DissimilarityScore:
    auc: float
    d: float
    per_repeat: tuple = ()  # ((auc, d), ...) when repeats > 1
    fallback: bool = False  # fewer prediction locations than samples


def normalize_auc(auc: float) -> float:
    """Map an AUC in [0, 1] to a dissimilarity percentage in [0, 100]."""
    auc = float(auc)
    if not (0.0 <= auc <= 1.0):
        raise RangeError(f"AUC {auc} outside [0, 1]")
    if auc <= 0.5:
        return 0.0
    # rounding to 1e-12 points removes binary representation error of decimal
    # inputs, so 0.8 maps to exactly 60.0 rather than 60.00000000000001
    return round((auc - 0.5) / (1.0 - 0.5) * 100.0, 12)


def subsample_predictions(preds: PredictionSet, n: int, seed: int) -> PredictionSet:
    """Uniform random subset of ``n`` prediction locations, without replacement."""
    m = len(preds)
    if n < 0 or n > m:
        raise ValueError(f"cannot draw {n} of {m} prediction locations")
    if n == m:
        return preds
    idx = np.sort(rng_for(seed).choice(m, size=n, replace=False))
    return preds.subset(idx)


def build_av_dataset(samples: SampleSet, pred_subset: SampleSet) -> AVDataset:
    """Stack sample rows (label 1) and prediction rows (label 0), covariates only."""
    if samples.names and pred_subset.names and tuple(samples.names) != tuple(pred_subset.names):
        raise SchemaError(f"covariate schema differs: {samples.names} vs {pred_subset.names}")
    if samples.features.shape[1] != pred_subset.features.shape[1]:
        raise SchemaError(f"covariate count differs: {samples.features.shape[1]} vs "
                          f"{pred_subset.features.shape[1]}")
    feats = np.vstack([samples.features, pred_subset.features])
    labels = np.r_[np.ones(len(samples), np.int8), np.zeros(len(pred_subset), np.int8)]
    origin = np.r_[np.arange(len(samples)), np.arange(len(pred_subset))]
    return AVDataset(feats, labels, origin, tuple(samples.names))


def split_av(av: AVDataset, seed: int) -> tuple[AVDataset, AVDataset]:
    """Shuffle, then first half is the training subset and the rest the test subset."""
    n2 = len(av)
    if n2 < 4:
        raise InsufficientDataError(f"AV dataset needs at least 4 rows, got {n2}")
    perm = rng_for(seed).permutation(n2)
    half = n2 // 2
    return av.take(perm[:half]), av.take(perm[half:])


def _one_repeat(samples, preds, cfg: DavConfig, r: int):
    n, m = len(samples), len(preds)
    fallback = m < n
    last_err = None
    for attempt in range(MAX_ATTEMPTS):
        key = (cfg.seed, r, attempt)
        if fallback:
            s_sub = subsample_predictions(samples, m, derive_seed(*key, _SUBSAMPLE))
            p_sub = preds
        else:
            s_sub = samples
            p_sub = subsample_predictions(preds, n, derive_seed(*key, _SUBSAMPLE))
        av = build_av_dataset(s_sub, p_sub)
        train, test = split_av(av, derive_seed(*key, _SHUFFLE))
        fcfg = cfg.forest.with_seed(derive_seed(*key, _FOREST))
        try:
            model = train_classifier(train.features, train.labels, fcfg)
            auc = roc_auc(test.labels, predict_proba(model, test.features))
        except UndefinedAUCError as err:
            last_err = err
            log.debug("repeat %d attempt %d: single-class test half, redrawing", r, attempt)
            continue
        return auc, fallback
    raise UndefinedAUCError(f"repeat {r}: test half single-class in {MAX_ATTEMPTS} attempts") from last_err


def quantify_dissimilarity(samples: SampleSet, preds: PredictionSet,
                           cfg: DavConfig = DavConfig()) -> DissimilarityScore:
    """Run adversarial validation between ``samples`` and ``preds``.

    Only covariates are read; targets of either set are never touched. With
    ``cfg.repeats > 1`` the whole procedure reruns on derived seeds and the
    AUCs are averaged before normalisation.

    If there are fewer prediction locations than samples, all predictions are
    used and the samples are subsampled instead; the score is flagged.
    """
    if len(samples) < 2:
        raise InsufficientDataError(f"need at least 2 samples, got {len(samples)}")
    if samples.features.shape[1] < 1:
        raise InsufficientDataError("need at least one covariate")
    if len(preds) < 2:
        raise InsufficientDataError(f"need at least 2 prediction locations, got {len(preds)}")

    aucs = []
    fallback = False
    for r in range(cfg.repeats):
        auc, fb = _one_repeat(samples, preds, cfg, r)
        aucs.append(auc)
        fallback |= fb
    if fallback:
        log.warning("fewer prediction locations (%d) than samples (%d); samples subsampled",
                    len(preds), len(samples))
    mean_auc = float(np.mean(aucs)) if len(aucs) > 1 else aucs[0]
    per = tuple((a, normalize_auc(a)) for a in aucs) if cfg.repeats > 1 else ()
    return DissimilarityScore(mean_auc, normalize_auc(mean_auc), per, fallback)
