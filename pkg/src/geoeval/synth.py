"""Desk-scale synthetic raster: autocorrelated covariates and a partially informative target.

Layer order in the produced grid: informative Gaussian fields ``x1..xI``, the
regional covariate ``region``, then the uninformative fields ``n1..nJ``.
The target is

    x1 + 0.5 * x2**2 + sin(pi * x3) + 0.5 * region + noise

(terms beyond the available informative layers are dropped).
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from typing import NamedTuple

import numpy as np
from scipy.ndimage import gaussian_filter

from ._seeding import derive_seed, rng_for
from .clustering import kmeans
from .grid_data import Grid

_GRF_STREAM, _REGION_STREAM, _NOISE_STREAM, _HOLE_STREAM = 11, 12, 13, 14


@dataclass(frozen=True)
class SynthConfig:
    width: int = 200
    height: int = 200
    # informative fields first, then noise fields
    corr_lengths: tuple = (40.0, 30.0, 24.0, 6.0, 5.0, 4.0, 3.0)
    n_informative: int = 3
    n_noise_covariates: int = 4
    n_regions: int = 6
    region_corr_length: float = 30.0
    noise_sd: float = 0.3
    n_holes: int = 2
    seed: int = 0

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError("width and height must be >= 1")
        if self.n_informative < 1:
            raise ValueError("n_informative must be >= 1")
        if self.n_noise_covariates < 0:
            raise ValueError("n_noise_covariates must be >= 0")
        if len(self.corr_lengths) != self.n_informative + self.n_noise_covariates:
            raise ValueError(f"corr_lengths needs {self.n_informative + self.n_noise_covariates} "
                             f"entries, got {len(self.corr_lengths)}")
        if any(c <= 0 for c in self.corr_lengths):
            raise ValueError("corr_lengths must be positive")
        if self.n_regions < 2:
            raise ValueError("n_regions must be >= 2")
        if self.noise_sd < 0:
            raise ValueError("noise_sd must be >= 0")
        if self.n_holes < 0:
            raise ValueError("n_holes must be >= 0")

    @classmethod
    def field_names(cls) -> list[str]:
        return [f.name for f in fields(cls)]


def _standardize(a):
    sd = a.std()
    return (a - a.mean()) / (sd if sd > 0 else 1.0)


def generate_grf(width: int, height: int, corr_length: float, seed: int) -> np.ndarray:
    """Stationary Gaussian field of shape ``(height, width)``, mean 0 and variance 1.

    White noise smoothed by a Gaussian kernel of standard deviation
    ``corr_length / 2`` with reflective boundaries, then standardised.
    """
    noise = rng_for(seed).standard_normal((height, width))
    return _standardize(gaussian_filter(noise, sigma=corr_length / 2.0, mode="reflect"))


class RegionalLayer(NamedTuple):
    labels: np.ndarray  # (height, width) ints in [0, n_regions)
    values: np.ndarray  # (height, width) region mean of the latent channel, standardised


def generate_regional(width: int, height: int, n_regions: int, seed: int,
                      corr_length: float = 30.0, noise_weight: float = 1.0) -> RegionalLayer:
    """Contiguous-tending categorical regions from k-means on coordinates plus smooth noise.

    ``noise_weight = 0`` clusters on coordinates alone. Each region is encoded
    numerically by the mean of the first noise channel over its cells.
    """
    if n_regions < 2:
        raise ValueError("n_regions must be >= 2")
    rr, cc = np.mgrid[0:height, 0:width]
    scale = max(width, height)
    latent = [generate_grf(width, height, corr_length, derive_seed(seed, c)) for c in (0, 1)]
    feats = np.column_stack([
        (rr.ravel() + 0.5) / scale, (cc.ravel() + 0.5) / scale,
        noise_weight * 0.25 * latent[0].ravel(), noise_weight * 0.25 * latent[1].ravel(),
    ])
    lab = kmeans(feats, n_regions, derive_seed(seed, 2)).labels
    means = np.bincount(lab, weights=latent[0].ravel(), minlength=n_regions) / np.bincount(lab, minlength=n_regions)
    sd = means[lab].std()
    vals = (means[lab] - means[lab].mean()) / (sd if sd > 0 else 1.0)
    return RegionalLayer(lab.reshape(height, width), vals.reshape(height, width))


def target_function(informative: list[np.ndarray], regional: np.ndarray) -> np.ndarray:
    terms = [lambda x: x, lambda x: 0.5 * x ** 2, lambda x: np.sin(np.pi * x)]
    f = 0.5 * regional
    for fn, x in zip(terms, informative):
        f = f + fn(x)
    return f


def _holes(width, height, n_holes, seed):
    mask = np.ones((height, width), dtype=bool)
    rng = rng_for(seed)
    rr, cc = np.mgrid[0:height, 0:width] + 0.5
    for _ in range(n_holes):
        r0 = rng.uniform(0.1, 0.9) * height
        c0 = rng.uniform(0.1, 0.9) * width
        a = rng.uniform(0.03, 0.08) * width
        b = rng.uniform(0.03, 0.08) * height
        mask &= ((cc - c0) / a) ** 2 + ((rr - r0) / b) ** 2 > 1.0
    return mask


def synthesize_dataset(cfg: SynthConfig = SynthConfig()) -> Grid:
    """Build the synthetic grid described by ``cfg`` (a pure function of it)."""
    w, h = cfg.width, cfg.height
    layers = [generate_grf(w, h, cl, derive_seed(cfg.seed, _GRF_STREAM, i))
              for i, cl in enumerate(cfg.corr_lengths)]
    informative = layers[:cfg.n_informative]
    noise_layers = layers[cfg.n_informative:]
    region = generate_regional(w, h, cfg.n_regions, derive_seed(cfg.seed, _REGION_STREAM),
                               cfg.region_corr_length)
    target = target_function(informative, region.values)
    if cfg.noise_sd > 0:
        target = target + cfg.noise_sd * rng_for(cfg.seed, _NOISE_STREAM).standard_normal((h, w))

    names = ([f"x{i + 1}" for i in range(cfg.n_informative)] + ["region"]
             + [f"n{j + 1}" for j in range(cfg.n_noise_covariates)])
    cov = np.column_stack([a.ravel() for a in informative] + [region.values.ravel()]
                          + [a.ravel() for a in noise_layers])
    mask = _holes(w, h, cfg.n_holes, derive_seed(cfg.seed, _HOLE_STREAM)).ravel()
    cov[~mask] = np.nan
    tgt = target.ravel().copy()
    tgt[~mask] = np.nan
    return Grid(w, h, tuple(names), cov, tgt, mask)
