"""Empirical semivariogram and least-squares variogram model fitting.

The fitted model's effective range sets the block side for block CV.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize_scalar

from .exceptions import InsufficientDataError

FAMILIES = ("exponential", "spherical")


@dataclass(frozen=True)
class EmpiricalVariogram:
    lag_centers: np.ndarray
    semivariances: np.ndarray
    pair_counts: np.ndarray


@dataclass(frozen=True)
class VariogramFit:
    family: str
    nugget: float
    partial_sill: float
    range_param: float
    effective_range: float
    residual: float
    flat: bool = False

    def __call__(self, h):
        return model_curve(self.family, h, self.nugget, self.partial_sill, self.range_param)


def model_curve(family: str, h, nugget: float, partial_sill: float, range_param: float) -> np.ndarray:
    h = np.asarray(h, dtype=np.float64)
    return nugget + partial_sill * _unit_curve(family, h, range_param)


def _unit_curve(family, h, a):
    if family == "exponential":
        return 1.0 - np.exp(-h / a)
    if family == "spherical":
        r = np.minimum(h / a, 1.0)
        return 1.5 * r - 0.5 * r ** 3
    raise ValueError(f"unknown variogram family {family!r}; expected one of {FAMILIES}")


def effective_range(family: str, range_param: float) -> float:
    """Distance where the model reaches (about 95% of) its sill."""
    return 3.0 * range_param if family == "exponential" else range_param


def empirical_semivariogram(coords, values=None, n_lags: int = 15,
                            max_dist: float | None = None) -> EmpiricalVariogram:
    """Matheron estimator ``gamma(h) = sum (z_i - z_j)^2 / (2 |N(h)|)``.

    ``coords`` is ``(N, 2)``, or a :class:`SampleSet` whose cell centres and
    target are used when ``values`` is omitted. Pairs are binned in ``n_lags`` equal-width bins
    on ``(0, max_dist]``. Empty bins are dropped. ``max_dist`` defaults to half
    the diagonal of the coordinates' bounding box.
    """
    if values is None:
        coords, values = coords.coords, coords.target
    xy = np.asarray(coords, dtype=np.float64)
    z = np.asarray(values, dtype=np.float64).reshape(-1)
    if xy.shape != (len(z), 2):
        raise ValueError(f"coords shape {xy.shape} does not match {len(z)} values")
    if max_dist is None:
        ext = xy.max(axis=0) - xy.min(axis=0) if len(xy) else np.zeros(2)
        max_dist = 0.5 * float(np.hypot(*ext))
    if max_dist <= 0:
        raise InsufficientDataError("max_dist must be positive (all points co-located?)")
    if n_lags < 1:
        raise ValueError("n_lags must be >= 1")

    iu, ju = np.triu_indices(len(z), k=1)
    dist = np.hypot(xy[iu, 0] - xy[ju, 0], xy[iu, 1] - xy[ju, 1])
    sq = (z[iu] - z[ju]) ** 2
    keep = (dist > 0) & (dist <= max_dist)
    dist, sq = dist[keep], sq[keep]
    width = max_dist / n_lags
    b = np.minimum(np.ceil(dist / width).astype(np.int64) - 1, n_lags - 1)
    b = np.maximum(b, 0)
    counts = np.bincount(b, minlength=n_lags)
    sums = np.bincount(b, weights=sq, minlength=n_lags)
    dsum = np.bincount(b, weights=dist, minlength=n_lags)
    nz = counts > 0
    if not nz.any():
        raise InsufficientDataError("no point pairs within max_dist")
    # lag position is the mean pair distance of the bin
    return EmpiricalVariogram(dsum[nz] / counts[nz], sums[nz] / (2.0 * counts[nz]), counts[nz])


def _profile(family, h, g, w, a):
    """Weighted NNLS for (nugget, partial_sill) at fixed range ``a``."""
    u = _unit_curve(family, h, a)
    sw = np.sqrt(w)
    A = np.stack([np.ones_like(u), u], axis=1) * sw[:, None]
    bvec = g * sw
    best = None
    # 2-variable NNLS: unconstrained solution or one of the boundary solutions
    cands = []
    try:
        sol, *_ = np.linalg.lstsq(A, bvec, rcond=None)
        if sol[0] >= 0 and sol[1] >= 0:
            cands.append(sol)
    except np.linalg.LinAlgError:
        pass
    cands.append(np.array([max(0.0, float(A[:, 0] @ bvec / (A[:, 0] @ A[:, 0]))), 0.0]))
    uu = A[:, 1] @ A[:, 1]
    if uu > 0:
        cands.append(np.array([0.0, max(0.0, float(A[:, 1] @ bvec / uu))]))
    for c in cands:
        res = float(np.sum((A @ c - bvec) ** 2))
        if best is None or res < best[0]:
            best = (res, float(c[0]), float(c[1]))
    return best


def _range_grid(family, h, n_grid):
    # exponential reaches its sill at 3a; span a from well below the first lag to beyond the last
    hi = float(h.max()) * (2.0 if family == "exponential" else 4.0)
    return np.geomspace(float(h.min()) / 10.0, hi, n_grid)


def fit_variogram(emp: EmpiricalVariogram, family: str = "exponential", n_grid: int = 60) -> VariogramFit:
    """Pair-count weighted least-squares fit of nugget, partial sill and range.

    The range parameter is searched on a log-spaced grid (nugget and partial
    sill are solved exactly by non-negative least squares at each range), then
    refined by a bounded scalar search between the neighbours of the best grid
    point. The refinement is only kept if it lowers the residual.
    """
    if family not in FAMILIES:
        raise ValueError(f"unknown variogram family {family!r}; expected one of {FAMILIES}")
    h = np.asarray(emp.lag_centers, dtype=np.float64)
    g = np.asarray(emp.semivariances, dtype=np.float64)
    w = np.asarray(emp.pair_counts, dtype=np.float64)
    keep = w > 0
    h, g, w = h[keep], g[keep], w[keep]
    if len(h) < 3:
        raise InsufficientDataError(f"need at least 3 non-empty lags, got {len(h)}")
    if np.all(g == 0):
        return VariogramFit(family, 0.0, 0.0, 1.0, 1.0, 0.0, flat=True)

    hmin = float(h.min())
    grid = _range_grid(family, h, n_grid)
    prof = [_profile(family, h, g, w, a) for a in grid]
    res = np.array([p[0] for p in prof])
    k = int(np.argmin(res))
    best_res, nug, psill = prof[k]
    best_a = float(grid[k])

    a_lo = float(grid[max(k - 1, 0)])
    a_hi = float(grid[min(k + 1, n_grid - 1)])
    if a_hi > a_lo:
        opt = minimize_scalar(lambda a: _profile(family, h, g, w, a)[0], bounds=(a_lo, a_hi),
                              method="bounded", options={"xatol": 1e-10 * a_hi})
        r2, n2, p2 = _profile(family, h, g, w, float(opt.x))
        if r2 < best_res:
            best_res, nug, psill, best_a = r2, n2, p2, float(opt.x)

    eff = effective_range(family, best_a)
    total = nug + psill
    # structure shorter than the first lag, or negligible, is indistinguishable from pure nugget
    flat = psill <= 1e-9 * max(total, 1e-300) or eff < hmin
    if flat:
        c = float(np.sum(w * g) / np.sum(w))
        return VariogramFit(family, c, 0.0, best_a, 1.0, float(np.sum(w * (g - c) ** 2)), flat=True)
    return VariogramFit(family, float(nug), float(psill), best_a, float(eff), float(best_res))


def grid_search_residuals(emp: EmpiricalVariogram, family: str, n_grid: int = 60) -> np.ndarray:
    """Residuals of the profiled fit at each point of the range search grid."""
    h, g, w = emp.lag_centers, emp.semivariances, emp.pair_counts.astype(np.float64)
    grid = _range_grid(family, h, n_grid)
    return np.array([_profile(family, h, g, w, a)[0] for a in grid])


def block_side(fit: VariogramFit, grid_width: int, grid_height: int) -> float:
    """Effective range clamped to ``[2, min(width, height) / 2]`` cells."""
    hi = max(2.0, min(grid_width, grid_height) / 2.0)
    return float(np.clip(fit.effective_range, 2.0, hi))
