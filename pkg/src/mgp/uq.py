"""Credible sets and evaluation metrics: joint empirical-cutoff ellipsoids
with diagonal scale, marginal quantile intervals, frequentist coverage, the
covariance-trace size proxy, and Winkler interval scores."""

import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import chi2


class UQError(ValueError):
    pass


@dataclass(frozen=True)
class CredibleEllipsoid:
    center: np.ndarray
    scale2: np.ndarray   # per-coordinate variance (diagonal covariance)
    r2: float            # squared Mahalanobis radius
    level: float         # 1 - alpha

    def __post_init__(self):
        if self.r2 < 0:
            raise UQError("squared radius must be >= 0")
        if np.any(self.scale2 <= 0):
            raise UQError("ellipsoid scale must be positive")


@dataclass(frozen=True)
class MarginalInterval:
    lower: float
    upper: float
    level: float

    def __post_init__(self):
        if self.lower > self.upper:
            raise UQError("interval endpoints out of order")


def _draw_matrix(draws):
    """Accept a PosteriorDraws (converged rows only) or a plain array."""
    if hasattr(draws, "ok_draws"):
        mat = draws.ok_draws
    else:
        mat = np.asarray(draws, dtype=float)
    if mat.ndim == 1:
        mat = mat[:, None]
    return mat


def joint_credible_set(draws, alpha, cutoff="empirical") -> CredibleEllipsoid:
    """Ellipsoid centered at the draw mean with diagonal scale.

    cutoff="empirical": squared radius is the inclusive order-statistic
    (1-alpha) quantile (index ceil((1-alpha) L)) of the draws' own
    Mahalanobis distances, so exactly that many draws fall inside-or-on the
    boundary. cutoff="chi2" uses the chi-square quantile instead (normal
    approximation of the posterior).
    """
    mat = _draw_matrix(draws)
    L, p = mat.shape
    if L < 2:
        raise UQError("need at least two converged draws")
    mu = mat.mean(axis=0)
    s2 = mat.var(axis=0, ddof=1)
    for j in range(p):
        if s2[j] <= 0:
            raise UQError(f"zero-variance coordinate {j}")
    if cutoff == "empirical":
        d2 = np.sum((mat - mu) ** 2 / s2, axis=1)
        k = int(math.ceil((1.0 - alpha) * L))
        k = min(max(k, 1), L)
        r2 = float(np.sort(d2)[k - 1])
    elif cutoff == "chi2":
        r2 = float(chi2.ppf(1.0 - alpha, df=p))
    else:
        raise UQError(f"unknown cutoff {cutoff!r}")
    return CredibleEllipsoid(center=mu, scale2=s2, r2=r2, level=1.0 - alpha)


def contains(ellipsoid: CredibleEllipsoid, theta0) -> bool:
    """Boundary-inclusive membership of theta0."""
    theta0 = np.asarray(theta0, dtype=float)
    if theta0.shape != ellipsoid.center.shape:
        raise UQError(
            f"dimension mismatch: {theta0.shape} vs {ellipsoid.center.shape}")
    d2 = float(np.sum((theta0 - ellipsoid.center) ** 2 / ellipsoid.scale2))
    return d2 <= ellipsoid.r2


def marginal_interval(draws, coordinate, alpha) -> MarginalInterval:
    """Equal-tail interval from empirical quantiles (linear interpolation
    between order statistics)."""
    mat = _draw_matrix(draws)
    if mat.shape[0] < 2:
        raise UQError("need at least two converged draws")
    col = mat[:, coordinate]
    lo = float(np.quantile(col, alpha / 2.0))
    hi = float(np.quantile(col, 1.0 - alpha / 2.0))
    return MarginalInterval(lower=lo, upper=hi, level=1.0 - alpha)


def winkler_score(interval, theta0, alpha=None) -> float:
    """Interval width plus a 2/alpha-scaled penalty for missing theta0."""
    if isinstance(interval, MarginalInterval):
        lo, hi = interval.lower, interval.upper
        if alpha is None:
            alpha = 1.0 - interval.level
    else:
        lo, hi = interval
    if not 0.0 < alpha < 1.0:
        raise UQError("alpha must be in (0, 1)")
    score = hi - lo
    if theta0 < lo:
        score += (2.0 / alpha) * (lo - theta0)
    elif theta0 > hi:
        score += (2.0 / alpha) * (theta0 - hi)
    return float(score)


def coverage(sets, theta0) -> float:
    """Fraction of credible sets containing theta0."""
    if not sets:
        raise UQError("need at least one credible set")
    return float(np.mean([contains(s, theta0) for s in sets]))


def size_metric(draws) -> float:
    """Trace of the (diagonal, unbiased) posterior covariance."""
    mat = _draw_matrix(draws)
    if mat.shape[0] < 2:
        raise UQError("need at least two converged draws")
    return float(np.sum(mat.var(axis=0, ddof=1)))
