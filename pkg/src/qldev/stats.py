"""Small statistical utilities: binomial intervals and linear fits."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import norm

__all__ = ["wilson_interval", "normal_interval", "LinearFit", "linear_fit", "fit_through_origin"]

Z95 = float(norm.ppf(0.975))


def wilson_interval(hits: int, trials: int, z: float = Z95) -> tuple[float, float]:
    if trials <= 0:
        return 0.0, 1.0
    p = hits / trials
    den = 1.0 + z * z / trials
    center = (p + z * z / (2 * trials)) / den
    half = z * math.sqrt(p * (1 - p) / trials + z * z / (4 * trials * trials)) / den
    lo = 0.0 if hits == 0 else max(0.0, center - half)
    hi = 1.0 if hits == trials else min(1.0, center + half)
    return lo, hi


def normal_interval(mean: float, stderr: float, z: float = Z95) -> tuple[float, float]:
    return max(0.0, mean - z * stderr), min(1.0, mean + z * stderr)


@dataclass(frozen=True)
class LinearFit:
    slope: float
    intercept: float
    slope_stderr: float
    n_points: int


def linear_fit(x, y, sigma=None) -> LinearFit:
    """Affine least squares ``y = a + b x``; weighted by ``1/sigma^2`` when ``sigma`` is given.

    With weights the slope error comes from the weights (known-variance
    model); without them from the residual scatter.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    a = np.vstack([np.ones_like(x), x]).T
    if sigma is None:
        w = np.ones_like(x)
    else:
        w = 1.0 / np.asarray(sigma, dtype=float) ** 2
    aw = a * np.sqrt(w)[:, None]
    yw = y * np.sqrt(w)
    coef, *_ = np.linalg.lstsq(aw, yw, rcond=None)
    cov = np.linalg.inv(aw.T @ aw)
    if sigma is None:
        dof = max(len(x) - 2, 1)
        resid = yw - aw @ coef
        cov = cov * float(resid @ resid) / dof
    return LinearFit(float(coef[1]), float(coef[0]), float(math.sqrt(max(cov[1, 1], 0.0))), len(x))


def fit_through_origin(x, y, sigma=None) -> tuple[float, float]:
    """Least squares ``y = c x`` (no intercept); returns ``(c, stderr)``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    w = np.ones_like(x) if sigma is None else 1.0 / np.asarray(sigma, dtype=float) ** 2
    sxx = float(np.sum(w * x * x))
    c = float(np.sum(w * x * y) / sxx)
    if sigma is None:
        dof = max(len(x) - 1, 1)
        s2 = float(np.sum((y - c * x) ** 2)) / dof
        return c, math.sqrt(s2 / sxx)
    return c, math.sqrt(1.0 / sxx)
