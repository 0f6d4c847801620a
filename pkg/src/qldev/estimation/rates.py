"""Exponent extraction from tail estimates and the matching theoretical bounds."""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar

from ..errors import DomainError, EstimationError
from ..qmetrics import kmb_and_fisher, sld_and_fisher
from ..stats import fit_through_origin, linear_fit

__all__ = ["BetaEstimate", "RateCurve", "extract_beta", "extract_alpha", "theoretical_bounds", "rate_curve",
           "MIN_HITS", "RATE_NOTE"]

log = logging.getLogger(__name__)

MIN_HITS = 10
RATE_NOTE = ("single regression slope over the n grid; the upper (limsup) and lower (liminf) "
             "exponents are not distinguishable at finite n")


@dataclass(frozen=True)
class BetaEstimate:
    eps: float
    beta: float
    stderr: float
    n_used: tuple
    n_dropped: tuple


def extract_beta(estimates) -> BetaEstimate:
    """Slope of ``-log p_hat`` against ``n`` (affine model).

    Sampled rows need ``0 < p_hat < 1`` and at least ``MIN_HITS`` hits;
    exact rows are always usable. Sampled fits are weighted by the
    delta-method variance of ``log p_hat``; exact fits use ordinary least
    squares with the residual scatter as error.
    """
    estimates = list(estimates)
    if not estimates:
        raise EstimationError("no tail estimates supplied")
    eps_set = {e.eps for e in estimates}
    if len(eps_set) != 1:
        raise EstimationError("extract_beta expects estimates for a single epsilon")
    used, dropped = [], []
    for e in estimates:
        ok = 0.0 < e.p_hat < 1.0 and (e.method == "exact" or e.hits >= MIN_HITS)
        (used if ok else dropped).append(e)
    if dropped:
        log.info("dropping %d grid points without usable tail counts: n=%s", len(dropped), [e.n for e in dropped])
    if len(used) < 4:
        raise EstimationError(f"need >= 4 usable grid points, have {len(used)}: n={[e.n for e in used]}")
    n = np.array([e.n for e in used], dtype=float)
    y = -np.log([e.p_hat for e in used])
    if all(e.method == "exact" for e in used):
        fit = linear_fit(n, y)
    else:
        sig = np.array([max(e.stderr, 1e-300) / e.p_hat if e.method != "exact" else 1e-6 for e in used])
        fit = linear_fit(n, y, sig)
    return BetaEstimate(eps_set.pop(), fit.slope, fit.slope_stderr, tuple(int(v) for v in n),
                        tuple(e.n for e in dropped))


def extract_alpha(betas) -> tuple[float, float]:
    """Fit ``beta = alpha eps^2`` through the origin; weighted by the slope errors when all are positive."""
    betas = list(betas)
    if len(betas) < 3:
        raise EstimationError(f"need >= 3 epsilon points, have {len(betas)}")
    x = np.array([b.eps ** 2 for b in betas])
    y = np.array([b.beta for b in betas])
    se = np.array([b.stderr for b in betas])
    if np.all(se > 0):
        return fit_through_origin(x, y, se)
    return fit_through_origin(x, y)


def _inf_divergence(family, theta, eps, resolution=1e-3):
    lo, hi = family.search_window(theta)
    d = lambda t: family.relative_entropy(t, theta)
    best = math.inf
    pieces = [(lo, theta - eps), (theta + eps, hi)]
    for a, b in pieces:
        if b < a:
            continue
        pts = np.arange(a, b, resolution)
        pts = np.concatenate([pts, [b]]) if pts.size else np.array([a, b])
        if not family.contains(pts[0]):
            pts = pts[1:]
        if pts.size and not family.contains(pts[-1]):
            pts = pts[:-1]
        if not pts.size:
            continue
        vals = np.array([d(t) for t in pts])
        k = int(np.argmin(vals))
        cand = vals[k]
        ka, kb = max(k - 1, 0), min(k + 1, len(pts) - 1)
        if kb > ka:
            res = minimize_scalar(d, bounds=(pts[ka], pts[kb]), method="bounded", options={"xatol": 1e-10})
            cand = min(cand, float(res.fun))
        best = min(best, cand)
    return best


def theoretical_bounds(family, theta: float, eps: float) -> dict:
    """``J/2``, ``J~/2`` and ``inf {D(rho_t || rho_theta) : |t - theta| >= eps}``.

    ``inf_d_open`` is the same infimum over ``|t - theta| < eps``, which is
    always ``0`` (attained at ``t = theta``); it is reported for completeness.
    """
    if not family.contains(theta):
        raise DomainError(f"theta {theta!r} outside the parameter domain")
    rho, b = family.state(theta), family.derivative(theta)
    _, j = sld_and_fisher(rho, b)
    _, jt = kmb_and_fisher(rho, b)
    return {"j_half": j / 2, "jt_half": jt / 2, "inf_d": float(_inf_divergence(family, theta, eps)),
            "inf_d_open": 0.0}


@dataclass(frozen=True)
class RateCurve:
    betas: list
    alpha: float | None
    alpha_stderr: float | None
    bounds: dict
    note: str = field(default=RATE_NOTE)

    def as_dict(self):
        return {
            "betas": [asdict(b) for b in self.betas],
            "alpha": self.alpha,
            "alpha_stderr": self.alpha_stderr,
            "bounds": self.bounds,
            "note": self.note,
        }


def rate_curve(estimates, family=None, theta: float | None = None) -> RateCurve:
    by_eps: dict = {}
    for e in estimates:
        by_eps.setdefault(e.eps, []).append(e)
    betas = [extract_beta(v) for _, v in sorted(by_eps.items())]
    alpha = alpha_se = None
    if len(betas) >= 3:
        alpha, alpha_se = extract_alpha(betas)
    bounds = {}
    if family is not None and theta is not None:
        bounds = {repr(b.eps): theoretical_bounds(family, theta, b.eps) for b in betas}
    return RateCurve(betas, alpha, alpha_se, bounds)
