"""Exponential families on finite outcome sets.

``p_theta(w) = p(w) exp(theta . F(w) - psi(theta))`` with natural parameter
``theta``, expectation parameter ``eta = grad psi`` and KL in dual form
``D(theta || theta0) = (theta - theta0) . eta(theta) + psi(theta0) - psi(theta)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.optimize import brentq, linprog
from scipy.special import logsumexp

from .errors import BoundaryError, EstimationError, FeasibilityError, ValidationError

__all__ = [
    "ExponentialFamily",
    "CurvedFamily",
    "bernoulli",
    "multinomial",
    "potential_and_mean",
    "kl",
    "mle",
    "cramer_rate",
    "projection_estimator",
    "projection_from_distribution",
    "binary_entropy",
    "mean_tail_monte_carlo",
]


@dataclass(frozen=True)
class ExponentialFamily:
    statistics: np.ndarray             # shape (d, |Omega|)
    base_weights: np.ndarray           # shape (|Omega|,)
    outcomes: tuple = ()
    condition_number: float = field(init=False)

    def __post_init__(self):
        f = np.atleast_2d(np.asarray(self.statistics, dtype=float))
        p = np.asarray(self.base_weights, dtype=float).reshape(-1)
        if f.shape[1] != p.size:
            raise ValidationError("statistics and base weights disagree on the outcome count")
        if np.any(p <= 0) or not np.all(np.isfinite(f)):
            raise ValidationError("base weights must be positive and statistics finite")
        centered = f - (f @ p / p.sum())[:, None]
        gram = (centered * p) @ centered.T
        ev = np.linalg.eigvalsh(gram)
        if ev[0] <= 1e-12 * max(1.0, ev[-1]):
            raise ValidationError("statistics are affinely dependent on the outcome set")
        object.__setattr__(self, "statistics", f)
        object.__setattr__(self, "base_weights", p)
        object.__setattr__(self, "outcomes", tuple(self.outcomes) or tuple(range(p.size)))
        object.__setattr__(self, "condition_number", float(ev[-1] / ev[0]))

    @property
    def d(self) -> int:
        return self.statistics.shape[0]

    def _theta(self, theta) -> np.ndarray:
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        if theta.shape != (self.d,):
            raise ValidationError(f"natural parameter must have length {self.d}")
        if not np.all(np.isfinite(theta)):
            raise ValidationError("natural parameter must be finite")
        return theta

    def log_probabilities(self, theta) -> np.ndarray:
        z = self._theta(theta) @ self.statistics + np.log(self.base_weights)
        return z - logsumexp(z)

    def probabilities(self, theta) -> np.ndarray:
        return np.exp(self.log_probabilities(theta))

    def potential(self, theta) -> float:
        return float(logsumexp(self._theta(theta) @ self.statistics + np.log(self.base_weights)))

    def mean(self, theta) -> np.ndarray:
        return self.statistics @ self.probabilities(theta)

    def covariance(self, theta) -> np.ndarray:
        p = self.probabilities(theta)
        c = self.statistics - (self.statistics @ p)[:, None]
        return (c * p) @ c.T

    def natural_from_distribution(self, q) -> np.ndarray:
        """Least-squares natural parameter of a full-support law in the family's span."""
        q = np.asarray(q, dtype=float)
        y = np.log(q) - np.log(self.base_weights)
        a = np.vstack([self.statistics, np.ones(q.size)]).T
        sol, *_ = np.linalg.lstsq(a, y, rcond=None)
        return sol[:-1]


def bernoulli(base=(0.5, 0.5)) -> ExponentialFamily:
    return ExponentialFamily(np.array([[0.0, 1.0]]), np.asarray(base, dtype=float), (0, 1))


def multinomial(k: int) -> ExponentialFamily:
    """Full family on ``k`` outcomes; statistics are indicators of outcomes ``1 .. k-1``."""
    if k < 2:
        raise ValidationError("multinomial family needs k >= 2")
    return ExponentialFamily(np.eye(k)[1:], np.full(k, 1.0 / k))


def potential_and_mean(fam: ExponentialFamily, theta) -> tuple[float, np.ndarray]:
    return fam.potential(theta), fam.mean(theta)


def kl(fam: ExponentialFamily, theta, theta0) -> float:
    theta, theta0 = fam._theta(theta), fam._theta(theta0)
    val = float((theta - theta0) @ fam.mean(theta) + fam.potential(theta0) - fam.potential(theta))
    return max(val, 0.0) if val > -1e-12 else val


def _check_interior(fam: ExponentialFamily, eta) -> None:
    f = fam.statistics
    for i in range(fam.d):
        if not f[i].min() < eta[i] < f[i].max():
            side = "below the minimum" if eta[i] <= f[i].min() else "above the maximum"
            raise BoundaryError(f"mean of statistic {i} is {side} of its range; MLE does not exist")
    if fam.d == 1:
        return
    # margin LP: max s subject to sum l = 1, F l = eta, l >= s
    k = f.shape[1]
    c = np.zeros(k + 1)
    c[-1] = -1.0
    a_eq = np.hstack([np.vstack([f, np.ones(k)]), np.zeros((fam.d + 1, 1))])
    b_eq = np.concatenate([eta, [1.0]])
    a_ub = np.hstack([-np.eye(k), np.ones((k, 1))])
    res = linprog(c, A_ub=a_ub, b_ub=np.zeros(k), A_eq=a_eq, b_eq=b_eq,
                  bounds=[(0, None)] * k + [(None, None)], method="highs")
    if not res.success or -res.fun <= 0:
        raise BoundaryError("empirical means lie on or outside the convex hull of the statistics")


def mle(fam: ExponentialFamily, empirical_means, tol: float = 1e-10, max_iter: int = 200) -> np.ndarray:
    """Natural parameter with ``eta(theta) = empirical_means``, by damped Newton on ``psi - theta.eta``."""
    eta = np.atleast_1d(np.asarray(empirical_means, dtype=float))
    if eta.shape != (fam.d,):
        raise ValidationError(f"need {fam.d} empirical means")
    _check_interior(fam, eta)
    theta = np.zeros(fam.d)
    obj = lambda t: fam.potential(t) - t @ eta
    cur = obj(theta)
    for _ in range(max_iter):
        g = fam.mean(theta) - eta
        if np.max(np.abs(g)) <= tol:
            return theta
        step = np.linalg.solve(fam.covariance(theta), g)
        lam = 1.0
        # near the optimum decreases of obj fall below rounding; accept those steps
        slack = 8 * np.finfo(float).eps * (1.0 + abs(cur))
        while lam > 1e-12:
            cand = theta - lam * step
            val = obj(cand)
            if val <= cur + slack:
                break
            lam *= 0.5
        theta, cur = cand, val
    g = fam.mean(theta) - eta
    if np.max(np.abs(g)) <= tol:
        return theta
    raise EstimationError(f"Newton iteration did not converge (residual {np.max(np.abs(g)):.3e})")


def cramer_rate(fam: ExponentialFamily, theta0, i: int, a: float, side: str = ">=") -> float:
    """Large-deviation rate of ``{mean of F_i >= a}`` (or ``<= a``) under i.i.d. ``p_theta0``.

    Legendre transform ``sup_t (t a - log E exp(t F_i))`` of the tilted
    one-dimensional family, which equals ``KL(p_t* || p_theta0)`` at the
    tilt ``t*`` matching the threshold.
    """
    if side not in (">=", "<="):
        raise ValidationError("side must be '>=' or '<='")
    logp = fam.log_probabilities(theta0)
    f = fam.statistics[i]
    mu = float(np.exp(logp) @ f)
    sign = 1.0 if side == ">=" else -1.0
    if sign * (a - mu) <= 0:
        return 0.0
    extreme = f.max() if sign > 0 else f.min()
    if sign * (a - extreme) > 0:
        return math.inf
    if a == extreme:
        return float(-logsumexp(logp[f == extreme]))

    def lam(t):
        return logsumexp(logp + t * f)

    def dlam(t):
        z = logp + t * f
        return float(np.exp(z - logsumexp(z)) @ f) - a

    hi = sign * 1.0
    while dlam(hi) * sign < 0:
        hi *= 2.0
        if abs(hi) > 1e6:
            raise EstimationError("tilt search diverged")
    lo, hi = sorted((0.0, hi))
    t = brentq(dlam, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)
    return float(t * a - lam(t))


def _tilt_parameter(logp, f, a):
    dl = lambda t: float(np.exp(logp + t * f - logsumexp(logp + t * f)) @ f) - a
    hi = 1.0 if dl(0.0) < 0 else -1.0
    while dl(hi) * np.sign(hi) < 0:
        hi *= 2.0
    lo, hi = sorted((0.0, hi))
    return brentq(dl, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)


def mean_tail_monte_carlo(fam: ExponentialFamily, theta0, i: int, a: float, n_grid, trials: int,
                          rng: np.random.Generator, importance: bool = True) -> list[dict]:
    """Monte-Carlo estimates of ``P{mean of F_i >= a}`` under i.i.d. ``p_theta0`` for each ``n``.

    Outcome counts are drawn from their exact multinomial law. With
    ``importance=True`` the draws come from the law tilted to mean ``a`` and
    carry the exact likelihood-ratio weight ``exp(-t S + n Lambda(t))``.
    """
    logp = fam.log_probabilities(theta0)
    f = fam.statistics[i]
    mu = float(np.exp(logp) @ f)
    if importance and a > mu and a < f.max():
        t = _tilt_parameter(logp, f, a)
        lam = float(logsumexp(logp + t * f))
        q = np.exp(logp + t * f - lam)
    else:
        t, lam, q = 0.0, 0.0, np.exp(logp)
    rows = []
    for n in n_grid:
        counts = rng.multinomial(int(n), q, size=int(trials))
        s = counts @ f
        hit = s >= a * n * (1.0 - 1e-12)
        w = np.where(hit, np.exp(-t * s + n * lam), 0.0)
        p = float(w.mean())
        se = float(w.std() / math.sqrt(trials))
        rows.append({"n": int(n), "hits": int(hit.sum()), "p_hat": p, "stderr": se,
                     "rate_n": -math.log(p) / n if p > 0 else math.inf})
    return rows


def binary_entropy(x: float) -> float:
    if not 0.0 <= x <= 1.0:
        raise ValidationError("binary entropy needs 0 <= x <= 1")
    if x in (0.0, 1.0):
        return 0.0
    return float(-x * math.log(x) - (1 - x) * math.log(1 - x))


# -- curved families and the projection estimator --------------------------------

@dataclass(frozen=True)
class CurvedFamily:
    """One-dimensional curve ``u -> p_u`` inside an ambient family.

    Either ``embedding`` (to ambient natural parameters) or ``distribution``
    (directly to probabilities on the ambient outcome set) must be given.
    """

    ambient: ExponentialFamily | None
    domain: tuple
    embedding: Callable | None = None
    distribution: Callable | None = None

    def probabilities(self, u: float) -> np.ndarray:
        if self.distribution is not None:
            return np.asarray(self.distribution(u), dtype=float)
        return self.ambient.probabilities(self.embedding(u))

    def probability_grid(self, us) -> np.ndarray:
        return np.stack([self.probabilities(u) for u in us])


def _log_safe(p):
    with np.errstate(divide="ignore"):
        return np.log(p)


def _kl_rows(q, logq, p_rows):
    """``D(q || p)`` for every row of ``p_rows`` (``inf`` on support violations)."""
    live = q > 0
    lp = _log_safe(p_rows[:, live])
    return np.sum(q[live] * (logq[live] - lp), axis=1)


def _kl_to(p_rows, p0):
    lp0 = _log_safe(p0)
    out = np.empty(p_rows.shape[0])
    for r, p in enumerate(p_rows):
        live = p > 0
        out[r] = np.sum(p[live] * (np.log(p[live]) - lp0[live]))
    return out


def projection_from_distribution(curved: CurvedFamily, q, theta0: float,
                                 steps=(1e-2, 1e-3, 1e-5)) -> float:
    """``argmin_u {D(q || p_u) : D(p_u || p_theta0) <= D(q || p_theta0)}`` by successive grids.

    Ties resolve to the smallest parameter; ``theta0`` is always a candidate.
    """
    q = np.asarray(q, dtype=float)
    logq = _log_safe(q)
    p0 = curved.probabilities(theta0)
    budget = float(_kl_rows(q, logq, p0[None])[0]) + 1e-12
    lo, hi = curved.domain
    best = None
    window = (lo, hi)
    for k, step in enumerate(steps):
        a, b = window
        grid = np.arange(a, b + 0.5 * step, step)
        grid = grid[(grid >= lo) & (grid <= hi)]
        extra = [theta0] + ([best] if best is not None else [])
        grid = np.unique(np.concatenate([grid, [x for x in extra if a <= x <= b]]))
        rows = curved.probability_grid(grid)
        cost = _kl_rows(q, logq, rows)
        feas = _kl_to(rows, p0) <= budget
        if not np.any(feas):
            raise FeasibilityError("no grid point satisfies the divergence constraint")
        cost = np.where(feas, cost, np.inf)
        best = float(grid[int(np.argmin(cost))])
        if k + 1 < len(steps):
            window = (max(lo, best - step), min(hi, best + step))
    return best


def projection_estimator(curved: CurvedFamily, x, theta0: float, steps=(1e-2, 1e-3, 1e-5)) -> float:
    """Projection estimator for ambient natural parameter ``x``."""
    if curved.ambient is None:
        raise ValidationError("curved family has no ambient exponential family")
    return projection_from_distribution(curved, curved.ambient.probabilities(x), theta0, steps)
