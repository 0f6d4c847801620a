"""Estimator constructions and their exact outcome laws.

Every strategy draws from the exact classical law its measurements induce
on the true state. Three sampling paths exist:

* ``sample``      -- plain Monte Carlo of the estimate,
* ``tail_exact``  -- closed-form tail probability (no sampling),
* ``tail_importance`` -- tilted proposal with exact likelihood-ratio weights,
  used where the tail is far below ``1/trials``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations_with_replacement
from typing import Union

import numpy as np
from scipy.special import gammaln, logsumexp

from ..errors import CapacityError, ConfigurationError, ValidationError
from ..expfam import CurvedFamily, projection_from_distribution
from ..families import GaussianFockFamily
from ..measurement import faithful_povm, sld_estimator_pvm
from ..qmetrics import sld_and_fisher
from ..repdecomp import madaptive_block_povm, refined_pvm

__all__ = [
    "FixedSLD",
    "TwoStage",
    "Superefficient",
    "MAdaptive",
    "GaussianHomodyne",
    "GaussianNumber",
    "StrategySpec",
    "SuperefficientLaw",
    "accept_region",
    "STRATEGY_NAMES",
    "make_strategy",
    "in_tail",
    "number_threshold",
    "faithful_log_likelihood_grid",
    "grid_mle",
    "batched_sld",
    "mgf_phi",
    "legendre_rate",
    "run_fixed_sld",
    "run_two_stage",
    "run_superefficient",
    "run_m_adaptive",
]

# relative slack on the closed tail event |T - theta| >= eps
TAIL_RTOL = 1e-12


def in_tail(est, theta: float, eps: float):
    return np.abs(np.asarray(est) - theta) >= eps * (1.0 - TAIL_RTOL)


# -- shared helpers -----------------------------------------------------------------

def _faithful_probs(family, thetas) -> np.ndarray:
    """Faithful-POVM outcome law on a batch of parameters, shape ``(G, K)``."""
    f = faithful_povm(family.dim)
    states = family.states(thetas)
    p = np.real(np.einsum("gab,kba->gk", states, f.elements))
    p = np.clip(p, 0.0, None)
    return p / p.sum(axis=1, keepdims=True)


def _interior_grid(family, size: int) -> np.ndarray:
    lo, hi = family.search_window(0.0)
    if not (np.isfinite(lo) and np.isfinite(hi)):
        raise ConfigurationError("family has an unbounded parameter window")
    step = (hi - lo) / size
    g = lo + step * (np.arange(size) + 0.5)
    if family.domain.lo_closed:
        g[0] = lo
    if family.domain.hi_closed:
        g[-1] = hi
    return g


def faithful_log_likelihood_grid(family, size: int = 4096) -> tuple[np.ndarray, np.ndarray]:
    grid = _interior_grid(family, size)
    with np.errstate(divide="ignore"):
        logp = np.log(_faithful_probs(family, grid))
    return grid, logp


def grid_mle(counts, grid, logp):
    """Row-wise argmax of ``counts @ logp.T`` with parabolic refinement.

    Returns ``(theta_hat, flags)`` where ``flags`` marks flat likelihoods or
    maxima on the grid edge (the grid value is kept in that case).
    """
    counts = np.atleast_2d(counts)
    with np.errstate(invalid="ignore"):
        ll = counts @ np.where(np.isfinite(logp), logp, -1e300).T
    k = np.argmax(ll, axis=1)
    rows = np.arange(len(k))
    flat = np.ptp(ll, axis=1) <= 1e-12
    edge = (k == 0) | (k == len(grid) - 1)
    est = grid[k].astype(float)
    inner = ~edge & ~flat
    if np.any(inner):
        ki = k[inner]
        r = rows[inner]
        y0, y1, y2 = ll[r, ki - 1], ll[r, ki], ll[r, ki + 1]
        den = y0 - 2 * y1 + y2
        with np.errstate(divide="ignore", invalid="ignore"):
            off = np.where(den < 0, 0.5 * (y0 - y2) / den, 0.0)
        off = np.clip(off, -0.5, 0.5)
        est[inner] = grid[ki] + off * (grid[1] - grid[0])
    return est, flat | edge


def batched_sld(family, thetas):
    """SLD operators at a batch of parameters, shape ``(T, d, d)``, and their Fisher informations."""
    rho = family.states(thetas)
    b = family.derivatives(thetas)
    p, u = np.linalg.eigh(rho)
    p = np.clip(p, 0.0, None)
    bb = np.einsum("tai,tab,tbj->tij", u.conj(), b, u)
    s = p[:, :, None] + p[:, None, :]
    lp = np.where(s > 1e-12, 2.0 * bb / np.where(s > 1e-12, s, 1.0), 0.0)
    sld = np.einsum("tai,tij,tbj->tab", u, lp, u.conj())
    j = np.real(np.sum(np.abs(lp) ** 2 * p[:, :, None], axis=(1, 2)))
    return 0.5 * (sld + np.conj(np.swapaxes(sld, 1, 2))), j


def _log_multinomial(counts, logp):
    n = counts.sum(axis=-1)
    with np.errstate(invalid="ignore"):
        terms = np.where(counts > 0, counts * logp, 0.0)
    return gammaln(n + 1) - gammaln(counts + 1).sum(axis=-1) + terms.sum(axis=-1)


def _tilt(values, logp, target):
    """Exponential tilt of a finite law so its mean equals ``target``; ``None`` if unreachable."""
    lo, hi = values.min(), values.max()
    if not lo < target < hi:
        return None

    def mean(t):
        z = logp + t * values
        return float(np.exp(z - logsumexp(z)) @ values)

    a, b = -1.0, 1.0
    while mean(a) > target:
        a *= 2
    while mean(b) < target:
        b *= 2
    for _ in range(200):
        c = 0.5 * (a + b)
        if mean(c) < target:
            a = c
        else:
            b = c
    z = logp + 0.5 * (a + b) * values
    return z - logsumexp(z)


# -- fixed SLD measurement ---------------------------------------------------------------

def mgf_phi(family, theta: float, theta_c: float, s: float) -> float:
    """``Tr rho_theta exp(s (L/J - Tr rho_theta L/J))`` with ``L, J`` taken at ``theta_c``."""
    rho = family.state(theta)
    sld, j = sld_and_fisher(family.state(theta_c), family.derivative(theta_c))
    x = sld / j
    m = float(np.real(np.trace(rho @ x)))
    w, u = np.linalg.eigh(x - m * np.eye(len(x)))
    return float(np.real(np.trace(rho @ (u * np.exp(s * w)) @ u.conj().T)))


def legendre_rate(family, theta: float, theta_c: float, eps: float, s_max: float = 200.0) -> float:
    """``min_{+-} sup_s (eps s - log phi(+-s))``: Cramer rate of the SLD-PVM mean leaving ``eps``."""
    from scipy.optimize import minimize_scalar

    out = []
    for sign in (1.0, -1.0):
        obj = lambda s: -(eps * s - math.log(mgf_phi(family, theta, theta_c, sign * s)))
        res = minimize_scalar(obj, bounds=(0.0, s_max), method="bounded", options={"xatol": 1e-10})
        out.append(max(-res.fun, 0.0))
    return min(out)


@dataclass(frozen=True)
class FixedSLD:
    """Spectral PVM of ``L_theta0/J + theta0`` on every copy; estimate = sample mean of the labels."""

    theta0: float
    importance: bool = True
    name: str = field(default="fixed-sld", init=False)

    def check(self, family, n: int):
        if not family.contains(self.theta0):
            raise ConfigurationError("theta0 outside the family domain")

    def _law(self, family, theta):
        pvm = sld_estimator_pvm(family, self.theta0)
        p = pvm.probabilities(family.state(theta))
        return pvm.values, p

    def sample(self, family, theta, n, size, rng):
        x, p = self._law(family, theta)
        counts = rng.multinomial(n, p, size=size)
        return counts @ x / n

    def tail_importance(self, family, theta, n, eps, size, rng):
        x, p = self._law(family, theta)
        with np.errstate(divide="ignore"):
            logp = np.log(p)
        return _tilted_mean_tail(x, logp, theta, n, eps, size, rng)


def _tilted_mean_tail(x, logp, theta, n, eps, size, rng):
    """Weighted tail indicators of the sample mean under a two-sided tilted mixture proposal."""
    sides = [s for s in (_tilt(x, logp, theta + eps), _tilt(x, logp, theta - eps)) if s is not None]
    if not sides:
        return 0, np.zeros(size)
    pick = rng.integers(0, len(sides), size=size)
    counts = np.empty((size, len(x)), dtype=np.int64)
    for i, lq in enumerate(sides):
        sel = pick == i
        counts[sel] = rng.multinomial(n, np.exp(lq), size=int(sel.sum()))
    est = counts @ x / n
    hit = in_tail(est, theta, eps)
    with np.errstate(invalid="ignore"):
        num = np.where(counts > 0, counts * logp, 0.0).sum(axis=1)
        comps = np.stack([np.where(counts > 0, counts * lq, 0.0).sum(axis=1) for lq in sides])
    den = logsumexp(comps, axis=0) - math.log(len(sides))
    w = np.where(hit, np.exp(num - den), 0.0)
    return int(hit.sum()), w


def run_fixed_sld(theta0, family, theta_true, n, rng) -> float:
    return float(FixedSLD(theta0).sample(family, theta_true, n, 1, rng)[0])


# -- two-stage adaptive ---------------------------------------------------------------------

@dataclass(frozen=True)
class TwoStage:
    """Faithful POVM on ``ceil(delta n)`` copies, MLE ``theta_c``; then ``E(L_theta_c)`` on the rest."""

    delta: float
    grid_size: int = 4096
    coarse_size: int = 256
    name: str = field(default="two-stage", init=False)

    def check(self, family, n: int):
        if not 0.0 < self.delta < 1.0:
            raise ConfigurationError("two-stage delta must lie in (0, 1)")
        if math.ceil(self.delta * n) < 1:
            raise ConfigurationError("first stage is empty")

    def split(self, n):
        n1 = min(n, math.ceil(self.delta * n - 1e-12))
        return n1, n - n1

    def sample(self, family, theta, n, size, rng):
        return self.sample_with_diagnostics(family, theta, n, size, rng)[0]

    def sample_with_diagnostics(self, family, theta, n, size, rng):
        n1, n2 = self.split(n)
        grid, logp = _two_stage_cache(family, self.grid_size)
        p_true = _faithful_probs(family, [theta])[0]
        counts = rng.multinomial(n1, p_true, size=size)
        est1, flags = grid_mle(counts, grid, logp)
        if n2 == 0:
            return est1, {"mle_flags": int(flags.sum()), "clamps": 0}
        sld, _ = batched_sld(family, est1)
        lam, vec = np.linalg.eigh(sld)
        rho = family.state(theta)
        probs = np.real(np.einsum("tai,ab,tbi->ti", vec.conj(), rho, vec))
        probs = np.clip(probs, 0.0, None)
        probs /= probs.sum(axis=1, keepdims=True)
        c2 = rng.multinomial(n2, probs)
        target = np.sum(c2 * lam, axis=1) / n2
        est, clamps = _solve_mean_equation(family, est1, sld, target, self.coarse_size)
        return est, {"mle_flags": int(flags.sum()), "clamps": int(clamps)}


_TS_CACHE: dict = {}


def _two_stage_cache(family, size):
    key = (id(family), size)
    hit = _TS_CACHE.get(key)
    if hit is None or hit[0] is not family:
        hit = (family, faithful_log_likelihood_grid(family, size))
        _TS_CACHE[key] = hit
    return hit[1]


def _mean_of(family, ts, sld):
    return np.real(np.einsum("tab,tba->t", family.states(ts), sld))


def _solve_mean_equation(family, center, sld, target, coarse_size):
    """Solve ``Tr rho_T L = target`` on the increasing branch through ``center``, per row."""
    lo, hi = family.search_window(0.0)
    t = len(center)
    grid = np.linspace(lo, hi, coarse_size)
    if not family.domain.lo_closed:
        grid[0] = lo + 1e-9 * (hi - lo)
    if not family.domain.hi_closed:
        grid[-1] = hi - 1e-9 * (hi - lo)
    vals = np.stack([_mean_of(family, np.full(t, g), sld) for g in grid], axis=1)
    c = np.clip(np.searchsorted(grid, center) - 1, 0, coarse_size - 2)
    inc = np.diff(vals, axis=1) > 0
    idx = np.arange(coarse_size - 1)[None, :]
    # the increasing run of segments containing segment c
    stop_l = np.where(~inc & (idx < c[:, None]), idx, -1).max(axis=1) + 1
    stop_r = np.where(~inc & (idx > c[:, None]), idx, coarse_size - 1).min(axis=1)
    a = grid[stop_l].copy()
    b = grid[stop_r].copy()
    # cannot bracket past a non-increasing segment at c itself: fall back to the center
    bad = ~inc[np.arange(t), c]
    a[bad] = b[bad] = center[bad]
    fa = _mean_of(family, a, sld)
    fb = _mean_of(family, b, sld)
    below = target <= fa
    above = target >= fb
    est = np.where(below, a, np.where(above, b, 0.5 * (a + b)))
    live = ~(below | above)
    for _ in range(200):
        if not np.any(live):
            break
        mid = 0.5 * (a + b)
        fm = _mean_of(family, mid, sld)
        go_right = fm < target
        a = np.where(live & go_right, mid, a)
        b = np.where(live & ~go_right, mid, b)
        live = live & (b - a > 1e-14 * (1 + np.abs(a)))
    est = np.where(below, est, np.where(above, est, 0.5 * (a + b)))
    return est, int(np.sum(below | above))


def run_two_stage(delta, family, theta_true, n, rng) -> float:
    return float(TwoStage(delta).sample(family, theta_true, n, 1, rng)[0])


# -- superefficient estimator -----------------------------------------------------------------

def _compositions(total: int, parts: int) -> np.ndarray:
    out = []
    for combo in combinations_with_replacement(range(parts), total):
        out.append(np.bincount(combo, minlength=parts))
    return np.array(out, dtype=np.int64)


@dataclass(frozen=True)
class SuperefficientLaw:
    """Exact law of the estimate together with the per-first-stage acceptance bookkeeping."""

    values: np.ndarray
    probabilities: np.ndarray
    stage1_estimates: np.ndarray       # distinct first-stage MLE values
    stage1_weights: np.ndarray         # their probabilities under the true state
    reject_given_stage1: np.ndarray    # P(T != theta1 | theta_c)
    divergences: np.ndarray            # D(theta_c || theta1)
    n_first: int
    n_second: int
    delta_n: float

    def probability_of(self, value: float, atol: float = 1e-12) -> float:
        return float(self.probabilities[np.abs(self.values - value) <= atol].sum())

    def tail(self, theta: float, eps: float) -> float:
        return float(self.probabilities[in_tail(self.values, theta, eps)].sum())

    def sample(self, size, rng):
        idx = rng.choice(len(self.values), size=size, p=self.probabilities)
        return self.values[idx]


def accept_region(family, theta1: float, theta_c: float, n: int) -> np.ndarray:
    """Outcomes of ``E^{n2}_theta1`` for which the estimate is set to ``theta1``.

    The rule accepts ``theta1`` when
    ``exp(n (1 - delta_n2) D(theta_c || theta1)) P_theta1(w) >= P_theta_c(w)``.
    """
    n2 = n - (math.isqrt(n - 1) + 1)
    delta_n = n2 ** (-0.2)
    e = refined_pvm(family, theta1, n2)
    div = family.relative_entropy(theta_c, theta1)
    with np.errstate(divide="ignore"):
        lp1 = np.log(e.probabilities(family.state(theta1)))
        lpc = np.log(e.probabilities(family.state(theta_c)))
    return n * (1 - delta_n) * div + lp1 >= lpc


@dataclass(frozen=True)
class Superefficient:
    theta1: float
    grid_size: int = 4096
    name: str = field(default="superefficient", init=False)

    def check(self, family, n: int):
        if family.dim != 2:
            raise ConfigurationError("superefficient strategy needs a qubit family")
        n1 = math.isqrt(n - 1) + 1 if n > 0 else 0
        if n - n1 < 1:
            raise ConfigurationError("n too small for the two-group construction")
        if n > 12:
            raise CapacityError(f"exact enumeration limited to n <= 12, got {n}")

    def law(self, family, theta, n) -> SuperefficientLaw:
        self.check(family, n)
        n1 = math.isqrt(n - 1) + 1          # ceil(sqrt(n))
        n2 = n - n1
        delta_n = n2 ** (-0.2)
        grid, logp = _two_stage_cache(family, self.grid_size)
        comps = _compositions(n1, logp.shape[1])
        est, _ = grid_mle(comps, grid, logp)
        with np.errstate(divide="ignore"):
            lp_true = np.log(_faithful_probs(family, [theta])[0])
        w = np.exp(_log_multinomial(comps, lp_true))
        uniq, inv = np.unique(est, return_inverse=True)
        wu = np.bincount(inv, weights=w, minlength=len(uniq))
        pt = refined_pvm(family, self.theta1, n2).probabilities(family.state(theta))
        rej = np.empty(len(uniq))
        div = np.empty(len(uniq))
        for i, tc in enumerate(uniq):
            div[i] = family.relative_entropy(tc, self.theta1)
            rej[i] = float(pt[~accept_region(family, self.theta1, tc, n)].sum())
        vals = np.concatenate([[self.theta1], uniq])
        probs = np.concatenate([[float(np.sum(wu * (1 - rej)))], wu * rej])
        keep = probs > 0
        vals, probs = vals[keep], probs[keep]
        order = np.argsort(vals, kind="stable")
        vals, probs = vals[order], probs[order]
        # merge the theta1 atom with an identical first-stage value
        uv, ui = np.unique(vals, return_inverse=True)
        probs = np.bincount(ui, weights=probs)
        return SuperefficientLaw(uv, probs / probs.sum(), uniq, wu, rej, div, n1, n2, delta_n)

    def tail_exact(self, family, theta, n, eps):
        return self.law(family, theta, n).tail(theta, eps)

    def sample(self, family, theta, n, size, rng):
        return self.law(family, theta, n).sample(size, rng)


def run_superefficient(theta1, family, theta_true, n, mode="exact", rng=None):
    law = Superefficient(theta1).law(family, theta_true, n)
    if mode == "exact":
        return law
    if mode == "sample":
        if rng is None:
            raise ValidationError("sample mode needs a random generator")
        return float(law.sample(1, rng)[0])
    raise ValidationError(f"unknown mode {mode!r}")


# -- m-adaptive block strategy ---------------------------------------------------------------------

@dataclass(frozen=True)
class MAdaptive:
    """Blocks of ``m`` copies measured with the block POVM; projection estimator on the block law."""

    theta0: float
    m: int
    delta: float
    steps: tuple = (1e-2, 1e-3, 1e-5)
    name: str = field(default="m-adaptive", init=False)

    def check(self, family, n: int):
        if family.dim != 2:
            raise ConfigurationError("m-adaptive strategy needs a qubit family")
        if not 1 <= self.m <= 6:
            raise CapacityError("block size m must lie in 1..6")
        if not 0.0 < self.delta < 1.0:
            raise ConfigurationError("delta must lie in (0, 1)")
        if n % self.m:
            raise ConfigurationError(f"n = {n} is not a multiple of m = {self.m}")

    def curve(self, family) -> CurvedFamily:
        block = madaptive_block_povm(family, self.theta0, self.m, self.delta)
        cache: dict = {}

        def dist(u):
            key = round(float(u), 9)
            hit = cache.get(key)
            if hit is None:
                hit = block.probabilities(family.state(key))
                cache[key] = hit
            return hit

        lo, hi = family.search_window(self.theta0)
        if not family.domain.contains(lo):
            lo = lo + 1e-9
        if not family.domain.contains(hi):
            hi = hi - 1e-9
        return CurvedFamily(None, (lo, hi), distribution=dist)

    def sample(self, family, theta, n, size, rng):
        self.check(family, n)
        blocks = n // self.m
        curve = self.curve(family)
        p = madaptive_block_povm(family, self.theta0, self.m, self.delta).probabilities(family.state(theta))
        counts = rng.multinomial(blocks, p, size=size)
        return np.array([projection_from_distribution(curve, c / blocks, self.theta0, self.steps)
                         for c in counts])


def run_m_adaptive(theta0, m, delta, family, theta_true, blocks, rng) -> float:
    s = MAdaptive(theta0, m, delta)
    return float(s.sample(family, theta_true, blocks * m, 1, rng)[0])


# -- Gaussian strategies ---------------------------------------------------------------------------

def _gaussian_check(family, nbar):
    if family is not None and not isinstance(family, GaussianFockFamily):
        raise ConfigurationError("Gaussian strategies need a Gaussian family")
    if family is not None and abs(family.nbar - nbar) > 1e-12:
        raise ConfigurationError("strategy nbar differs from the family's nbar")
    if nbar <= 0:
        raise ConfigurationError("nbar must be positive")


@dataclass(frozen=True)
class GaussianHomodyne:
    """Quadrature measurement on every copy; estimate = sample mean.

    Each outcome is ``Normal(theta, (2 nbar + 1)/4)``, so the estimate is
    drawn from its exact law ``Normal(theta, (2 nbar + 1)/(4 n))``.
    """

    nbar: float
    importance: bool = True
    name: str = field(default="gaussian-homodyne", init=False)

    def check(self, family, n: int):
        _gaussian_check(family, self.nbar)

    def sd(self, n):
        return math.sqrt((2 * self.nbar + 1) / (4 * n))

    def sample(self, family, theta, n, size, rng):
        return theta + self.sd(n) * rng.standard_normal(size)

    def tail_probability(self, theta, n, eps):
        from scipy.stats import norm

        return float(2 * norm.sf(eps / self.sd(n)))

    def tail_importance(self, family, theta, n, eps, size, rng):
        s = self.sd(n)
        sign = np.where(rng.integers(0, 2, size=size) == 0, 1.0, -1.0)
        z = sign * eps + s * rng.standard_normal(size)
        hit = in_tail(theta + z, theta, eps)
        a = z * eps / s**2
        # weight = phi(z) / mixture(z) = exp(eps^2/2s^2) / cosh(z eps / s^2)
        logw = eps**2 / (2 * s**2) - (np.abs(a) + np.log1p(np.exp(-2 * np.abs(a))) - math.log(2))
        return int(hit.sum()), np.where(hit, np.exp(logw), 0.0)


def number_threshold(n: int, eps: float) -> int:
    """Smallest photon count ``k`` with ``sqrt(k/n) >= eps``: ``ceil(n eps^2)``, robust to rounding."""
    x = n * eps * eps
    return max(0, math.ceil(x - 1e-9 * max(1.0, x)))


@dataclass(frozen=True)
class GaussianNumber:
    """Concentrate the displacement into one mode and count photons: ``T = sqrt(k / n)``.

    The count follows the displaced thermal law with displacement
    ``sqrt(n) theta``: ``k ~ Poisson(|sqrt(n) theta + z|^2)``, ``z`` complex
    normal with ``E|z|^2 = nbar``. At ``theta = 0`` it is geometric.
    """

    nbar: float
    name: str = field(default="gaussian-number", init=False)

    def check(self, family, n: int):
        _gaussian_check(family, self.nbar)

    def sample(self, family, theta, n, size, rng):
        z = math.sqrt(self.nbar / 2) * (rng.standard_normal(size) + 1j * rng.standard_normal(size))
        k = rng.poisson(np.abs(math.sqrt(n) * theta + z) ** 2)
        return np.sqrt(k / n)

    def tail_exact(self, family, theta, n, eps):
        if theta != 0.0:
            return None
        q = self.nbar / (self.nbar + 1.0)
        return q ** number_threshold(n, eps)


StrategySpec = Union[FixedSLD, TwoStage, Superefficient, MAdaptive, GaussianHomodyne, GaussianNumber]

STRATEGY_NAMES = ("fixed-sld", "two-stage", "superefficient", "m-adaptive", "gaussian-homodyne", "gaussian-number")


def make_strategy(name: str, theta0: float = 0.0, delta: float = 0.25, m: int = 2, nbar: float = 1.0,
                  importance: bool = True) -> StrategySpec:
    if name == "fixed-sld":
        return FixedSLD(theta0, importance)
    if name == "two-stage":
        return TwoStage(delta)
    if name == "superefficient":
        return Superefficient(theta0)
    if name == "m-adaptive":
        return MAdaptive(theta0, m, delta)
    if name == "gaussian-homodyne":
        return GaussianHomodyne(nbar, importance)
    if name == "gaussian-number":
        return GaussianNumber(nbar)
    raise ConfigurationError(f"unknown strategy {name!r}; choose from {', '.join(STRATEGY_NAMES)}")
