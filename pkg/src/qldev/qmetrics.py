"""Quantum Fisher informations and divergences.

All three Fisher informations are computed in the eigenbasis of the state,
where the defining operator equations become entrywise divisions:

* SLD  ``(L rho + rho L)/2 = B``          ->  ``L_ij = 2 B_ij / (p_i + p_j)``
* KMB  ``int_0^1 rho^t L rho^(1-t) dt = B`` ->  ``L_ij = B_ij (log p_i - log p_j)/(p_i - p_j)``
* RLD  ``J = Tr B rho^-1 B``

``B`` is the derivative ``d rho / d theta`` of a state family.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .config import TOL, Tolerances
from .errors import DomainError, RankError, SupportError, ValidationError
from .linalg import (
    max_abs,
    spectral_apply,
    trace_norm_product,
    validate_density,
    validate_hermitian,
)

__all__ = [
    "FisherReport",
    "LimitRow",
    "sld_and_fisher",
    "kmb_and_fisher",
    "rld_fisher",
    "fisher_report",
    "kmb_quadrature_residual",
    "relative_entropy",
    "bures_distance",
    "affinity",
    "limit_table",
]


@dataclass(frozen=True)
class FisherReport:
    j_sld: float
    j_kmb: float
    j_rld: float | None
    sld_operator: np.ndarray
    kmb_operator: np.ndarray


def _eigenframe(rho, b, tol):
    rho = validate_density(rho, "rho", tol)
    b = validate_hermitian(b, "B", tol)
    if b.shape != rho.shape:
        raise ValidationError("B and rho have different dimensions")
    p, u = np.linalg.eigh(rho)
    p = np.where((p < 0) & (p >= -tol.clamp), 0.0, p)
    p = np.clip(p, 0.0, None)
    bb = u.conj().T @ b @ u
    return p, u, bb


def _check_support(bb, mask, tol, what="B"):
    if np.any(mask):
        off = max_abs(bb[mask])
        if off > tol.support:
            raise SupportError(f"{what} has weight {off:.3e} outside the support of rho")


def sld_and_fisher(rho, b, tol: Tolerances = TOL):
    """Symmetric logarithmic derivative of ``B`` at ``rho`` and ``J = Tr L^2 rho``.

    Blocks where ``p_i + p_j = 0`` must vanish in ``B``; ``L`` is set to zero
    there (the canonical choice when the SLD is not unique).
    """
    p, u, bb = _eigenframe(rho, b, tol)
    s = p[:, None] + p[None, :]
    dead = s <= tol.zero
    _check_support(bb, dead, tol)
    lp = np.zeros_like(bb)
    lp[~dead] = 2.0 * bb[~dead] / s[~dead]
    sld = u @ lp @ u.conj().T
    sld = 0.5 * (sld + sld.conj().T)
    j = float(np.sum(np.abs(lp) ** 2 * p[:, None]).real)
    return sld, j


def _log_mean_kernel(p, tol):
    """Entries ``(log p_i - log p_j)/(p_i - p_j)`` with the ``1/p_i`` limit on degenerate pairs."""
    pi, pj = p[:, None], p[None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        lp = np.log(p)
        k = (lp[:, None] - lp[None, :]) / (pi - pj)
        degen = np.abs(pi - pj) <= tol.degenerate
        k = np.where(degen, 1.0 / np.maximum(pi, pj), k)
    return k


def kmb_and_fisher(rho, b, tol: Tolerances = TOL):
    """Kubo-Mori-Bogoljubov logarithmic derivative and ``J~ = Tr B L~``.

    Coupling between the support and the kernel of ``rho`` makes the KMB
    information infinite (pure-state families); ``J~ = inf`` is returned in
    that case and ``L~`` is restricted to the support block.
    """
    p, u, bb = _eigenframe(rho, b, tol)
    live = p > tol.zero
    both = live[:, None] & live[None, :]
    neither = ~live[:, None] & ~live[None, :]
    _check_support(bb, neither, tol)
    mixed = ~both & ~neither
    k = np.zeros(bb.shape)
    if np.any(both):
        idx = np.ix_(live, live)
        k[idx] = _log_mean_kernel(p[live], tol)
    lp = np.where(both, bb * k, 0.0)
    lt = u @ lp @ u.conj().T
    lt = 0.5 * (lt + lt.conj().T)
    if np.any(mixed) and max_abs(bb[mixed]) > tol.support:
        return lt, math.inf
    j = float(np.sum(np.conj(bb) * lp).real)
    return lt, j


def kmb_quadrature_residual(rho, b, kmb_operator, points: int = 64) -> float:
    """``max|int_0^1 rho^t L~ rho^(1-t) dt - B|`` by Gauss-Legendre quadrature.

    Independent check of the closed-form KMB kernel.
    """
    rho = np.asarray(rho, dtype=complex)
    p, u = np.linalg.eigh(0.5 * (rho + rho.conj().T))
    p = np.clip(p, 0.0, None)
    lp = u.conj().T @ np.asarray(kmb_operator, dtype=complex) @ u
    x, w = np.polynomial.legendre.leggauss(points)
    t = 0.5 * (x + 1.0)
    w = 0.5 * w
    acc = np.zeros(lp.shape)
    for tk, wk in zip(t, w):
        acc = acc + wk * np.outer(p**tk, p ** (1.0 - tk))
    integral = u @ (lp * acc) @ u.conj().T
    return max_abs(integral - np.asarray(b))


def rld_fisher(rho, b, tol: Tolerances = TOL) -> float:
    """``Tr B rho^-1 B``; requires a strictly positive state."""
    p, u, bb = _eigenframe(rho, b, tol)
    if p[0] < tol.rank:
        raise RankError(f"RLD Fisher information needs rho > 0 (min eigenvalue {p[0]:.3e})")
    return float(np.sum(np.abs(bb) ** 2 / p[:, None]).real)


def fisher_report(rho, b, with_rld: bool = True, tol: Tolerances = TOL) -> FisherReport:
    sld, j = sld_and_fisher(rho, b, tol)
    kmb, jt = kmb_and_fisher(rho, b, tol)
    jr = None
    if with_rld:
        try:
            jr = rld_fisher(rho, b, tol)
        except RankError:
            jr = None
    return FisherReport(j, jt, jr, sld, kmb)


def relative_entropy(rho, sigma, tol: Tolerances = TOL) -> float:
    """``D(rho||sigma) = Tr rho (log rho - log sigma)``; ``inf`` when the support condition fails."""
    rho = validate_density(rho, "rho", tol)
    sigma = validate_density(sigma, "sigma", tol)
    if rho.shape != sigma.shape:
        raise ValidationError("states have different dimensions")
    q, v = np.linalg.eigh(sigma)
    kernel = q <= tol.zero
    if np.any(kernel):
        vk = v[:, kernel]
        leak = float(np.real(np.trace(vk.conj().T @ rho @ vk)))
        if leak > tol.support:
            return math.inf
    p = np.linalg.eigvalsh(rho)
    p = p[p > tol.zero]
    neg_entropy = float(np.sum(p * np.log(p)))
    log_sigma = spectral_apply(sigma, np.log, "skip-zero", tol)
    cross = float(np.real(np.trace(rho @ log_sigma)))
    return neg_entropy - cross


def bures_distance(rho, sigma, tol: Tolerances = TOL) -> float:
    f = trace_norm_product(rho, sigma, tol)
    return math.sqrt(max(0.0, 2.0 * (1.0 - f)))


def affinity(rho, sigma, tol: Tolerances = TOL) -> float:
    """Quantum affinity ``-8 log Tr|sqrt(rho) sqrt(sigma)|``."""
    f = trace_norm_product(rho, sigma, tol)
    if f <= 0.0:
        return math.inf
    return -8.0 * math.log(f)


@dataclass(frozen=True)
class LimitRow:
    eps: float
    kl_ratio: float       # 2 D(rho_{theta+eps} || rho_theta) / eps^2
    bures_ratio: float    # 4 b^2(rho_theta, rho_{theta+eps}) / eps^2
    affinity_ratio: float  # I(rho_theta || rho_{theta+eps}) / eps^2
    j_sld: float
    j_kmb: float

    def as_dict(self):
        return {
            "eps": self.eps,
            "2D/eps^2": self.kl_ratio,
            "4b^2/eps^2": self.bures_ratio,
            "I/eps^2": self.affinity_ratio,
            "J": self.j_sld,
            "J_kmb": self.j_kmb,
        }


def limit_table(family, theta: float, eps_grid, tol: Tolerances = TOL) -> list[LimitRow]:
    """Finite-difference ratios whose ``eps -> 0`` limits are the Fisher informations."""
    eps_grid = [float(e) for e in eps_grid]
    if any(e <= 0 for e in eps_grid):
        raise DomainError("eps grid must be positive")
    for e in eps_grid:
        for t in (theta - e, theta + e):
            if not family.contains(t):
                raise DomainError(f"theta {t!r} lies outside the parameter domain")
    rho = family.state(theta)
    b = family.derivative(theta)
    _, j = sld_and_fisher(rho, b, tol)
    _, jt = kmb_and_fisher(rho, b, tol)
    rows = []
    for e in eps_grid:
        shifted = family.state(theta + e)
        d = relative_entropy(shifted, rho, tol)
        bb = bures_distance(rho, shifted, tol)
        aff = affinity(rho, shifted, tol)
        rows.append(LimitRow(e, 2.0 * d / e**2, 4.0 * bb**2 / e**2, aff / e**2, j, jt))
    return rows
