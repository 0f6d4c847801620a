"""Total-spin decomposition of ``(C^2)^{(x)n}`` and the measurements built on it.

Blocks are produced by coupling one qubit at a time (Condon-Shortley
phases, the new qubit as the rightmost tensor factor, ``|0> = spin up``).
Each block is stored as a real isometry ``V`` with orthonormal columns
``|j, m>`` ordered ``m = j, j-1, ..., -j``; the block projector is ``V V^T``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.optimize import minimize_scalar

from .config import TOL, Tolerances
from .errors import CapacityError, StructureError, ValidationError
from .linalg import apply_tensor_power, expect_tensor_power, spectral_apply, validate_density
from .measurement import POVM, PVM, classical_kl, faithful_povm, is_refinement, pinching
from .qmetrics import relative_entropy

__all__ = [
    "IrrepPVM",
    "RefinedPVM",
    "qubit_irrep_pvm",
    "refine_with_state",
    "refine_with_density",
    "refined_pvm",
    "sandwich_kl",
    "sandwich_row",
    "pinching_loss",
    "pythagoras_residual",
    "operator_dominance_check",
    "dominance_power_check",
    "markov_bound_commuting",
    "markov_bound_pinched",
    "chernoff_bounds",
    "chernoff_exact",
    "MAdaptiveBlockPOVM",
    "madaptive_block_povm",
    "MAX_QUBITS",
]

MAX_QUBITS = 12


@dataclass(frozen=True)
class IrrepPVM:
    n: int
    labels: tuple          # (2j, multiplicity index) per block
    isometries: tuple      # real (2^n, 2j+1) arrays

    @property
    def dims(self) -> tuple:
        return tuple(v.shape[1] for v in self.isometries)

    @property
    def w(self) -> int:
        return max(self.dims)

    def projector(self, i: int) -> np.ndarray:
        v = self.isometries[i]
        return (v @ v.T).astype(complex)

    def as_pvm(self) -> PVM:
        els = np.stack([self.projector(i) for i in range(len(self.isometries))])
        return PVM(els, np.array([lab[0] / 2 for lab in self.labels]))


@lru_cache(maxsize=None)
def _coupled_blocks(n: int):
    """Map coupling path (tuple of 2j after each qubit) -> isometry, for ``n`` qubits."""
    if n == 1:
        return {(1,): np.eye(2)}
    prev = _coupled_blocks(n - 1)
    out = {}
    for path, v in prev.items():
        tj = path[-1]            # 2j
        j = tj / 2.0
        rows = v.shape[0]
        for tjn in ([tj + 1, tj - 1] if tj > 0 else [1]):
            jn = tjn / 2.0
            w = np.zeros((2 * rows, tjn + 1))
            for b in range(tjn + 1):
                mm = jn - b
                col = np.zeros(2 * rows)
                # |j, mm - 1/2> (x) |up>: column index of m = mm - 1/2 in the old block
                a_up = int(round(j - (mm - 0.5)))
                a_dn = int(round(j - (mm + 0.5)))
                if tjn == tj + 1:
                    c_up = math.sqrt((j + mm + 0.5) / (2 * j + 1))
                    c_dn = math.sqrt((j - mm + 0.5) / (2 * j + 1))
                else:
                    c_up = -math.sqrt((j - mm + 0.5) / (2 * j + 1))
                    c_dn = math.sqrt((j + mm + 0.5) / (2 * j + 1))
                if 0 <= a_up <= tj and c_up != 0.0:
                    col[0::2] += c_up * v[:, a_up]
                if 0 <= a_dn <= tj and c_dn != 0.0:
                    col[1::2] += c_dn * v[:, a_dn]
                w[:, b] = col
            out[path + (tjn,)] = w
    return out


@lru_cache(maxsize=None)
def qubit_irrep_pvm(n: int) -> IrrepPVM:
    """Irreducible decomposition of ``n`` qubits by sequential coupling.

    Blocks are ordered by decreasing total spin, then lexicographically by
    coupling path. ``n = 1`` gives the trivial one-block decomposition.
    """
    if not isinstance(n, (int, np.integer)) or n < 1:
        raise ValidationError(f"number of qubits must be a positive integer, got {n!r}")
    if n > MAX_QUBITS:
        raise CapacityError(f"n = {n} exceeds the supported maximum of {MAX_QUBITS} qubits")
    blocks = _coupled_blocks(int(n))
    paths = sorted(blocks, key=lambda p: (-p[-1], p))
    labels, isos, seen = [], [], {}
    for p in paths:
        idx = seen.get(p[-1], 0)
        seen[p[-1]] = idx + 1
        labels.append((p[-1], idx))
        isos.append(blocks[p])
    return IrrepPVM(int(n), tuple(labels), tuple(isos))


@dataclass(frozen=True)
class RefinedPVM:
    """Rank-one PVM refining an :class:`IrrepPVM` and the eigenprojections of ``rho^{(x)n}``.

    ``vectors[:, i]`` is the i-th outcome vector; ``block[i]`` its irrep block
    and ``eigenvalues[i]`` its eigenvalue under the base state.
    """

    n: int
    vectors: np.ndarray
    block: np.ndarray
    eigenvalues: np.ndarray
    base_state: np.ndarray
    base_theta: float | None = None

    @property
    def w(self) -> int:
        return 1

    def probabilities(self, rho) -> np.ndarray:
        """Outcome law under ``rho^{(x)n}`` (no ``2^n x 2^n`` matrix is formed)."""
        rho = np.asarray(rho, dtype=complex)
        p = expect_tensor_power(rho, self.n, self.vectors)
        p = np.clip(p, 0.0, None)
        return p / p.sum()

    def as_pvm(self) -> PVM:
        v = self.vectors
        els = np.einsum("ai,bi->iab", v, v.conj())
        return PVM(els, np.arange(v.shape[1], dtype=float))


def _canonical_group(vecs: np.ndarray, tol: float) -> np.ndarray:
    """Deterministic orthonormal basis of span(vecs): Gram-Schmidt of the projector applied to e_k."""
    proj = vecs @ vecs.conj().T
    basis = []
    for k in range(proj.shape[0]):
        c = proj[:, k].copy()
        for b in basis:
            c = c - b * (b.conj() @ c)
        nrm = np.linalg.norm(c)
        if nrm > tol:
            basis.append(c / nrm)
        if len(basis) == vecs.shape[1]:
            break
    return np.stack(basis, axis=1)


def _fix_phase(v: np.ndarray, tol: float) -> np.ndarray:
    idx = np.flatnonzero(np.abs(v) > tol)
    if idx.size:
        v = v * (np.abs(v[idx[0]]) / v[idx[0]])
    return v


def refine_with_state(e: IrrepPVM, family, theta: float, tol: Tolerances = TOL) -> RefinedPVM:
    """``E^n_theta``: diagonalise ``rho_theta^{(x)n}`` inside every irrep block of ``e``."""
    if family.dim != 2:
        raise ValidationError("refinement is implemented for qubit families only")
    return refine_with_density(e, family.state(theta), float(theta), tol)


def refine_with_density(e: IrrepPVM, rho, base_theta: float | None = None, tol: Tolerances = TOL) -> RefinedPVM:
    """Diagonalise ``rho^{(x)n}`` inside every irrep block.

    Within a block, vectors are sorted by decreasing eigenvalue; degenerate
    eigenspaces get a canonical basis so the result is bit-reproducible.
    """
    rho = validate_density(rho, tol=tol)
    if rho.shape != (2, 2):
        raise ValidationError("refinement is implemented for qubits only")
    n = e.n
    cols, blocks, evals = [], [], []
    for bi, v in enumerate(e.isometries):
        vc = v.astype(complex)
        a = vc.conj().T @ apply_tensor_power(rho, n, vc)
        a = 0.5 * (a + a.conj().T)
        w, u = np.linalg.eigh(a)
        order = np.argsort(-w, kind="stable")
        w, u = w[order], u[:, order]
        scale = max(1.0, float(np.max(np.abs(w))))
        start = 0
        while start < len(w):
            stop = start + 1
            while stop < len(w) and abs(w[stop] - w[start]) <= 1e-10 * scale:
                stop += 1
            grp = u[:, start:stop]
            if stop - start > 1:
                grp = _canonical_group(grp, 1e-8)
            for k in range(grp.shape[1]):
                g = _fix_phase(grp[:, k], 1e-12)
                cols.append(vc @ g)
                blocks.append(bi)
                evals.append(float(np.mean(w[start:stop])))
            start = stop
    return RefinedPVM(n, np.stack(cols, axis=1), np.array(blocks), np.array(evals), rho, base_theta)


_REFINED_CACHE: dict = {}


def refined_pvm(family, theta: float, n: int) -> RefinedPVM:
    """``E^n_theta`` for a qubit family, memoised on ``(family, theta, n)``."""
    key = (id(family), float(theta), int(n))
    hit = _REFINED_CACHE.get(key)
    if hit is None or hit[0] is not family:
        hit = (family, refine_with_state(qubit_irrep_pvm(n), family, theta))
        if len(_REFINED_CACHE) > 256:
            _REFINED_CACHE.clear()
        _REFINED_CACHE[key] = hit
    return hit[1]


def sandwich_kl(family, theta0: float, theta1: float, m: int) -> float:
    """KL between outcome laws of ``E^m_theta1`` under ``theta0`` and ``theta1``."""
    if family.dim != 2:
        raise ValidationError("sandwich_kl requires a qubit family")
    if m < 1 or m > 10:
        raise CapacityError(f"m = {m} outside the supported range 1..10")
    e = refined_pvm(family, theta1, m)
    return classical_kl(e.probabilities(family.state(theta0)), e.probabilities(family.state(theta1)))


def sandwich_row(family, theta0: float, theta1: float, m: int) -> dict:
    d = family.relative_entropy(theta0, theta1)
    return {"m": m, "D": d, "lower": m * d - math.log(m + 1), "value": sandwich_kl(family, theta0, theta1, m),
            "upper": m * d}


# -- pinching lemmas ------------------------------------------------------------

def _check_commutes(e: POVM, rho, tol=1e-8):
    dev = max(float(np.max(np.abs(p @ rho - rho @ p))) for p in e.elements)
    if dev > tol:
        raise StructureError(f"state does not commute with the coarse PVM (deviation {dev:.3e})")


def pinching_loss(e_coarse: PVM, f_fine: PVM, rho) -> float:
    """``D(rho || E_F(rho))`` for ``rho`` commuting with ``e_coarse`` and ``f_fine`` refining it."""
    rho = validate_density(rho)
    is_refinement(e_coarse, f_fine)
    _check_commutes(e_coarse, rho)
    return relative_entropy(rho, pinching(f_fine, rho))


def pythagoras_residual(f: PVM, rho, sigma) -> float:
    """``D(rho||sigma) - D(E_F rho || E_F sigma) - D(rho || E_F rho)``; zero when ``F`` diagonalises ``sigma``."""
    return (relative_entropy(rho, sigma) - relative_entropy(pinching(f, rho), pinching(f, sigma))
            - relative_entropy(rho, pinching(f, rho)))


def operator_dominance_check(e_coarse: PVM, m_fine: PVM, rho) -> float:
    """Smallest eigenvalue of ``w(E) E_M(rho) - rho``."""
    rho = validate_density(rho)
    is_refinement(e_coarse, m_fine)
    _check_commutes(e_coarse, rho)
    gap = e_coarse.w * pinching(m_fine, rho) - rho
    return float(np.linalg.eigvalsh(0.5 * (gap + gap.conj().T))[0])


def dominance_power_check(e_coarse: PVM, m_fine: PVM, rho, t: float = 0.5) -> float:
    """Smallest eigenvalue of ``rho^-t - w^-t E_M(rho)^-t`` for full-rank ``rho`` and ``0 <= t <= 1``."""
    rho = validate_density(rho)
    is_refinement(e_coarse, m_fine)
    _check_commutes(e_coarse, rho)
    inv = lambda x: x ** (-t)
    gap = spectral_apply(rho, inv) - e_coarse.w ** (-t) * spectral_apply(pinching(m_fine, rho), inv)
    return float(np.linalg.eigvalsh(gap)[0])


# -- Chernoff-type bounds ----------------------------------------------------------

def _sup_concave(obj, lo: float, hi: float) -> float:
    """Maximum of a concave scalar objective on ``[lo, hi]``: bounded Brent search plus endpoints."""
    res = minimize_scalar(lambda t: -obj(t), bounds=(lo, hi), method="bounded",
                          options={"xatol": 1e-10, "maxiter": 500})
    return max(-res.fun, obj(lo), obj(hi))


def _log_tr_power(rho, sigma, t: float) -> float:
    """``log Tr rho sigma^t`` (``t`` may be negative; ``sigma`` must then be full rank)."""
    p, u = np.linalg.eigh(sigma)
    p = np.clip(p, 0.0, None)
    diag = np.real(np.einsum("ai,ab,bi->i", u.conj(), rho, u))
    live = p > TOL.zero
    if t < 0 and np.any(~live & (diag > TOL.support)):
        return math.inf
    val = float(np.sum(diag[live] * p[live] ** t)) if t != 0 else float(np.sum(diag))
    return math.log(val) if val > 0 else -math.inf


def markov_bound_commuting(rho, sigma, a: float, t_max: float = 50.0) -> float:
    """Bound on ``P_rho{log P_sigma(w) >= a}`` for a rank-one PVM commuting with ``sigma``."""
    return min(1.0, math.exp(-_sup_concave(lambda t: a * t - _log_tr_power(rho, sigma, t), 0.0, t_max)))


def markov_bound_pinched(rho, rho_p, a: float, w: int) -> float:
    """Bound on ``P_rho{-log P_rho'(w) >= a}`` for a rank-one PVM refining a coarse PVM of width ``w``."""
    return min(1.0, math.exp(-_sup_concave(lambda t: (a - math.log(w)) * t - _log_tr_power(rho, rho_p, -t), 0.0, 1.0)))


def _tr_rho_log(rho, sigma) -> float:
    return float(np.real(np.trace(rho @ spectral_apply(sigma, np.log))))


def chernoff_bounds(family, theta0: float, theta1: float, theta2: float, delta: float, n: int,
                  t_max: float = 50.0) -> tuple[float, float]:
    """Chernoff bounds ``(b1, b2)`` for the two log-likelihood deviation events of ``E^n_theta1``.

    ``b1`` bounds ``P{-(1/n) log P_theta2(w) + Tr rho0 log rho2 >= delta}``;
    ``b2`` bounds ``P{(1/n) log P_theta1(w) - Tr rho0 log rho1 >= delta}``.
    """
    if family.dim != 2:
        raise ValidationError("chernoff_bounds requires a qubit family")
    if delta <= 0:
        raise ValidationError("delta must be positive")
    k = family.dim
    r0, r1, r2 = (family.state(t) for t in (theta0, theta1, theta2))
    c2 = _tr_rho_log(r0, r2)
    c1 = _tr_rho_log(r0, r1)
    slack = (k + 1) * math.log(n + 1) / n

    def obj1(t):
        return (delta - c2) * t - t * slack - _log_tr_power(r0, r2, -t)

    def obj2(t):
        return (delta + c1) * t - _log_tr_power(r0, r1, t)

    s1 = _sup_concave(obj1, 0.0, 1.0)
    s2 = _sup_concave(obj2, 0.0, t_max)
    # t = 0 is feasible, so each sup is >= 0 up to rounding
    return min(1.0, math.exp(-n * s1)), min(1.0, math.exp(-n * s2))


def chernoff_exact(family, theta0: float, theta1: float, theta2: float, delta: float, n: int) -> tuple[float, float]:
    """Exact probabilities of the two events bounded by :func:`chernoff_bounds`, by enumerating outcomes."""
    r0, r1, r2 = (family.state(t) for t in (theta0, theta1, theta2))
    e = refined_pvm(family, theta1, n)
    p0, p1, p2 = (e.probabilities(r) for r in (r0, r1, r2))
    with np.errstate(divide="ignore"):
        ev1 = -np.log(p2) / n + _tr_rho_log(r0, r2) >= delta
        ev2 = np.log(p1) / n - _tr_rho_log(r0, r1) >= delta
    return float(p0[ev1].sum()), float(p0[ev2].sum())


# -- block measurement of the m-adaptive construction ---------------------------------

@dataclass(frozen=True)
class MAdaptiveBlockPOVM:
    """Disjoint combination ``delta * (M_f x m) + (1 - delta) * E^m_theta0`` on ``m`` qubits.

    Outcomes ``0 .. 6^m - 1`` are faithful-POVM strings (first copy most
    significant); the remaining ``2^m`` are the refined-PVM outcomes.
    """

    family: object
    theta0: float
    m: int
    delta: float

    @property
    def faithful(self) -> POVM:
        return faithful_povm(2)

    @property
    def refined(self) -> RefinedPVM:
        return refined_pvm(self.family, self.theta0, self.m)

    @property
    def n_outcomes(self) -> int:
        return len(self.faithful) ** self.m + 2 ** self.m

    def faithful_probabilities(self, rho) -> np.ndarray:
        return self.faithful.probabilities(rho)

    def probabilities(self, rho) -> np.ndarray:
        f = self.faithful_probabilities(rho)
        prod = np.ones(1)
        for _ in range(self.m):
            prod = np.multiply.outer(prod, f).reshape(-1)
        return np.concatenate([self.delta * prod, (1 - self.delta) * self.refined.probabilities(rho)])

    def kl(self, theta: float, theta_p: float) -> float:
        """Block KL from the separable structure: ``delta m D^Mf + (1 - delta) D^E``."""
        rho, sig = self.family.state(theta), self.family.state(theta_p)
        d_f = classical_kl(self.faithful_probabilities(rho), self.faithful_probabilities(sig))
        d_e = classical_kl(self.refined.probabilities(rho), self.refined.probabilities(sig))
        return self.delta * self.m * d_f + (1 - self.delta) * d_e

    def refined_kl(self, theta: float, theta_p: float) -> float:
        rho, sig = self.family.state(theta), self.family.state(theta_p)
        return classical_kl(self.refined.probabilities(rho), self.refined.probabilities(sig))

    def materialize(self) -> POVM:
        """Explicit POVM on ``(C^2)^{(x)m}``; only sensible for small ``m``."""
        if self.m > 4:
            raise CapacityError("explicit block POVM limited to m <= 4")
        f = self.faithful
        els = []
        for idx in np.ndindex(*([len(f)] * self.m)):
            op = np.ones((1, 1), dtype=complex)
            for i in idx:
                op = np.kron(op, f.elements[i])
            els.append(self.delta * op)
        v = self.refined.vectors
        for i in range(v.shape[1]):
            els.append((1 - self.delta) * np.outer(v[:, i], v[:, i].conj()))
        return POVM(np.stack(els), np.arange(len(els), dtype=float))


def madaptive_block_povm(family, theta0: float, m: int, delta: float) -> MAdaptiveBlockPOVM:
    if family.dim != 2:
        raise ValidationError("block POVM requires a qubit family")
    if not 0.0 < delta < 1.0:
        raise ValidationError("delta must lie in (0, 1)")
    if m < 1 or m > 8:
        raise CapacityError(f"block size m = {m} outside 1..8")
    return MAdaptiveBlockPOVM(family, float(theta0), int(m), float(delta))
