"""Finite POVMs and PVMs, induced distributions, pinching and classical quantities.

A POVM is stored as a stacked array of elements ``(K, d, d)`` plus one real
label per outcome. Outcomes are identified by their index; labels may repeat
(a disjoint combination keeps both copies of a shared label distinct).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from itertools import product

import numpy as np

from .config import TOL, Tolerances
from .errors import StructureError, ValidationError
from .linalg import max_abs, validate_density, validate_hermitian
from .qmetrics import sld_and_fisher

__all__ = [
    "POVM",
    "PVM",
    "OutcomeDistribution",
    "spectral_pvm",
    "trivial_povm",
    "distribution",
    "local_unbiasedness_residuals",
    "pinching",
    "disjoint_random_combination",
    "faithful_povm",
    "gell_mann_basis",
    "sld_estimator_pvm",
    "classical_kl",
    "classical_fisher",
    "hellinger_affinity",
    "induced_classical_quantities",
    "separable_kl_decomposition",
    "product_distribution",
    "povm_to_json",
    "povm_from_json",
]


@dataclass(frozen=True)
class POVM:
    elements: np.ndarray
    values: np.ndarray
    tol: Tolerances = field(default=TOL, repr=False, compare=False)

    def __post_init__(self):
        els = np.asarray(self.elements, dtype=complex)
        if els.ndim != 3 or els.shape[1] != els.shape[2] or els.shape[0] == 0:
            raise ValidationError(f"POVM elements must have shape (K, d, d), got {els.shape}")
        vals = np.asarray(self.values, dtype=float).reshape(-1)
        if vals.size != els.shape[0]:
            raise ValidationError("one outcome value per element is required")
        if not np.all(np.isfinite(els)) or not np.all(np.isfinite(vals)):
            raise ValidationError("POVM has non-finite entries")
        dev = max_abs(els - np.conj(np.swapaxes(els, 1, 2)))
        if dev > self.tol.hermitian * (1 + max_abs(els)):
            raise ValidationError(f"POVM element not Hermitian (deviation {dev:.3e})")
        els = 0.5 * (els + np.conj(np.swapaxes(els, 1, 2)))
        lo = float(np.min(np.linalg.eigvalsh(els)))
        if lo < -self.tol.psd:
            raise ValidationError(f"POVM element not PSD (min eigenvalue {lo:.3e})")
        resid = max_abs(els.sum(axis=0) - np.eye(els.shape[1]))
        if resid > self.tol.completeness:
            raise ValidationError(f"POVM elements do not sum to identity (residual {resid:.3e})")
        object.__setattr__(self, "elements", els)
        object.__setattr__(self, "values", vals)

    @property
    def dim(self) -> int:
        return self.elements.shape[1]

    def __len__(self) -> int:
        return self.elements.shape[0]

    def probabilities(self, rho) -> np.ndarray:
        return distribution(self, rho).probabilities

    def ranks(self) -> np.ndarray:
        return np.array([int(np.sum(np.linalg.eigvalsh(e) > self.tol.rank)) for e in self.elements])


@dataclass(frozen=True)
class PVM(POVM):
    """POVM of mutually orthogonal projectors."""

    def __post_init__(self):
        super().__post_init__()
        # idempotent elements summing to I are automatically mutually orthogonal
        dev = max(max_abs(e @ e - e) for e in self.elements)
        if dev > self.tol.orthogonality:
            raise ValidationError(f"PVM elements are not orthogonal projectors (deviation {dev:.3e})")

    @property
    def w(self) -> int:
        """Largest projector rank."""
        return int(max(round(float(np.trace(e).real)) for e in self.elements))


@dataclass(frozen=True)
class OutcomeDistribution:
    probabilities: np.ndarray
    values: np.ndarray

    @property
    def mean(self) -> float:
        return float(self.probabilities @ self.values)

    @property
    def variance(self) -> float:
        return float(self.probabilities @ (self.values - self.mean) ** 2)


def spectral_pvm(x, tol: Tolerances = TOL) -> PVM:
    """Spectral measure of a Hermitian operator; eigenvalues within ``tol.merge`` share a projector."""
    x = validate_hermitian(x, "X", tol)
    w, u = np.linalg.eigh(x)
    groups = [[0]]
    for i in range(1, len(w)):
        if w[i] - w[groups[-1][0]] <= tol.merge * (1 + abs(w[i])):
            groups[-1].append(i)
        else:
            groups.append([i])
    els, vals = [], []
    for g in groups:
        v = u[:, g]
        els.append(v @ v.conj().T)
        vals.append(float(np.mean(w[g])))
    return PVM(np.stack(els), np.array(vals), tol)


def trivial_povm(dim: int, value: float = 0.0) -> PVM:
    return PVM(np.eye(dim, dtype=complex)[None], np.array([value]))


def distribution(m: POVM, rho, tol: Tolerances = TOL) -> OutcomeDistribution:
    """``p_i = Tr rho M_i``, small negatives clamped and the vector renormalised."""
    rho = validate_density(rho, "rho", tol)
    if rho.shape[0] != m.dim:
        raise ValidationError(f"state dimension {rho.shape[0]} does not match POVM dimension {m.dim}")
    p = np.real(np.einsum("ab,iba->i", rho, m.elements))
    if np.min(p) < -tol.negative_probability:
        raise ValidationError(f"negative outcome probability {np.min(p):.3e}")
    p = np.clip(p, 0.0, None)
    s = p.sum()
    if abs(s - 1.0) > tol.probability:
        raise ValidationError(f"outcome probabilities sum to {s!r}")
    return OutcomeDistribution(p / s, m.values.copy())


def local_unbiasedness_residuals(m: POVM, family, theta0: float) -> tuple[float, float]:
    """``(|sum x_i Tr(drho M_i) - 1|, |sum x_i Tr(rho M_i) - theta0|)`` at ``theta0``."""
    rho = family.state(theta0)
    b = family.derivative(theta0)
    db = np.real(np.einsum("ab,iba->i", b, m.elements))
    p = distribution(m, rho).probabilities
    return abs(float(m.values @ db) - 1.0), abs(float(m.values @ p) - theta0)


def pinching(e: POVM, rho) -> np.ndarray:
    """``sum_i E_i rho E_i``."""
    rho = np.asarray(rho, dtype=complex)
    if rho.shape[0] != e.dim:
        raise ValidationError("dimension mismatch in pinching")
    out = np.einsum("iab,bc,icd->ad", e.elements, rho, e.elements)
    return 0.5 * (out + out.conj().T)


def disjoint_random_combination(m1: POVM, m2: POVM, lam: float) -> POVM:
    """Perform ``m1`` with probability ``lam`` and ``m2`` otherwise, recording which was used."""
    if not 0.0 < lam < 1.0:
        raise ValidationError(f"mixing weight must lie in (0, 1), got {lam!r}")
    if m1.dim != m2.dim:
        raise ValidationError("POVMs act on different dimensions")
    els = np.concatenate([lam * m1.elements, (1.0 - lam) * m2.elements])
    return POVM(els, np.concatenate([m1.values, m2.values]))


def gell_mann_basis(k: int) -> list[np.ndarray]:
    """Generalized Gell-Mann matrices: ``k^2 - 1`` traceless Hermitian operators (Pauli for ``k=2``)."""
    mats = []
    for a in range(k):
        for b in range(a + 1, k):
            s = np.zeros((k, k), dtype=complex)
            s[a, b] = s[b, a] = 1.0
            mats.append(s)
    for a in range(k):
        for b in range(a + 1, k):
            s = np.zeros((k, k), dtype=complex)
            s[a, b], s[b, a] = -1j, 1j
            mats.append(s)
    for l in range(1, k):
        d = np.zeros(k)
        d[:l] = 1.0
        d[l] = -l
        mats.append(np.diag(d * math.sqrt(2.0 / (l * (l + 1)))).astype(complex))
    return mats


def faithful_povm(k: int) -> POVM:
    """Uniform disjoint combination of the spectral PVMs of the Gell-Mann basis.

    Outcome probabilities determine every ``Tr rho L_i``, hence ``rho`` itself.
    """
    if k < 2:
        raise ValidationError("faithful POVM needs dimension >= 2")
    basis = gell_mann_basis(k)
    w = 1.0 / len(basis)
    els, vals = [], []
    for g in basis:
        pvm = spectral_pvm(g)
        els.extend(w * pvm.elements)
        vals.extend(pvm.values)
    return POVM(np.stack(els), np.array(vals))


def sld_estimator_pvm(family, theta0: float) -> PVM:
    """Spectral PVM of ``L/J + theta0``; its mean at ``theta0`` is ``theta0`` and its variance ``1/J``."""
    rho = family.state(theta0)
    sld, j = sld_and_fisher(rho, family.derivative(theta0))
    if j <= 0:
        raise ValidationError("SLD Fisher information vanishes; estimator undefined")
    return spectral_pvm(sld / j + theta0 * np.eye(rho.shape[0]))


# -- classical quantities ------------------------------------------------------

def classical_kl(p, q) -> float:
    """``sum p log(p/q)``; zero-probability terms of ``p`` drop, ``p>0=q`` gives ``inf``."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    live = p > 0
    if np.any(q[live] <= 0):
        return math.inf
    return float(np.sum(p[live] * (np.log(p[live]) - np.log(q[live]))))


def classical_fisher(p, dp, tol: Tolerances = TOL) -> float:
    p = np.asarray(p, dtype=float)
    dp = np.asarray(dp, dtype=float)
    live = p > tol.zero
    return float(np.sum(dp[live] ** 2 / p[live]))


def hellinger_affinity(p, q) -> float:
    """Classical affinity ``-8 log sum sqrt(p q)``."""
    s = float(np.sum(np.sqrt(np.asarray(p) * np.asarray(q))))
    return math.inf if s <= 0 else -8.0 * math.log(s)


def induced_classical_quantities(m: POVM, family, theta: float, theta_p: float) -> dict:
    p = distribution(m, family.state(theta)).probabilities
    q = distribution(m, family.state(theta_p)).probabilities
    dp = np.real(np.einsum("ab,iba->i", family.derivative(theta), m.elements))
    return {
        "fisher": classical_fisher(p, dp),
        "kl": classical_kl(p, q),
        "hellinger_affinity": hellinger_affinity(p, q),
    }


def separable_kl_decomposition(per_copy_povms, theta: float, theta_p: float, family) -> float:
    """KL between product outcome laws of per-copy POVMs, summed copy by copy."""
    rho, sigma = family.state(theta), family.state(theta_p)
    total = 0.0
    for m in per_copy_povms:
        total += classical_kl(distribution(m, rho).probabilities, distribution(m, sigma).probabilities)
    return total


def product_distribution(per_copy_povms, rho) -> np.ndarray:
    """Joint law over the product outcome space, first copy most significant."""
    out = np.ones(1)
    for m in per_copy_povms:
        out = np.multiply.outer(out, distribution(m, rho).probabilities).reshape(-1)
    return out


def product_outcomes(per_copy_povms):
    return list(product(*[range(len(m)) for m in per_copy_povms]))


# -- serialization ------------------------------------------------------------

def povm_to_json(m: POVM) -> str:
    els = []
    for e in m.elements:
        flat = np.empty(2 * e.size)
        flat[0::2] = e.real.reshape(-1)
        flat[1::2] = e.imag.reshape(-1)
        els.append(flat.tolist())
    return json.dumps({"dim": m.dim, "values": m.values.tolist(), "elements": els})


def povm_from_json(text: str) -> POVM:
    try:
        obj = json.loads(text)
        d = int(obj["dim"])
        values = np.asarray(obj["values"], dtype=float)
        els = []
        for flat in obj["elements"]:
            flat = np.asarray(flat, dtype=float)
            if flat.size != 2 * d * d:
                raise ValidationError(f"element has {flat.size} numbers, expected {2 * d * d}")
            els.append((flat[0::2] + 1j * flat[1::2]).reshape(d, d))
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ValidationError):
            raise
        raise ValidationError(f"malformed POVM JSON: {exc}") from exc
    return POVM(np.stack(els), values)


def is_refinement(coarse: POVM, fine: POVM, tol: Tolerances = TOL) -> np.ndarray:
    """Index of the coarse element containing each fine element; ``StructureError`` if none does."""
    overlap = np.real(np.einsum("iab,jba->ij", fine.elements, coarse.elements))
    traces = np.real(np.einsum("iaa->i", fine.elements))
    owner = np.argmax(overlap, axis=1)
    ok = np.abs(overlap[np.arange(len(fine)), owner] - traces) <= 1e-8 * (1 + traces)
    if not np.all(ok):
        raise StructureError("fine PVM is not a refinement of the coarse PVM")
    return owner
