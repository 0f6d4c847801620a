"""Dense Hermitian linear algebra for small quantum systems.

Matrices are plain complex ``numpy`` arrays. The ``validate_*`` helpers
check the invariants of the operator types used throughout the package and
return a cleaned copy (exactly Hermitian, complex dtype).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .config import TOL, Tolerances
from .errors import CapacityError, DomainError, ValidationError

__all__ = [
    "SpectralDecomposition",
    "validate_matrix",
    "validate_hermitian",
    "validate_density",
    "eig_hermitian",
    "spectral_apply",
    "trace_norm_product",
    "tensor_power",
    "kron_all",
    "apply_tensor_power",
    "expect_tensor_power",
    "random_hermitian",
    "random_density",
    "random_unitary",
    "max_abs",
]


def max_abs(a) -> float:
    return float(np.max(np.abs(a))) if np.size(a) else 0.0


def validate_matrix(a, name: str = "matrix") -> np.ndarray:
    a = np.asarray(a, dtype=complex)
    if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] == 0:
        raise ValidationError(f"{name} must be a non-empty square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValidationError(f"{name} has non-finite entries")
    return a


def validate_hermitian(a, name: str = "operator", tol: Tolerances = TOL) -> np.ndarray:
    """Return ``(a + a^dagger)/2`` after checking ``a`` is Hermitian within tolerance."""
    a = validate_matrix(a, name)
    scale = 1.0 + max_abs(a)
    dev = max_abs(a - a.conj().T)
    if dev > tol.hermitian * scale:
        raise ValidationError(f"{name} is not Hermitian (max deviation {dev:.3e})")
    return 0.5 * (a + a.conj().T)


def validate_density(rho, name: str = "state", tol: Tolerances = TOL) -> np.ndarray:
    rho = validate_hermitian(rho, name, tol)
    tr = float(np.trace(rho).real)
    if abs(tr - 1.0) > tol.trace:
        raise ValidationError(f"{name} has trace {tr!r}, expected 1")
    lo = float(np.linalg.eigvalsh(rho)[0])
    if lo < -tol.psd:
        raise ValidationError(f"{name} is not positive semidefinite (min eigenvalue {lo:.3e})")
    return rho


@dataclass(frozen=True)
class SpectralDecomposition:
    """Eigenvalues in ascending order with the matching unitary of eigenvectors (columns)."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    @property
    def dim(self) -> int:
        return len(self.eigenvalues)

    def reconstruct(self, values=None) -> np.ndarray:
        vals = self.eigenvalues if values is None else np.asarray(values)
        u = self.eigenvectors
        return (u * vals) @ u.conj().T


def eig_hermitian(a, tol: Tolerances = TOL) -> SpectralDecomposition:
    a = validate_hermitian(a, tol=tol)
    w, u = np.linalg.eigh(a)
    return SpectralDecomposition(w, u)


def _clamped(w: np.ndarray, tol: Tolerances) -> np.ndarray:
    w = w.copy()
    w[(w < 0) & (w >= -tol.clamp)] = 0.0
    return w


def spectral_apply(
    a,
    f: Callable[[np.ndarray], np.ndarray],
    kernel_policy: str = "error",
    tol: Tolerances = TOL,
) -> np.ndarray:
    """Functional calculus ``U f(Lambda) U^dagger``.

    ``kernel_policy="skip-zero"`` evaluates ``f`` only on the support: eigenvalues
    with ``|lambda| <= tol.zero`` are mapped to 0 instead of ``f(lambda)``.
    """
    if kernel_policy not in ("error", "skip-zero"):
        raise ValueError(f"unknown kernel_policy {kernel_policy!r}")
    dec = eig_hermitian(a, tol)
    w = _clamped(dec.eigenvalues, tol)
    out = np.zeros_like(w)
    keep = np.ones_like(w, dtype=bool)
    if kernel_policy == "skip-zero":
        keep = np.abs(w) > tol.zero
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        vals = np.asarray(f(w[keep]), dtype=float)
    bad = ~np.isfinite(vals)
    if np.any(bad):
        raise DomainError(f"function is not finite at eigenvalue {w[keep][bad][0]!r}")
    out[keep] = vals
    res = dec.reconstruct(out)
    return 0.5 * (res + res.conj().T)


def _sqrt_psd(rho: np.ndarray, tol: Tolerances) -> np.ndarray:
    w, u = np.linalg.eigh(rho)
    w = np.sqrt(np.clip(w, 0.0, None))
    return (u * w) @ u.conj().T


def trace_norm_product(rho, sigma, tol: Tolerances = TOL) -> float:
    """``Tr|sqrt(rho) sqrt(sigma)|``, the square root of the Uhlmann fidelity."""
    rho = validate_density(rho, "rho", tol)
    sigma = validate_density(sigma, "sigma", tol)
    if rho.shape != sigma.shape:
        raise ValidationError("states have different dimensions")
    s = np.linalg.svd(_sqrt_psd(rho, tol) @ _sqrt_psd(sigma, tol), compute_uv=False)
    return float(np.sum(s))


def kron_all(mats) -> np.ndarray:
    out = np.ones((1, 1), dtype=complex)
    for m in mats:
        out = np.kron(out, m)
    return out


def tensor_power(rho, n: int, max_dim: int | None = None, tol: Tolerances = TOL) -> np.ndarray:
    rho = validate_density(rho, tol=tol)
    if n < 1:
        raise ValidationError("tensor power needs n >= 1")
    limit = tol.max_dim if max_dim is None else max_dim
    if rho.shape[0] ** n > limit:
        raise CapacityError(f"dimension {rho.shape[0]}^{n} exceeds the configured maximum {limit}")
    return kron_all([rho] * n)


def apply_tensor_power(a: np.ndarray, n: int, vectors: np.ndarray) -> np.ndarray:
    """Compute ``a^{(x)n} @ vectors`` without forming the ``d^n x d^n`` matrix.

    ``vectors`` has shape ``(d**n, k)``; the first tensor factor is the most
    significant index, matching :func:`numpy.kron`.
    """
    d = a.shape[0]
    k = vectors.shape[1]
    t = np.asarray(vectors, dtype=complex).reshape((d,) * n + (k,))
    for axis in range(n):
        t = np.tensordot(a, t, axes=([1], [axis]))
        t = np.moveaxis(t, 0, axis)
    return t.reshape(d**n, k)


def expect_tensor_power(a: np.ndarray, n: int, vectors: np.ndarray) -> np.ndarray:
    """Diagonal ``<v_j| a^{(x)n} |v_j>`` for each column ``v_j`` (real part)."""
    av = apply_tensor_power(a, n, vectors)
    return np.real(np.einsum("ij,ij->j", vectors.conj(), av))


# -- random instances (test suites and CLI demos) -----------------------------

def random_unitary(dim: int, rng: np.random.Generator) -> np.ndarray:
    z = (rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    ph = np.diag(r) / np.abs(np.diag(r))
    return q * ph


def random_hermitian(dim: int, rng: np.random.Generator, scale: float = 1.0) -> np.ndarray:
    z = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    return scale * 0.5 * (z + z.conj().T)


def random_density(dim: int, rng: np.random.Generator, rank: int | None = None) -> np.ndarray:
    """Random state from the induced (Ginibre) measure; ``rank < dim`` gives a singular state."""
    rank = dim if rank is None else rank
    g = rng.standard_normal((dim, rank)) + 1j * rng.standard_normal((dim, rank))
    rho = g @ g.conj().T
    rho = 0.5 * (rho + rho.conj().T)
    return rho / np.trace(rho).real
