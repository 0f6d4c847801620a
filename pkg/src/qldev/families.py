"""One-parameter state families.

Concrete families carry closed-form reference values (relative entropy, SLD
and KMB Fisher information) used to validate the generic numerics in
:mod:`qldev.qmetrics`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.linalg import expm

from .config import TOL
from .errors import CapacityError, DomainError, ValidationError
from .linalg import validate_density

__all__ = [
    "Domain",
    "StateFamily",
    "CallableFamily",
    "EquatorialQubitFamily",
    "GaussianFockFamily",
    "DiagonalFamily",
    "ClosedFormTriple",
    "equatorial_state",
    "equatorial_closed_forms",
    "displaced_thermal",
    "gaussian_closed_forms",
    "required_truncation",
    "derivative",
    "make_family",
]


@dataclass(frozen=True)
class Domain:
    """Real interval; infinite endpoints are always open."""

    lo: float = -math.inf
    hi: float = math.inf
    lo_closed: bool = False
    hi_closed: bool = False

    def contains(self, t: float) -> bool:
        above = t > self.lo or (self.lo_closed and t == self.lo)
        below = t < self.hi or (self.hi_closed and t == self.hi)
        return bool(above and below)

    def is_boundary(self, t: float) -> bool:
        return (self.lo_closed and t == self.lo) or (self.hi_closed and t == self.hi)

    def clip(self, t):
        return np.clip(t, self.lo, self.hi)

    def window(self, center: float, half_width: float) -> tuple[float, float]:
        return max(self.lo, center - half_width), min(self.hi, center + half_width)


class StateFamily:
    """Parametrised curve ``theta -> rho_theta``.

    Subclasses implement :meth:`state` and, when available, an analytic
    :meth:`_analytic_derivative`. Without one, derivatives use central
    differences with step ``1e-5 * max(1, |theta|)`` (one-sided at a closed
    boundary).
    """

    dim: int
    domain: Domain = Domain()
    derivative_mode: str = "central-difference"
    name: str = "family"

    def state(self, theta: float) -> np.ndarray:
        raise NotImplementedError

    def states(self, thetas) -> np.ndarray:
        thetas = np.atleast_1d(np.asarray(thetas, dtype=float))
        return np.stack([self.state(t) for t in thetas])

    def contains(self, theta: float) -> bool:
        return self.domain.contains(theta)

    def derivative(self, theta: float) -> np.ndarray:
        theta = float(theta)
        if not self.contains(theta):
            raise DomainError(f"theta {theta!r} outside the parameter domain")
        if self.derivative_mode == "analytic":
            return self._analytic_derivative(theta)
        return self.numeric_derivative(theta)

    def derivatives(self, thetas) -> np.ndarray:
        thetas = np.atleast_1d(np.asarray(thetas, dtype=float))
        return np.stack([self.derivative(t) for t in thetas])

    def numeric_derivative(self, theta: float, h: float | None = None) -> np.ndarray:
        h = 1e-5 * max(1.0, abs(theta)) if h is None else h
        lo_ok = self.contains(theta - h)
        hi_ok = self.contains(theta + h)
        if lo_ok and hi_ok:
            d = (self.state(theta + h) - self.state(theta - h)) / (2 * h)
        elif hi_ok and self.domain.is_boundary(theta):
            d = (-3 * self.state(theta) + 4 * self.state(theta + h) - self.state(theta + 2 * h)) / (2 * h)
        elif lo_ok and self.domain.is_boundary(theta):
            d = (3 * self.state(theta) - 4 * self.state(theta - h) + self.state(theta - 2 * h)) / (2 * h)
        else:
            raise DomainError(f"theta {theta!r} is too close to an open boundary for differencing")
        return 0.5 * (d + d.conj().T)

    def _analytic_derivative(self, theta: float) -> np.ndarray:
        raise NotImplementedError

    def relative_entropy(self, theta: float, theta0: float) -> float:
        """``D(rho_theta || rho_theta0)``; closed forms override the numeric path."""
        from .qmetrics import relative_entropy

        return relative_entropy(self.state(theta), self.state(theta0))

    def search_window(self, theta: float) -> tuple[float, float]:
        """Bounded interval used by grid searches over the parameter."""
        return self.domain.window(theta, 10.0)


class CallableFamily(StateFamily):
    """Family from user callables; derivative analytic if ``derivative_fn`` is given."""

    def __init__(self, dim: int, state_fn: Callable, domain: Domain = Domain(),
                 derivative_fn: Callable | None = None, name: str = "custom"):
        self.dim = dim
        self._state_fn = state_fn
        self._deriv_fn = derivative_fn
        self.domain = domain
        self.derivative_mode = "analytic" if derivative_fn else "central-difference"
        self.name = name

    def state(self, theta):
        return np.asarray(self._state_fn(float(theta)), dtype=complex)

    def _analytic_derivative(self, theta):
        return np.asarray(self._deriv_fn(float(theta)), dtype=complex)


@dataclass(frozen=True)
class ClosedFormTriple:
    d: Callable[[float, float], float]
    j_sld: Callable[[float], float]
    j_kmb: Callable[[float], float]


# -- equatorial spin-1/2 family ------------------------------------------------

def _check_r(r: float) -> float:
    r = float(r)
    if not 0.0 < r <= 1.0:
        raise DomainError(f"r must lie in (0, 1], got {r!r}")
    return r


def equatorial_state(r: float, theta: float) -> np.ndarray:
    r = _check_r(r)
    c, s = math.cos(theta), math.sin(theta)
    return 0.5 * np.array([[1 + r * c, r * s], [r * s, 1 - r * c]], dtype=complex)


def equatorial_closed_forms(r: float) -> ClosedFormTriple:
    r = _check_r(r)
    if r == 1.0:
        contrast = math.inf
    else:
        contrast = math.log((1 + r) / (1 - r))

    def d(theta, theta0):
        gap = 1.0 - math.cos(theta - theta0)
        if gap == 0.0:
            return 0.0
        return 0.5 * r * gap * contrast

    return ClosedFormTriple(d=d, j_sld=lambda theta: r * r, j_kmb=lambda theta: 0.5 * r * contrast)


class EquatorialQubitFamily(StateFamily):
    """Qubit states on a circle of Bloch radius ``r`` in the x-z plane."""

    dim = 2
    derivative_mode = "analytic"

    def __init__(self, r: float, domain: Domain | None = None):
        self.r = _check_r(r)
        self.domain = domain or Domain(-math.pi, math.pi)
        self.closed_forms = equatorial_closed_forms(self.r)
        self.name = f"equatorial(r={self.r:g})"

    def state(self, theta):
        return equatorial_state(self.r, theta)

    def states(self, thetas):
        t = np.atleast_1d(np.asarray(thetas, dtype=float))
        c, s = np.cos(t), np.sin(t)
        out = np.empty((t.size, 2, 2), dtype=complex)
        out[:, 0, 0] = 0.5 * (1 + self.r * c)
        out[:, 1, 1] = 0.5 * (1 - self.r * c)
        out[:, 0, 1] = out[:, 1, 0] = 0.5 * self.r * s
        return out

    def _analytic_derivative(self, theta):
        c, s = math.cos(theta), math.sin(theta)
        return 0.5 * self.r * np.array([[-s, c], [c, s]], dtype=complex)

    def derivatives(self, thetas):
        t = np.atleast_1d(np.asarray(thetas, dtype=float))
        c, s = np.cos(t), np.sin(t)
        out = np.empty((t.size, 2, 2), dtype=complex)
        out[:, 0, 0] = -0.5 * self.r * s
        out[:, 1, 1] = 0.5 * self.r * s
        out[:, 0, 1] = out[:, 1, 0] = 0.5 * self.r * c
        return out

    def relative_entropy(self, theta, theta0):
        return self.closed_forms.d(theta, theta0)

    def search_window(self, theta):
        return self.domain.lo, self.domain.hi


# -- displaced thermal (Gaussian) family ---------------------------------------

def required_truncation(nbar: float, theta_max: float, tail_tol: float = 1e-10) -> int:
    """Smallest ``d`` with ``(nbar/(nbar+1))^d * exp(theta_max^2) < tail_tol``."""
    q = nbar / (nbar + 1.0)
    need = (math.log(tail_tol) - theta_max**2) / math.log(q)
    return max(2, int(math.floor(need)) + 1)


def _thermal_diag(nbar: float, d: int) -> np.ndarray:
    q = nbar / (nbar + 1.0)
    p = (1.0 / (nbar + 1.0)) * q ** np.arange(d)
    return p / p.sum()


def _displacement_generator(d: int) -> np.ndarray:
    a = np.diag(np.sqrt(np.arange(1, d)), k=1).astype(complex)
    return a.conj().T - a


def displaced_thermal(theta: float, nbar: float, d: int, tail_tol: float = 1e-10) -> np.ndarray:
    """Thermal state of mean photon number ``nbar`` displaced by real ``theta``, in ``d`` Fock levels.

    The truncated thermal weights are renormalised to unit trace; the
    truncation must satisfy :func:`required_truncation` for ``|theta|``.
    """
    if nbar <= 0:
        raise DomainError("nbar must be positive")
    need = required_truncation(nbar, abs(theta), tail_tol)
    if d < need:
        raise CapacityError(f"truncation d={d} too small for nbar={nbar}, theta={theta}; use d >= {need}")
    rho0 = np.diag(_thermal_diag(nbar, d)).astype(complex)
    if theta == 0.0:
        return rho0
    u = expm(theta * _displacement_generator(d))
    rho = u @ rho0 @ u.conj().T
    return 0.5 * (rho + rho.conj().T)


def gaussian_closed_forms(nbar: float) -> ClosedFormTriple:
    if nbar <= 0:
        raise DomainError("nbar must be positive")
    c = math.log(1.0 + 1.0 / nbar)
    return ClosedFormTriple(
        d=lambda theta, theta0: c * (theta - theta0) ** 2,
        j_sld=lambda theta: 2.0 / (nbar + 0.5),
        j_kmb=lambda theta: 2.0 * c,
    )


class GaussianFockFamily(StateFamily):
    """Real-displacement family of thermal states in a truncated Fock space.

    ``half_line=True`` restricts the domain to ``[0, inf)``.
    """

    derivative_mode = "analytic"

    def __init__(self, nbar: float, trunc_dim: int | None = None, tail_tol: float = 1e-10,
                 theta_max: float = 2.0, half_line: bool = False):
        if nbar <= 0:
            raise DomainError("nbar must be positive")
        self.nbar = float(nbar)
        self.tail_tol = tail_tol
        self.theta_max = float(theta_max)
        need = required_truncation(self.nbar, self.theta_max, tail_tol)
        self.dim = need if trunc_dim is None else int(trunc_dim)
        if self.dim < need:
            raise CapacityError(
                f"truncation {self.dim} too small for nbar={self.nbar}, |theta|<={self.theta_max}; use >= {need}")
        self.half_line = half_line
        if half_line:
            self.domain = Domain(0.0, self.theta_max, lo_closed=True, hi_closed=True)
        else:
            self.domain = Domain(-self.theta_max, self.theta_max, True, True)
        self._gen = _displacement_generator(self.dim)
        self._rho0 = np.diag(_thermal_diag(self.nbar, self.dim)).astype(complex)
        self.closed_forms = gaussian_closed_forms(self.nbar)
        self.name = f"gaussian(nbar={self.nbar:g}, d={self.dim})"

    def state(self, theta):
        theta = float(theta)
        if not self.contains(theta):
            raise DomainError(f"theta {theta!r} outside [{self.domain.lo}, {self.domain.hi}]")
        u = expm(theta * self._gen)
        rho = u @ self._rho0 @ u.conj().T
        return 0.5 * (rho + rho.conj().T)

    def _analytic_derivative(self, theta):
        rho = self.state(theta)
        d = self._gen @ rho - rho @ self._gen
        return 0.5 * (d + d.conj().T)

    def relative_entropy(self, theta, theta0):
        return self.closed_forms.d(theta, theta0)

    def truncated_relative_entropy(self, theta, theta0) -> float:
        """``D`` between the truncated states, computed in the thermal frame.

        Both states are unitary rotations of the same diagonal ``rho0``, so
        ``D = Tr rho0 log rho0 - Tr rho0 W^+ log(rho0) W`` with
        ``W = exp((theta - theta0) G)``. The thermal tail eigenvalues
        (down to ``~(nbar/(nbar+1))^dim``) enter through their exact
        logarithms instead of a numerical eigendecomposition.
        """
        for t in (theta, theta0):
            if not self.contains(float(t)):
                raise DomainError(f"theta {t!r} outside [{self.domain.lo}, {self.domain.hi}]")
        p = np.real(np.diag(self._rho0))
        logp = np.log(p)
        w = expm((float(theta) - float(theta0)) * self._gen)
        cross = np.real(np.einsum("i,ji,j,ji->", p, w.conj(), logp, w))
        return float(p @ logp - cross)

    def search_window(self, theta):
        return self.domain.lo, self.domain.hi


# -- diagonal embedding of a one-dimensional exponential family ----------------

class DiagonalFamily(StateFamily):
    """Diagonal states ``p_theta(w) ~ base(w) exp(theta F(w))``; every quantum quantity is classical here."""

    derivative_mode = "analytic"

    def __init__(self, statistic, base_weights=None, domain: Domain | None = None):
        self.statistic = np.asarray(statistic, dtype=float)
        k = self.statistic.size
        if k < 2:
            raise ValidationError("need at least two outcomes")
        base = np.ones(k) if base_weights is None else np.asarray(base_weights, dtype=float)
        if np.any(base <= 0):
            raise ValidationError("base weights must be positive")
        self.base = base / base.sum()
        self.dim = k
        self.domain = domain or Domain(-10.0, 10.0)
        self.name = f"diagonal(k={k})"

    def probabilities(self, theta):
        z = theta * self.statistic + np.log(self.base)
        z = z - z.max()
        w = np.exp(z)
        return w / w.sum()

    def classical_fisher(self, theta):
        p = self.probabilities(theta)
        m = p @ self.statistic
        return float(p @ (self.statistic - m) ** 2)

    def state(self, theta):
        return np.diag(self.probabilities(float(theta))).astype(complex)

    def _analytic_derivative(self, theta):
        p = self.probabilities(theta)
        return np.diag(p * (self.statistic - p @ self.statistic)).astype(complex)

    def relative_entropy(self, theta, theta0):
        p, q = self.probabilities(theta), self.probabilities(theta0)
        return float(np.sum(p * (np.log(p) - np.log(q))))

    def search_window(self, theta):
        return self.domain.lo, self.domain.hi


class ConstantFamily(StateFamily):
    derivative_mode = "analytic"

    def __init__(self, rho):
        self.rho = validate_density(rho)
        self.dim = self.rho.shape[0]
        self.domain = Domain()
        self.name = "constant"

    def state(self, theta):
        return self.rho.copy()

    def _analytic_derivative(self, theta):
        return np.zeros_like(self.rho)


def derivative(family: StateFamily, theta: float) -> np.ndarray:
    return family.derivative(theta)


def make_family(name: str, r: float = 0.5, nbar: float = 1.0, trunc: int | None = None,
                theta_max: float = 2.0, half_line: bool = False, statistic=(0.0, 1.0)) -> StateFamily:
    """Build a family from the CLI selection strings ``equatorial``, ``gaussian``, ``diagonal``."""
    if name == "equatorial":
        return EquatorialQubitFamily(r)
    if name == "gaussian":
        return GaussianFockFamily(nbar, trunc_dim=trunc, theta_max=theta_max, half_line=half_line)
    if name == "diagonal":
        return DiagonalFamily(statistic)
    raise ValidationError(f"unknown family {name!r}")
