"""Central numerical tolerances.

All modules read their thresholds from :data:`TOL`; tests may build a
modified copy with :func:`dataclasses.replace` and pass it explicitly where
a function accepts ``tol=``.
"""

from dataclasses import dataclass


@dataclass(frozen=True)
class Tolerances:
    hermitian: float = 1e-10       # relative to 1 + max|A_ij|
    psd: float = 1e-10             # minimum eigenvalue of a state / POVM element
    trace: float = 1e-10           # |Tr rho - 1|
    clamp: float = 1e-12           # eigenvalues in [-clamp, 0) are set to 0
    zero: float = 1e-12            # eigenvalues <= zero are outside the support
    degenerate: float = 1e-12      # |p_i - p_j| below this uses the KMB limit form
    support: float = 1e-10         # allowed weight of B (or rho) off the support
    rank: float = 1e-10            # smallest eigenvalue for RLD inverses
    merge: float = 1e-10           # spectral PVM eigenvalue merging
    completeness: float = 1e-9     # ||sum M_i - I||_max
    orthogonality: float = 1e-9    # PVM: ||M_i M_j - delta_ij M_i||_max
    probability: float = 1e-9      # |sum p - 1| before renormalising
    negative_probability: float = 1e-12
    max_dim: int = 4096


TOL = Tolerances()
