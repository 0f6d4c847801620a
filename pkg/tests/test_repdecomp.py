import math
from itertools import product

import numpy as np
import pytest

from qldev.errors import CapacityError, StructureError, ValidationError
from qldev.families import EquatorialQubitFamily
from qldev.linalg import kron_all, random_density, tensor_power
from qldev.measurement import classical_kl, distribution, faithful_povm, spectral_pvm
from qldev.qmetrics import relative_entropy
from qldev.repdecomp import (
    chernoff_bounds,
    chernoff_exact,
    madaptive_block_povm,
    markov_bound_commuting,
    operator_dominance_check,
    dominance_power_check,
    pinching_loss,
    pythagoras_residual,
    qubit_irrep_pvm,
    refine_with_density,
    refine_with_state,
    refined_pvm,
    sandwich_kl,
    sandwich_row,
)

SX = np.array([[0, 1], [1, 0]], complex) / 2
SY = np.array([[0, -1j], [1j, 0]]) / 2
SZ = np.diag([0.5, -0.5]).astype(complex)


def total_spin(n):
    """Collective S^2 and S_z built directly from Pauli sums (oracle independent of the coupling)."""
    def coll(s):
        return sum(kron_all([s if k == i else np.eye(2) for k in range(n)]) for i in range(n))
    sx, sy, sz = coll(SX), coll(SY), coll(SZ)
    return sx @ sx + sy @ sy + sz @ sz, sz


@pytest.mark.parametrize("n, dims", [(1, [2]), (2, [3, 1]), (3, [4, 2, 2]), (4, [5, 3, 3, 3, 1, 1])])
def test_irrep_dimensions(n, dims):
    assert sorted(qubit_irrep_pvm(n).dims, reverse=True) == dims


def test_irrep_max_dimension_n8():
    e = qubit_irrep_pvm(8)
    assert e.w == 9
    assert sum(e.dims) == 256


@pytest.mark.parametrize("n", [2, 3, 4, 5])
def test_irrep_blocks_are_spin_eigenspaces(n):
    s2, sz = total_spin(n)
    e = qubit_irrep_pvm(n)
    allv = np.concatenate(e.isometries, axis=1)
    assert np.allclose(allv.T @ allv, np.eye(2**n), atol=1e-12)
    for (tj, _), v in zip(e.labels, e.isometries):
        j = tj / 2
        assert np.allclose(s2 @ v, j * (j + 1) * v, atol=1e-10)
        # columns ordered m = j, j-1, ..., -j
        assert np.allclose(sz @ v, v * (j - np.arange(tj + 1)), atol=1e-10)


def test_irrep_pvm_commutes_with_tensor_powers(rng):
    e = qubit_irrep_pvm(3).as_pvm()
    rho3 = tensor_power(random_density(2, rng), 3)
    for p in e.elements:
        assert np.max(np.abs(p @ rho3 - rho3 @ p)) <= 1e-12


def test_irrep_pvm_limits():
    with pytest.raises(ValidationError):
        qubit_irrep_pvm(0)
    with pytest.raises(CapacityError):
        qubit_irrep_pvm(13)


@pytest.mark.parametrize("n", [2, 3, 4])
def test_refined_pvm_structure(eq05, n):
    e = qubit_irrep_pvm(n)
    ref = refine_with_state(e, eq05, 0.4)
    v = ref.vectors
    assert v.shape == (2**n, 2**n)
    assert np.allclose(v.conj().T @ v, np.eye(2**n), atol=1e-10)
    for i in range(v.shape[1]):
        p = e.projector(ref.block[i])
        assert np.linalg.norm(p @ v[:, i] - v[:, i]) <= 1e-9
    rho_n = tensor_power(eq05.state(0.4), n)
    pinched = sum(np.outer(v[:, i], v[:, i].conj()) * (v[:, i].conj() @ rho_n @ v[:, i]) for i in range(2**n))
    ent = lambda r: np.trace(r @ __import__("scipy").linalg.logm(r)).real
    assert ent(pinched) == pytest.approx(ent(rho_n), abs=1e-8)
    # refined probabilities agree with the dense Born rule
    dense = distribution(ref.as_pvm(), tensor_power(eq05.state(1.1), n)).probabilities
    assert np.allclose(ref.probabilities(eq05.state(1.1)), dense, atol=1e-12)


def test_refined_pvm_is_deterministic(eq05):
    a = refine_with_state(qubit_irrep_pvm(4), eq05, 0.0)
    b = refine_with_density(qubit_irrep_pvm(4), eq05.state(0.0), 0.0)
    assert np.array_equal(a.vectors, b.vectors)
    assert refined_pvm(eq05, 0.2, 3) is refined_pvm(eq05, 0.2, 3)


def test_sandwich_examples(eq05):
    assert sandwich_kl(eq05, 0.3, 0.3, 3) == pytest.approx(0.0, abs=1e-12)
    d = 0.25 * (1 - math.cos(0.5)) * math.log(3)
    val = sandwich_kl(eq05, 0.5, 0.0, 4)
    assert 4 * d - math.log(5) <= val <= 4 * d + 1e-12
    row = sandwich_row(eq05, 0.5, 0.0, 4)
    assert row["D"] == pytest.approx(d, rel=1e-12) and row["value"] == val


def test_sandwich_m1_matches_single_copy_measurement(eq05):
    # single copy: the irrep decomposition is trivial, refinement is the eigenbasis of rho_theta1
    pvm = spectral_pvm(eq05.state(0.0))
    oracle = classical_kl(distribution(pvm, eq05.state(0.5)).probabilities,
                          distribution(pvm, eq05.state(0.0)).probabilities)
    assert sandwich_kl(eq05, 0.5, 0.0, 1) == pytest.approx(oracle, abs=1e-12)


def _commuting_state(e, rng):
    blocks = [random_density(d, rng) * rng.uniform(0.2, 1.0) for d in e.dims]
    rho = sum(v @ b @ v.T for v, b in zip(e.isometries, blocks))
    return rho / np.trace(rho).real


@pytest.mark.parametrize("n", [2, 3])
def test_pinching_lemmas(rng, n):
    e = qubit_irrep_pvm(n)
    coarse = e.as_pvm()
    for _ in range(20):
        rho = _commuting_state(e, rng)
        fine = refine_with_density(e, random_density(2, rng)).as_pvm()
        assert pinching_loss(coarse, fine, rho) <= math.log(e.w) + 1e-9
        assert operator_dominance_check(coarse, fine, rho) >= -1e-9
        assert dominance_power_check(coarse, fine, rho, 0.5) >= -1e-9


def test_pinching_loss_trivial_cases(rng):
    e = qubit_irrep_pvm(2)
    rho = _commuting_state(e, rng)
    eig = spectral_pvm(rho)
    assert pinching_loss(spectral_pvm(np.eye(4)), eig, rho) == pytest.approx(0.0, abs=1e-10)
    rank_one = spectral_pvm(np.diag([1.0, 2.0, 3.0, 4.0]))
    diag_rho = np.diag(rng.dirichlet(np.ones(4))).astype(complex)
    assert rank_one.w == 1
    assert pinching_loss(rank_one, rank_one, diag_rho) == pytest.approx(0.0, abs=1e-12)
    assert operator_dominance_check(rank_one, rank_one, diag_rho) == pytest.approx(0.0, abs=1e-10)


def test_pinching_requires_commuting_state(rng):
    e = qubit_irrep_pvm(2).as_pvm()
    fine = refine_with_density(qubit_irrep_pvm(2), random_density(2, rng)).as_pvm()
    with pytest.raises(StructureError):
        pinching_loss(e, fine, random_density(4, rng))


def test_pythagoras(rng):
    for _ in range(30):
        rho, sigma = random_density(3, rng), random_density(3, rng)
        f = spectral_pvm(sigma)
        assert abs(pythagoras_residual(f, rho, sigma)) <= 1e-9


def test_markov_bound_commuting_dominates():
    p, q = np.array([0.6, 0.3, 0.1]), np.array([0.2, 0.3, 0.5])
    rho, sigma = np.diag(p), np.diag(q)
    for a in (-2.5, -1.5, -1.0, -0.7):
        exact = float(p[np.log(q) >= a].sum())
        assert markov_bound_commuting(rho, sigma, a) >= exact - 1e-12


@pytest.mark.parametrize("theta0, theta2, delta", [
    (0.0, 0.5, 0.1), (0.0, 0.5, 0.3), (0.3, -0.4, 0.2), (0.3, -0.4, 0.5), (1.0, 0.2, 0.15),
    (1.0, 0.2, 0.4), (-0.7, 0.0, 0.25), (-0.7, 0.0, 0.6), (0.5, 1.5, 0.2), (2.0, 1.0, 0.3),
])
def test_chernoff_bounds_dominate_enumeration(eq05, theta0, theta2, delta):
    theta1 = 0.5 * (theta0 + theta2)
    b1, b2 = chernoff_bounds(eq05, theta0, theta1, theta2, delta, 4)
    e1, e2 = chernoff_exact(eq05, theta0, theta1, theta2, delta, 4)
    assert 0.0 <= b1 <= 1.0 and 0.0 <= b2 <= 1.0
    assert b1 >= e1 - 1e-12
    assert b2 >= e2 - 1e-12


def test_chernoff_exact_bruteforce(eq05):
    """Cross-check the enumeration against dense projectors and an explicit outcome loop."""
    n, th0, th1, th2, delta = 3, 0.2, 0.6, 1.0, 0.1
    ref = refined_pvm(eq05, th1, n)
    r0, r1, r2 = (tensor_power(eq05.state(t), n) for t in (th0, th1, th2))
    lg = lambda a, b: np.trace(a @ __import__("scipy").linalg.logm(b)).real
    c1 = lg(eq05.state(th0), eq05.state(th1))
    c2 = lg(eq05.state(th0), eq05.state(th2))
    e1 = e2 = 0.0
    for i in range(2**n):
        v = ref.vectors[:, i]
        p0, p1, p2 = ((v.conj() @ r @ v).real for r in (r0, r1, r2))
        if -math.log(p2) / n + c2 >= delta:
            e1 += p0
        if math.log(p1) / n - c1 >= delta:
            e2 += p0
    x1, x2 = chernoff_exact(eq05, th0, th1, th2, delta, n)
    assert x1 == pytest.approx(e1, abs=1e-12) and x2 == pytest.approx(e2, abs=1e-12)


def test_chernoff_bounds_decrease_in_delta(eq05):
    vals = [chernoff_bounds(eq05, 0.0, 0.3, 0.6, d, 4) for d in (0.05, 0.2, 0.5, 1.0, 2.0)]
    for (a1, a2), (b1, b2) in zip(vals, vals[1:]):
        assert b1 <= a1 + 1e-12 and b2 <= a2 + 1e-12
    assert vals[-1][1] < 1e-3


def test_block_povm_base_case(eq05):
    blk = madaptive_block_povm(eq05, 0.2, 1, 0.5)
    rho = eq05.state(0.9)
    f = faithful_povm(2).probabilities(rho)
    e = spectral_pvm(eq05.state(0.2))
    expected = np.concatenate([0.5 * f, 0.5 * distribution(e, rho).probabilities[::-1]])
    assert np.allclose(np.sort(blk.probabilities(rho)), np.sort(expected), atol=1e-12)


@pytest.mark.parametrize("m", [1, 2, 3])
def test_block_povm_lazy_matches_materialized(eq05, m):
    blk = madaptive_block_povm(eq05, 0.3, m, 0.25)
    rho = eq05.state(-0.4)
    dense = distribution(blk.materialize(), tensor_power(rho, m)).probabilities
    assert np.allclose(blk.probabilities(rho), dense, atol=1e-12)
    p, q = blk.probabilities(eq05.state(1.0)), blk.probabilities(eq05.state(0.3))
    assert blk.kl(1.0, 0.3) == pytest.approx(classical_kl(p, q), abs=1e-10)


def test_block_povm_inequalities(eq05):
    delta = 0.25
    pairs = [(0.3, 0.0), (1.0, 0.2), (-0.5, 0.5), (2.0, 1.0)]
    for theta, theta0 in pairs:
        d = eq05.relative_entropy(theta, theta0)
        prev = -1.0
        for m in range(1, 7):
            blk = madaptive_block_povm(eq05, theta0, m, delta)
            k = blk.kl(theta, theta0)
            assert (1 - delta) * blk.refined_kl(theta, theta0) <= k + 1e-12
            assert k / m >= (1 - delta) * (d - math.log(m + 1) / m) - 1e-12
            assert k / m >= prev
            assert k / m <= d + 1e-12
            prev = k / m


def test_block_povm_injective_on_grid(eq05):
    blk = madaptive_block_povm(eq05, 0.5, 2, 0.25)
    laws = [blk.probabilities(eq05.state(t)) for t in np.arange(0, 1.01, 0.1)]
    for i in range(len(laws)):
        for j in range(i + 1, len(laws)):
            assert 0.5 * np.abs(laws[i] - laws[j]).sum() > 0


@pytest.mark.parametrize("n", range(2, 9))
def test_irrep_invariants(n, rng):
    e = qubit_irrep_pvm(n)
    assert sum(e.dims) == 2**n
    assert e.w == n + 1
    pvm = e.as_pvm()
    assert np.max(np.abs(pvm.elements.sum(0) - np.eye(2**n))) <= 1e-9
    if n <= 6:
        for _ in range(20):
            rho_n = tensor_power(random_density(2, rng), n)
            for p in pvm.elements:
                assert np.max(np.abs(p @ rho_n - rho_n @ p)) <= 1e-8


def test_sandwich_random_pairs():
    fam = EquatorialQubitFamily(0.5)
    rng = np.random.default_rng(5)
    for _ in range(5):
        t0, t1 = rng.uniform(-math.pi, math.pi, size=2)
        d = fam.relative_entropy(t0, t1)
        for m in range(1, 5):
            v = sandwich_kl(fam, t0, t1, m)
            assert m * d - math.log(m + 1) - 1e-9 <= v <= m * d + 1e-9
