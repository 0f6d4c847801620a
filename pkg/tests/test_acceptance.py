"""Acceptance suite: one test per criterion, each reporting a PASS/FAIL line.

Lines are collected in ``RESULTS`` and printed in the terminal summary (see
``conftest.py``); they are also echoed to stdout for ``pytest -s`` runs.
"""

import io
import math
import time
from fractions import Fraction

import numpy as np
import pytest

from qldev import cli
from qldev.estimation import (
    GaussianHomodyne,
    GaussianNumber,
    SimulationConfig,
    TwoStage,
    extract_beta,
    rate_curve,
    run_superefficient,
    sample_estimates,
    simulate_tail,
    theoretical_bounds,
)
from qldev.expfam import bernoulli, cramer_rate, mean_tail_monte_carlo
from qldev.families import EquatorialQubitFamily, GaussianFockFamily
from qldev.linalg import random_density, random_hermitian, random_unitary, trace_norm_product
from qldev.measurement import POVM, classical_fisher, classical_kl, pinching, spectral_pvm
from qldev.qmetrics import kmb_and_fisher, limit_table, relative_entropy, rld_fisher, sld_and_fisher
from qldev.repdecomp import (
    chernoff_bounds,
    chernoff_exact,
    dominance_power_check,
    operator_dominance_check,
    pinching_loss,
    pythagoras_residual,
    qubit_irrep_pvm,
    refine_with_density,
    sandwich_kl,
)
from qldev.stats import linear_fit

RESULTS: dict = {}


def report(k: int, ok: bool, detail: str) -> None:
    line = f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    RESULTS[k] = line
    print(line)
    assert ok, line


def eq_kl(r, t, t0):
    return 0.5 * r * (1 - math.cos(t - t0)) * math.log((1 + r) / (1 - r))


def random_povm(dim, rng):
    k = int(rng.integers(1, 3))
    v = random_unitary(dim * k, rng)[:, :dim]
    return POVM(np.stack([np.outer(row.conj(), row) for row in v]), np.zeros(dim * k))


def random_tangent(dim, rng):
    b = random_hermitian(dim, rng)
    return b - np.trace(b).real / dim * np.eye(dim)


def full_rank_density(dim, rng):
    return 0.95 * random_density(dim, rng) + 0.05 * np.eye(dim) / dim


# -- closed forms ---------------------------------------------------------------------------

def test_criterion_01_equatorial_closed_forms():
    t_start = time.perf_counter()
    grid = np.linspace(-3.0, 3.0, 10)
    worst_j = worst_jt = worst_d = 0.0
    for r in (0.3, 0.6, 0.9):
        fam = EquatorialQubitFamily(r)
        jt_exact = 0.5 * r * math.log((1 + r) / (1 - r))
        for t in grid:
            rho, b = fam.state(t), fam.derivative(t)
            worst_j = max(worst_j, abs(sld_and_fisher(rho, b)[1] - r * r))
            worst_jt = max(worst_jt, abs(kmb_and_fisher(rho, b)[1] - jt_exact))
            for t0 in grid:
                d = relative_entropy(rho, fam.state(t0))
                worst_d = max(worst_d, abs(d - eq_kl(r, t, t0)))
    elapsed = time.perf_counter() - t_start
    ok = worst_j <= 1e-8 and worst_jt <= 1e-8 and worst_d <= 1e-10 and elapsed < 1.0
    report(1, ok, f"max|dJ|={worst_j:.2e} max|dJ~|={worst_jt:.2e} max|dD|={worst_d:.2e} time={elapsed:.2f}s")


def test_criterion_02_gaussian_closed_forms():
    t_start = time.perf_counter()
    fam = GaussianFockFamily(1.0, trunc_dim=60, theta_max=1.0)
    grid = np.linspace(-1.0, 1.0, 9)
    worst_j = worst_jt = worst_d = 0.0
    for t in grid:
        rho, b = fam.state(t), fam.derivative(t)
        worst_j = max(worst_j, abs(sld_and_fisher(rho, b)[1] / (4 / 3) - 1))
        worst_jt = max(worst_jt, abs(kmb_and_fisher(rho, b)[1] / (2 * math.log(2)) - 1))
        for t0 in grid:
            if t0 != t:
                d = fam.truncated_relative_entropy(t, t0)
                worst_d = max(worst_d, abs(d / (math.log(2) * (t - t0) ** 2) - 1))
    elapsed = time.perf_counter() - t_start
    ok = max(worst_j, worst_jt, worst_d) <= 1e-3 and elapsed < 10.0
    report(2, ok, f"rel err J={worst_j:.2e} J~={worst_jt:.2e} D={worst_d:.2e} time={elapsed:.2f}s")


def test_criterion_03_limit_relations():
    r = 0.5
    j, jt = r * r, 0.5 * r * math.log(3)
    (row,) = limit_table(EquatorialQubitFamily(r), 0.3, [1e-3])
    errs = (abs(row.kl_ratio - jt) / jt, abs(row.bures_ratio - j) / j, abs(row.affinity_ratio - j) / j)
    report(3, max(errs) <= 0.02, "rel err 2D/eps^2={:.2e} 4b^2/eps^2={:.2e} I/eps^2={:.2e}".format(*errs))


# -- inequality suites ------------------------------------------------------------------------

def test_criterion_04_inequality_suites():
    t_start = time.perf_counter()
    rng = np.random.default_rng(404)
    trials = 500
    viol = {"order": 0, "fuchs": 0, "measured_kl": 0, "fisher": 0, "sld_equality": 0}
    worst_eq = 0.0
    for i in range(trials):
        dim = 2 + i % 3
        slack = lambda x: 1e-9 * max(1.0, abs(x))

        rho, b = full_rank_density(dim, rng), random_tangent(dim, rng)
        l_op, j = sld_and_fisher(rho, b)
        _, jt = kmb_and_fisher(rho, b)
        jr = rld_fisher(rho, b)
        viol["order"] += not (j <= jt + slack(jt) and jt <= jr + slack(jr))

        m = random_povm(dim, rng)
        p, dp = m.probabilities(rho), np.array([np.trace(e @ b).real for e in m.elements])
        viol["fisher"] += classical_fisher(p, dp) > j + slack(j)
        e = spectral_pvm(l_op)
        pe, dpe = e.probabilities(rho), np.array([np.trace(x @ b).real for x in e.elements])
        rel = abs(classical_fisher(pe, dpe) - j) / j
        worst_eq = max(worst_eq, rel)
        viol["sld_equality"] += rel > 1e-8

        r, s = random_density(dim, rng), random_density(dim, rng)
        m = random_povm(dim, rng)
        p, q = m.probabilities(r), m.probabilities(s)
        viol["fuchs"] += trace_norm_product(r, s) > np.sum(np.sqrt(p * q)) + 1e-9
        d = relative_entropy(r, s)
        viol["measured_kl"] += classical_kl(p, q) > d + slack(d)
    elapsed = time.perf_counter() - t_start
    ok = sum(viol.values()) == 0 and elapsed < 60.0
    report(4, ok, f"{trials} instances per suite, violations={viol}, worst SLD-PVM rel err={worst_eq:.1e}, "
                  f"time={elapsed:.1f}s")


def test_criterion_05_schur_sandwich():
    t_start = time.perf_counter()
    fam = EquatorialQubitFamily(0.5)
    rng = np.random.default_rng(505)
    bad, checked = 0, 0
    for _ in range(20):
        t0, t1 = rng.uniform(-math.pi, math.pi, size=2)
        d = fam.relative_entropy(t0, t1)
        for m in range(1, 7):
            v = sandwich_kl(fam, t0, t1, m)
            bad += not (m * d - math.log(m + 1) - 1e-9 <= v <= m * d + 1e-9)
            checked += 1
    elapsed = time.perf_counter() - t_start
    report(5, bad == 0 and elapsed < 30.0, f"{checked} checks, violations={bad}, time={elapsed:.2f}s")


# -- estimation exponents -----------------------------------------------------------------------

@pytest.mark.slow
def test_criterion_06_gaussian_exponents():
    t_start = time.perf_counter()
    nbar = 1.0
    ns = tuple(range(50, 401, 50))
    half = GaussianFockFamily(nbar, half_line=True)
    eps_grid = (0.3, 0.4, 0.5, 0.6)
    rows = simulate_tail(GaussianNumber(nbar), half, 0.0, SimulationConfig(ns, 1, 0, eps_grid))
    q = nbar / (nbar + 1)
    # exact ceil(n eps^2): n * 0.3**2 rounds to 9.000000000000002 at n = 100
    worst_p = max(abs(r.p_hat - q ** math.ceil(r.n * Fraction(str(r.eps)) ** 2)) for r in rows)
    alpha = rate_curve(rows).alpha
    alpha_err = abs(alpha / math.log(1 + 1 / nbar) - 1)

    cfg = SimulationConfig(ns, 100000, 6, (0.5,), 1, "importance")
    beta = extract_beta(simulate_tail(GaussianHomodyne(nbar), GaussianFockFamily(nbar), 0.0, cfg)).beta
    beta_err = abs(beta * 6 - 1)
    elapsed = time.perf_counter() - t_start
    ok = worst_p <= 1e-12 and alpha_err <= 0.01 and beta_err <= 0.10 and elapsed < 300
    report(6, ok, f"number: max|dp|={worst_p:.1e} alpha={alpha:.5f} (rel {alpha_err:.2%}); "
                  f"homodyne beta(0.5)={beta:.5f} vs 1/6 (rel {beta_err:.2%}); time={elapsed:.1f}s")


@pytest.mark.slow
def test_criterion_07_two_stage():
    fam = EquatorialQubitFamily(0.8)
    theta, delta, n, j = 0.5, 0.25, 400, 0.64
    strat = TwoStage(delta)
    est = sample_estimates(strat, fam, theta, n, 20000, seed=7)
    ratio = float(np.mean((est - theta) ** 2)) * (1 - delta) * n * j
    cfg = SimulationConfig(tuple(range(100, 801, 50)), 20000, 7, (0.3,), 1, "plain")
    b = extract_beta(simulate_tail(strat, fam, theta, cfg))
    inf_d = theoretical_bounds(fam, theta, 0.3)["inf_d"]
    ok = 0.85 <= ratio <= 1.15 and b.beta <= inf_d + 2 * b.stderr
    report(7, ok, f"MSE*(1-delta)nJ={ratio:.4f}; beta(0.3)={b.beta:.5f}+-{b.stderr:.5f} "
                  f"<= inf D={inf_d:.5f} (+2se), n used={b.n_used}")


def test_criterion_08_superefficient():
    fam = EquatorialQubitFamily(0.5)
    theta1, n = 0.0, 9
    law = run_superefficient(theta1, fam, theta1, n)
    p_miss = 1 - law.probability_of(theta1)
    n2 = n - 3
    dn = n2 ** (-0.2)
    attained = law.stage1_estimates[law.stage1_weights > 0]
    bound = max(math.exp(-n2 * (1 - dn) * fam.relative_entropy(t, theta1)) for t in attained)
    p4 = run_superefficient(theta1, fam, 1.0, 4).probability_of(theta1)
    p9 = run_superefficient(theta1, fam, 1.0, 9).probability_of(theta1)
    ok = p_miss <= bound + 1e-12 and p9 < p4
    report(8, ok, f"P(T!=theta1|theta1)={p_miss:.4e} <= bound {bound:.4e}; "
                  f"P(T=theta1|theta=1): n=4 {p4:.4f} > n=9 {p9:.4f}")


def test_criterion_09_chernoff_bounds():
    fam = EquatorialQubitFamily(0.5)
    grid = [(0.0, 0.5, 0.1), (0.0, 0.5, 0.3), (0.3, -0.4, 0.2), (0.3, -0.4, 0.5), (1.0, 0.2, 0.15),
            (1.0, 0.2, 0.4), (-0.7, 0.0, 0.25), (-0.7, 0.0, 0.6), (0.5, 1.5, 0.2), (2.0, 1.0, 0.3)]
    bad = 0
    for t0, t2, delta in grid:
        t1 = 0.5 * (t0 + t2)
        b1, b2 = chernoff_bounds(fam, t0, t1, t2, delta, 4)
        e1, e2 = chernoff_exact(fam, t0, t1, t2, delta, 4)
        bad += (b1 < e1 - 1e-12) + (b2 < e2 - 1e-12)
    report(9, bad == 0, f"{len(grid)} grid points, violations={bad}")


@pytest.mark.slow
def test_criterion_10_classical_cramer():
    t_start = time.perf_counter()
    p, a = 0.4, 0.6
    fam = bernoulli((1 - p, p))
    kl = a * math.log(a / p) + (1 - a) * math.log((1 - a) / (1 - p))
    rate = cramer_rate(fam, [0.0], 0, a)
    ns = tuple(range(200, 2001, 200))
    rows = mean_tail_monte_carlo(fam, [0.0], 0, a, ns, 10**6, np.random.default_rng(10))
    y = np.array([-math.log(r["p_hat"]) for r in rows])
    sig = np.array([r["stderr"] / r["p_hat"] for r in rows])
    slope = linear_fit(np.array(ns, dtype=float), y, sig).slope
    elapsed = time.perf_counter() - t_start
    ok = abs(rate - kl) <= 1e-10 and abs(slope / kl - 1) <= 0.10 and elapsed < 120
    report(10, ok, f"|rate-KL|={abs(rate - kl):.1e}; MC slope={slope:.5f} vs KL={kl:.5f} "
                   f"(rel {abs(slope / kl - 1):.2%}); time={elapsed:.1f}s")


# -- pinching ----------------------------------------------------------------------------------

def test_criterion_11_pinching_suite():
    rng = np.random.default_rng(1111)
    worst_py, worst_loss, worst_dom = 0.0, -math.inf, math.inf
    for i in range(200):
        e = qubit_irrep_pvm(2 + i % 2)
        coarse = e.as_pvm()
        blocks = [random_density(d, rng) * rng.uniform(0.2, 1.0) for d in e.dims]
        rho = sum(v @ blk @ v.T for v, blk in zip(e.isometries, blocks))
        rho = 0.98 * rho / np.trace(rho).real + 0.02 * np.eye(rho.shape[0]) / rho.shape[0]
        fine = refine_with_density(e, random_density(2, rng)).as_pvm()
        sigma = pinching(fine, random_density(rho.shape[0], rng))
        worst_py = max(worst_py, abs(pythagoras_residual(fine, rho, sigma)))
        worst_loss = max(worst_loss, pinching_loss(coarse, fine, rho) - math.log(e.w))
        worst_dom = min(worst_dom, operator_dominance_check(coarse, fine, rho),
                        dominance_power_check(coarse, fine, rho, 0.5))
    ok = worst_py <= 1e-9 and worst_loss <= 1e-9 and worst_dom >= -1e-9
    report(11, ok, f"200 cases: max Pythagoras residual={worst_py:.1e}, max(loss - log w)={worst_loss:.3f}, "
                   f"min dominance eig={worst_dom:.2e}")


# -- determinism -------------------------------------------------------------------------------

def test_criterion_12_determinism():
    outputs = {}
    for strategy, sampling in (("two-stage", "plain"), ("fixed-sld", "importance")):
        for w in (1, 2, 8):
            out = io.StringIO()
            code = cli.run(["simulate", "--strategy", strategy, "--r", "0.8", "--theta", "0.5", "--eps", "0.3",
                            "--ngrid", "50:150:50", "--trials", "3000", "--sampling", sampling, "--seed", "12",
                            "--workers", str(w)], stdout=out)
            assert code == 0
            outputs[strategy, w] = out.getvalue().encode()
    same = all(outputs[s, 1] == outputs[s, w] for s in ("two-stage", "fixed-sld") for w in (2, 8))
    report(12, same, "simulate output bytes identical for workers 1, 2, 8 (plain and importance sampling)")
