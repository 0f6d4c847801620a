import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qldev.errors import CapacityError, DomainError, ValidationError
from qldev.linalg import (
    apply_tensor_power,
    eig_hermitian,
    expect_tensor_power,
    kron_all,
    random_density,
    random_hermitian,
    random_unitary,
    spectral_apply,
    tensor_power,
    trace_norm_product,
    validate_density,
)
from qldev.qmetrics import affinity, relative_entropy

X = np.array([[0, 1], [1, 0]], dtype=complex)


@pytest.mark.parametrize("a, expected", [
    (np.diag([1.0, 2.0]), [1.0, 2.0]),
    (X, [-1.0, 1.0]),
])
def test_eig_known_spectra(a, expected):
    assert np.allclose(eig_hermitian(a).eigenvalues, expected, atol=1e-14)


def test_eig_reconstruction(rng):
    for _ in range(50):
        h = random_hermitian(8, rng)
        sd = eig_hermitian(h)
        assert np.max(np.abs(sd.reconstruct() - h)) <= 1e-11


def test_eig_rejects_non_hermitian():
    with pytest.raises(ValidationError):
        eig_hermitian(np.array([[0, 1], [0, 0]], dtype=complex))
    with pytest.raises(ValidationError):
        eig_hermitian(np.array([[np.nan, 0], [0, 1]]))


def test_spectral_apply_examples(rng):
    h = random_hermitian(4, rng)
    assert np.max(np.abs(spectral_apply(h, lambda x: x) - h)) <= 1e-12
    assert np.allclose(spectral_apply(np.diag([1.0, np.e]), np.log), np.diag([0.0, 1.0]), atol=1e-14)
    out = spectral_apply(np.diag([0.75, 0.25]), lambda x: x ** 0.3)
    assert np.allclose(out, np.diag([0.75 ** 0.3, 0.25 ** 0.3]), atol=1e-14)


def test_spectral_apply_log_on_kernel_raises():
    with pytest.raises(DomainError):
        spectral_apply(np.diag([1.0, 0.0]), np.log)


def test_trace_norm_product_examples():
    up = np.diag([1.0, 0.0]).astype(complex)
    down = np.diag([0.0, 1.0]).astype(complex)
    assert trace_norm_product(up, up) == pytest.approx(1.0, abs=1e-12)
    assert trace_norm_product(up, down) == pytest.approx(0.0, abs=1e-12)
    f = trace_norm_product(np.diag([0.7, 0.3]), np.diag([0.3, 0.7]))
    assert f == pytest.approx(2 * np.sqrt(0.21), abs=1e-12)


def test_trace_norm_product_matches_svd_oracle(rng):
    from scipy.linalg import sqrtm

    for _ in range(20):
        r, s = random_density(3, rng), random_density(3, rng)
        oracle = np.sum(np.linalg.svd(sqrtm(r) @ sqrtm(s), compute_uv=False))
        assert trace_norm_product(r, s) == pytest.approx(oracle, abs=1e-9)


def test_tensor_power_basic(rng):
    r = random_density(2, rng)
    assert np.allclose(tensor_power(r, 1), r)
    assert np.allclose(tensor_power(r, 3), kron_all([r, r, r]))
    with pytest.raises(CapacityError):
        tensor_power(r, 12, max_dim=1024)


def test_additivity_under_tensor_power(rng):
    for _ in range(10):
        r, s = random_density(2, rng), random_density(2, rng)
        d1 = relative_entropy(r, s)
        assert relative_entropy(tensor_power(r, 3), tensor_power(s, 3)) == pytest.approx(3 * d1, abs=1e-9)
        i1 = affinity(r, s)
        assert affinity(tensor_power(r, 2), tensor_power(s, 2)) == pytest.approx(2 * i1, abs=1e-9)


def test_apply_and_expect_tensor_power(rng):
    a = random_hermitian(2, rng)
    v = rng.normal(size=(8, 3)) + 1j * rng.normal(size=(8, 3))
    full = kron_all([a, a, a])
    assert np.allclose(apply_tensor_power(a, 3, v), full @ v)
    assert np.allclose(expect_tensor_power(a, 3, v), np.einsum("ik,ij,jk->k", v.conj(), full, v).real)


def test_random_objects_are_valid(rng):
    u = random_unitary(5, rng)
    assert np.allclose(u.conj().T @ u, np.eye(5), atol=1e-12)
    rho = random_density(4, rng, rank=2)
    validate_density(rho)
    assert np.sum(np.linalg.eigvalsh(rho) > 1e-12) == 2


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 5), st.integers(0, 2**32 - 1))
def test_density_validation_accepts_random_states(dim, seed):
    rho = random_density(dim, np.random.default_rng(seed))
    out = validate_density(rho)
    assert np.trace(out).real == pytest.approx(1.0, abs=1e-10)


@pytest.mark.parametrize("bad", [
    np.diag([0.6, 0.6]),       # trace
    np.diag([1.2, -0.2]),      # negative
    np.ones((2, 3)),           # shape
])
def test_density_validation_rejects(bad):
    with pytest.raises(ValidationError):
        validate_density(bad)


@pytest.mark.parametrize("dim", [2, 3, 4, 8, 16])
def test_eig_unitarity_suite(dim):
    rng = np.random.default_rng(dim)
    for _ in range(40):
        h = random_hermitian(dim, rng)
        sd = eig_hermitian(h)
        u = sd.eigenvectors
        assert np.max(np.abs(u.conj().T @ u - np.eye(dim))) <= 1e-11
        assert np.max(np.abs(sd.reconstruct() - h)) <= 1e-11 * (1 + np.max(np.abs(h)))
        assert np.all(np.diff(sd.eigenvalues) >= 0)


def test_spectral_apply_composition(rng):
    for _ in range(30):
        rho = random_density(4, rng)
        inner = spectral_apply(rho, lambda x: x**3)
        composed = spectral_apply(inner, np.sqrt)
        assert np.max(np.abs(composed - spectral_apply(rho, lambda x: x**1.5))) <= 1e-10


def test_trace_norm_product_symmetry_and_identity(rng):
    for _ in range(100):
        r, s = random_density(3, rng), random_density(3, rng)
        assert abs(trace_norm_product(r, s) - trace_norm_product(s, r)) <= 1e-11
        assert abs(trace_norm_product(r, r) - 1.0) <= 1e-9
        if abs(trace_norm_product(r, s) - 1.0) <= 1e-9:
            assert np.max(np.abs(r - s)) <= 1e-4
