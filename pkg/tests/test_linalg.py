import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from genqst.errors import NotPSDError, SizeError, ValidationError
from genqst.linalg import (
    MAX_ENTRIES,
    check_hermitian,
    clip_spectrum,
    hermitian_eig,
    jacobi_eigh,
    kron,
    kron_all,
    psd_sqrt,
)
from genqst.povm import make_povm
from genqst.quantum_sim import I2, X

from conftest import random_density, random_hermitian


def test_kron_identity():
    assert np.array_equal(kron(I2, I2), np.eye(4))


def test_kron_sigma_x_antidiagonal():
    assert np.array_equal(kron(X, X), np.fliplr(np.eye(4)))


def test_kron_inverse_of_overlap():
    t = make_povm("pauli4").overlap
    ti = np.linalg.inv(t)
    assert np.allclose(kron(ti, ti) @ kron(t, t), np.eye(16), atol=1e-12)


def test_kron_size_guard():
    big = np.zeros((1 << 15, 1))
    with pytest.raises(SizeError):
        kron(big, np.zeros((1 << 14, 1)))
    assert MAX_ENTRIES == 1 << 28


def test_kron_associative_integers(rng):
    a, b, c = (rng.integers(-3, 4, size=(2, 3)) for _ in range(3))
    assert np.array_equal(kron(kron(a, b), c), kron(a, kron(b, c)))
    assert np.array_equal(kron_all([a, b, c]), kron(a, kron(b, c)))


def test_as_cmatrix_rejects_nan():
    with pytest.raises(ValidationError):
        kron(np.array([[np.nan]]), I2)


@pytest.mark.parametrize("method", ["lapack", "jacobi"])
def test_eig_trivial(method):
    assert np.allclose(hermitian_eig(np.eye(4), method).eigenvalues, 1)
    assert np.allclose(hermitian_eig(X, method).eigenvalues, [-1, 1])


@pytest.mark.parametrize("method", ["lapack", "jacobi"])
@pytest.mark.parametrize("seed", range(5))
def test_eig_residuals(method, seed):
    a = random_hermitian(8, np.random.default_rng(seed))
    w, v = hermitian_eig(a, method)
    scale = np.linalg.norm(a)
    assert np.all(np.diff(w) >= 0)
    assert np.linalg.norm(a @ v - v * w) < 1e-9 * scale
    assert np.allclose(v.conj().T @ v, np.eye(8), atol=1e-9)
    assert abs(w.sum() - np.trace(a).real) < 1e-9 * scale
    assert np.prod(w) == pytest.approx(np.linalg.det(a).real, rel=1e-6)


def test_jacobi_matches_lapack_on_degenerate(rng):
    # Spectrum (1, 1, 2, 2) in a random basis.
    q, _ = np.linalg.qr(rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4)))
    a = q @ np.diag([1.0, 1.0, 2.0, 2.0]) @ q.conj().T
    a = (a + a.conj().T) / 2
    assert np.allclose(jacobi_eigh(a).eigenvalues, [1, 1, 2, 2], atol=1e-10)


def test_eig_deterministic(rng):
    a = random_hermitian(6, rng)
    first = hermitian_eig(a)
    second = hermitian_eig(a.copy())
    assert np.array_equal(first.eigenvalues, second.eigenvalues)
    assert np.array_equal(first.eigenvectors, second.eigenvectors)


def test_non_hermitian_rejected():
    with pytest.raises(ValidationError):
        hermitian_eig(np.array([[0, 1], [0, 0]], dtype=complex))
    with pytest.raises(ValidationError):
        check_hermitian(np.ones((2, 3)))


def test_psd_sqrt_examples():
    assert np.allclose(psd_sqrt(np.diag([4.0, 9.0])), np.diag([2.0, 3.0]))
    psi = np.array([1, 1j, 0, 1]) / np.sqrt(3)
    p = np.outer(psi, psi.conj())
    assert np.allclose(psd_sqrt(p), p, atol=1e-8)


@pytest.mark.parametrize("seed", range(5))
def test_psd_sqrt_squares_back(seed):
    rho = random_density(3, np.random.default_rng(seed))
    s = psd_sqrt(rho)
    assert np.linalg.norm(s @ s - rho) < 1e-8
    assert np.linalg.norm(psd_sqrt(s @ s) - s) < 1e-7


def test_psd_sqrt_rejects_negative():
    with pytest.raises(NotPSDError):
        psd_sqrt(np.diag([1.0, -1e-3]))


def test_clip_spectrum_small_negative():
    w, _ = clip_spectrum(np.diag([1.0, -1e-10]))
    assert np.array_equal(w, [0.0, 1.0])


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 6), st.integers(0, 2**31 - 1))
def test_eig_reconstructs_matrix(d, seed):
    a = random_hermitian(d, np.random.default_rng(seed))
    w, v = hermitian_eig(a)
    assert np.allclose((v * w) @ v.conj().T, a, atol=1e-9 * max(1, np.linalg.norm(a)))
