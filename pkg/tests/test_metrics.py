import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from genqst.errors import ValidationError
from genqst.metrics import (
    all_correlations,
    classical_fidelity,
    correlation_from_distribution,
    pauli_correlation,
    quantum_fidelity,
    tv_distance,
)
from genqst.povm import ProbDist, make_povm, povm_distribution
from genqst.quantum_sim import NoiseModel, build_ghz, densify, projector, random_state

from conftest import random_density

P4 = make_povm("pauli4")


def test_classical_fidelity_examples():
    p = ProbDist(2, 4, np.random.default_rng(0).dirichlet(np.ones(16)))
    assert classical_fidelity(p, p) == pytest.approx(1, abs=1e-12)
    assert classical_fidelity([1, 0], [0, 1]) == 0
    assert classical_fidelity([1, 0], [0.5, 0.5]) == pytest.approx(np.sqrt(0.5))
    with pytest.raises(ValidationError):
        classical_fidelity([1, 0], [1, 0, 0])


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 20), st.integers(0, 2**31 - 1))
def test_classical_fidelity_symmetric_bounded(k, seed):
    rng = np.random.default_rng(seed)
    p, q = rng.dirichlet(np.ones(k)), rng.dirichlet(np.ones(k))
    f = classical_fidelity(p, q)
    assert 0 <= f <= 1
    assert f == pytest.approx(classical_fidelity(q, p), abs=1e-15)
    assert tv_distance(p, q) >= 1 - f - 1e-12  # Bhattacharyya vs total variation


def test_quantum_fidelity_examples():
    rho = random_density(2, np.random.default_rng(1))
    assert quantum_fidelity(rho, rho) == pytest.approx(1, abs=1e-9)
    a = projector(np.array([1, 0]))
    b = projector(np.array([0, 1]))
    assert quantum_fidelity(a, b) == pytest.approx(0, abs=1e-9)


@pytest.mark.parametrize("seed", range(4))
def test_pure_versus_mixed_closed_form(seed):
    rng = np.random.default_rng(seed)
    psi = random_state(3, 4, seed)
    rho = random_density(3, rng)
    expected = np.sqrt(np.vdot(psi, rho @ psi).real)
    assert quantum_fidelity(projector(psi), rho) == pytest.approx(expected, abs=1e-8)


@settings(max_examples=20, deadline=None)
@given(st.integers(1, 3), st.integers(0, 2**31 - 1))
def test_quantum_fidelity_symmetric_and_unitarily_invariant(n, seed):
    rng = np.random.default_rng(seed)
    a, b = random_density(n, rng), random_density(n, rng, rank=1)
    d = 1 << n
    u, _ = np.linalg.qr(rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d)))
    f = quantum_fidelity(a, b)
    assert f == pytest.approx(quantum_fidelity(b, a), abs=1e-8)
    assert f == pytest.approx(quantum_fidelity(u @ a @ u.conj().T, u @ b @ u.conj().T), abs=1e-8)


def test_quantum_fidelity_rejects_unphysical():
    with pytest.raises(ValidationError):
        quantum_fidelity(np.diag([1.2, -0.2]), np.eye(2) / 2)
    with pytest.raises(ValidationError):
        quantum_fidelity(np.eye(2), np.eye(2) / 2)


def test_bell_correlations():
    bell = projector(build_ghz(2))
    assert pauli_correlation(bell, 0, 1, "z") == pytest.approx(1)
    assert pauli_correlation(bell, 0, 1, "x") == pytest.approx(1)
    flipped = projector(build_ghz(2, experimental_variant=True))
    assert pauli_correlation(flipped, 0, 1, "z") == pytest.approx(-1)


def test_ghz4_correlations():
    rho = projector(build_ghz(4))
    for (ax, j, k), v in all_correlations(rho).items():
        assert v == pytest.approx(1.0 if ax == "z" else 0.0, abs=1e-12)


def test_correlation_index_errors():
    rho = projector(build_ghz(3))
    with pytest.raises(ValidationError):
        pauli_correlation(rho, 1, 1, "z")
    with pytest.raises(ValidationError):
        pauli_correlation(rho, 0, 3, "z")
    with pytest.raises(ValidationError):
        pauli_correlation(rho, 0, 1, "w")


@settings(max_examples=15, deadline=None)
@given(st.integers(2, 4), st.integers(0, 2**31 - 1))
def test_correlation_paths_agree(n, seed):
    rho = random_density(n, np.random.default_rng(seed))
    dist = povm_distribution(rho, P4)
    for j in range(n):
        for k in range(n):
            if j != k:
                for ax in ("x", "z"):
                    assert abs(correlation_from_distribution(dist, j, k, ax) - pauli_correlation(rho, j, k, ax)) < 1e-9


def test_all_correlations_from_distribution():
    rho = densify(build_ghz(4), NoiseModel(0.05))
    a = all_correlations(rho)
    b = all_correlations(povm_distribution(rho, P4))
    assert a.keys() == b.keys()
    assert all(abs(a[k] - b[k]) < 1e-9 for k in a)
