import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from genqst.errors import ValidationError
from genqst.mle import MleConfig, mle_project, objective, project_density, project_simplex
from genqst.povm import ProbDist, coarse_grain_p6_to_p4, make_povm, povm_distribution
from genqst.quantum_sim import build_ghz, projector, random_state

from conftest import random_density

P4 = make_povm("pauli4")


def unphysical_input(n, seed, depth=0.02):
    """Distribution of a trace-1 Hermitian matrix with one eigenvalue -depth."""
    rng = np.random.default_rng(seed)
    psi = random_state(n, 3, seed) if n > 1 else np.array([1, 0], dtype=complex)
    d = 1 << n
    phi = rng.normal(size=d) + 1j * rng.normal(size=d)
    phi -= psi * np.vdot(psi, phi)
    phi /= np.linalg.norm(phi)
    a = (1 + depth) * np.outer(psi, psi.conj()) - depth * np.outer(phi, phi.conj())
    return a, povm_distribution(a, P4)


def check_physical(fit):
    w = np.linalg.eigvalsh(fit.rho)
    assert w.min() >= -1e-9
    assert abs(np.trace(fit.rho).real - 1) < 1e-9
    assert np.allclose(fit.rho, fit.rho.conj().T, atol=1e-12)
    assert np.allclose(fit.p_mle.values, povm_distribution(fit.rho, P4).values, atol=1e-9)
    assert np.all(np.diff(fit.history) <= 0)


def test_simplex_projection():
    assert np.allclose(project_simplex(np.array([0.2, 0.3, 0.5])), [0.2, 0.3, 0.5])
    assert np.allclose(project_simplex(np.array([2.0, 0.0])), [1.0, 0.0])
    assert np.allclose(project_simplex(np.array([1.2, -0.2])), [1.0, 0.0])
    x = project_simplex(np.random.default_rng(0).normal(size=10))
    assert x.min() >= 0 and x.sum() == pytest.approx(1)


def test_project_density_is_physical():
    a, _ = unphysical_input(2, 0)
    rho = project_density(a)
    assert np.linalg.eigvalsh(rho).min() >= -1e-12
    assert np.trace(rho).real == pytest.approx(1)


@pytest.mark.parametrize("seed", range(3))
def test_physical_input_fixed_point(seed):
    rho = random_density(2, np.random.default_rng(seed), rank=2)
    fit = mle_project(povm_distribution(rho, P4), P4)
    assert fit.objective < 1e-10
    assert np.linalg.norm(fit.rho - rho) < 1e-6
    assert fit.converged


def test_pure_ghz_fixed_point():
    rho = projector(build_ghz(3))
    fit = mle_project(povm_distribution(rho, P4), P4)
    assert fit.objective < 1e-10
    assert np.linalg.norm(fit.rho - rho) < 1e-6


def test_unphysical_input_improves():
    _, p = unphysical_input(2, 3)
    fit = mle_project(p, P4)
    check_physical(fit)
    assert fit.objective < fit.history[0]


@pytest.mark.parametrize("n", [1, 2, 3])
def test_maximally_mixed(n):
    d = 1 << n
    fit = mle_project(povm_distribution(np.eye(d) / d, P4), P4)
    assert np.allclose(fit.rho, np.eye(d) / d, atol=1e-8)


@settings(max_examples=15, deadline=None)
@given(st.integers(1, 3), st.integers(0, 10_000), st.floats(0.005, 0.2))
def test_output_always_physical(n, seed, depth):
    _, p = unphysical_input(n, seed, depth)
    fit = mle_project(p, P4)
    check_physical(fit)
    again = mle_project(fit.p_mle, P4)
    assert np.linalg.norm(again.rho - fit.rho) < 1e-6


def test_arbitrary_distribution_input():
    p = ProbDist(2, 4, np.random.default_rng(5).dirichlet(np.ones(16)))
    check_physical(mle_project(p, P4))


def test_iteration_cap_returns_best():
    _, p = unphysical_input(3, 1, 0.1)
    fit = mle_project(p, P4, MleConfig(max_iters=2))
    assert fit.iterations == 2
    assert not fit.converged
    assert fit.objective == min(fit.history)


def test_objective_matches_definition():
    rho = random_density(2, np.random.default_rng(2))
    p = ProbDist(2, 4, np.full(16, 1 / 16))
    f, r = objective(rho, p, P4)
    assert f == pytest.approx(np.sum((povm_distribution(rho, P4).values - 1 / 16) ** 2))


def test_requires_pauli4():
    p6 = povm_distribution(np.eye(2) / 2, make_povm("pauli6"))
    with pytest.raises(ValidationError):
        mle_project(p6, make_povm("pauli6"))
    fit = mle_project(coarse_grain_p6_to_p4(p6), P4)
    assert np.allclose(fit.rho, np.eye(2) / 2, atol=1e-8)
