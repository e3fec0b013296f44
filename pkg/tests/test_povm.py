import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from genqst.errors import CorrectionError, NotInvertibleError, ValidationError
from genqst.povm import (
    OutcomeDataset,
    ProbDist,
    _dense_linear_inversion,
    _dense_povm_distribution,
    apply_confusion,
    basis_histograms,
    bayes_correct,
    coarse_grain_p6_to_p4,
    empirical_distribution,
    histograms_to_povm,
    load_dataset,
    make_povm,
    povm_distribution,
    reconstruct_linear_inversion,
    sample_dataset,
    sample_measurements,
    save_dataset,
)
from genqst.quantum_sim import READOUT_TABLE, NoiseModel, build_ghz, densify, projector, random_state

from conftest import random_density

ZERO = np.diag([1.0, 0.0]).astype(complex)
P4 = make_povm("pauli4")
P6 = make_povm("pauli6")


@pytest.mark.parametrize("povm", [P4, P6])
def test_elements_form_povm(povm):
    assert np.allclose(povm.elements.sum(axis=0), np.eye(2), atol=1e-12)
    for m in povm.elements:
        assert np.allclose(m, m.conj().T)
        assert np.linalg.eigvalsh(m).min() > -1e-12
    gram = np.einsum("aij,bji->ab", povm.elements, povm.elements)
    assert np.allclose(povm.overlap, gram, atol=1e-12)


def test_pauli4_overlap_matrix():
    expected = np.array([[1, 0.5, 0.5, 1], [0.5, 1, 0.5, 1], [0.5, 0.5, 1, 1], [1, 1, 1, 6]]) / 9
    assert np.allclose(P4.overlap, expected, atol=1e-12)
    assert P4.overlap[0, 0] == pytest.approx(1 / 9)
    assert P4.overlap[3, 3] == pytest.approx(6 / 9)
    assert np.allclose(P4.overlap @ P4.overlap_inverse, np.eye(4), atol=1e-10)


def test_pauli6_overlap_singular():
    assert P6.overlap_inverse is None
    assert abs(np.linalg.det(P6.overlap)) < 1e-12


def test_distribution_examples():
    assert np.allclose(povm_distribution(ZERO, P4).values, [1 / 3, 1 / 6, 1 / 6, 1 / 3])
    assert np.allclose(povm_distribution(np.eye(2) / 2, P4).values, [1 / 6, 1 / 6, 1 / 6, 1 / 2])
    bell = projector(build_ghz(2))
    assert povm_distribution(bell, P4).values[0] == pytest.approx(1 / 18)


@pytest.mark.parametrize("povm", [P4, P6])
@pytest.mark.parametrize("n", [1, 2, 3])
def test_contraction_matches_dense(povm, n):
    rho = random_density(n, np.random.default_rng(n))
    fast = povm_distribution(rho, povm).values
    assert np.allclose(fast, _dense_povm_distribution(rho, povm).values, atol=1e-14)
    assert abs(fast.sum() - 1) < 1e-12


def test_linear_inversion_examples():
    assert np.linalg.norm(reconstruct_linear_inversion(povm_distribution(ZERO, P4), P4) - ZERO) < 1e-10
    for n in (1, 2, 3):
        mixed = np.eye(1 << n) / (1 << n)
        assert np.allclose(reconstruct_linear_inversion(povm_distribution(mixed, P4), P4), mixed, atol=1e-12)
    rho = densify(random_state(3, 5, 11))
    assert np.linalg.norm(reconstruct_linear_inversion(povm_distribution(rho, P4), P4) - rho) < 1e-9


@pytest.mark.parametrize("n", [1, 2])
def test_linear_inversion_matches_dense(n):
    rho = random_density(n, np.random.default_rng(10 + n))
    d = povm_distribution(rho, P4)
    assert np.allclose(reconstruct_linear_inversion(d, P4), _dense_linear_inversion(d, P4), atol=1e-10)


def test_linear_inversion_unphysical_input_stays_hermitian():
    d = ProbDist(2, 4, np.random.default_rng(0).dirichlet(np.ones(16)))
    rho = reconstruct_linear_inversion(d, P4)
    assert np.allclose(rho, rho.conj().T, atol=1e-9)
    assert abs(np.trace(rho) - 1) < 1e-9


def test_linear_inversion_refuses_pauli6():
    with pytest.raises(NotInvertibleError, match="coarse-grain"):
        reconstruct_linear_inversion(povm_distribution(ZERO, P6), P6)


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 4), st.integers(0, 2**31 - 1))
def test_round_trip_property(n, seed):
    rho = random_density(n, np.random.default_rng(seed))
    back = reconstruct_linear_inversion(povm_distribution(rho, P4), P4)
    assert np.linalg.norm(back - rho) < 1e-9


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 3), st.integers(0, 2**31 - 1))
def test_coarse_grain_exact_property(n, seed):
    rho = random_density(n, np.random.default_rng(seed))
    p6 = coarse_grain_p6_to_p4(povm_distribution(rho, P6))
    assert np.max(np.abs(p6.values - povm_distribution(rho, P4).values)) < 1e-12


def test_coarse_grain_single_qubit_and_dataset():
    d = ProbDist(1, 6, [0.1, 0.2, 0.3, 0.15, 0.15, 0.1])
    assert np.allclose(coarse_grain_p6_to_p4(d).values, [0.1, 0.2, 0.3, 0.4])
    data = OutcomeDataset(2, 6, [[4, 5], [0, 3], [2, 1]], "pauli6")
    assert coarse_grain_p6_to_p4(data).shots.tolist() == [[3, 3], [0, 3], [2, 1]]
    with pytest.raises(ValidationError):
        coarse_grain_p6_to_p4(povm_distribution(ZERO, P4))


def test_empirical_examples():
    d = OutcomeDataset(1, 4, [[0], [0], [3], [3]])
    assert np.allclose(empirical_distribution(d).values, [0.5, 0, 0, 0.5])
    one = empirical_distribution(OutcomeDataset(2, 4, [[1, 2]]))
    assert one.values[1 * 4 + 2] == 1 and one.values.sum() == 1
    with pytest.raises(ValidationError):
        empirical_distribution(OutcomeDataset(1, 4, np.zeros((0, 1))))


def test_dataset_symbol_range():
    with pytest.raises(ValidationError):
        OutcomeDataset(1, 4, [[4]])


def test_sampling_zero_state_frequencies():
    n = 100_000
    freq = empirical_distribution(sample_dataset(ZERO, P4, n, seed=3)).values
    p = np.array([1 / 3, 1 / 6, 1 / 6, 1 / 3])
    assert np.all(np.abs(freq - p) < 5 * np.sqrt(p * (1 - p) / n))


def test_empirical_concentration():
    rho = densify(build_ghz(2), NoiseModel(0.1))
    exact = povm_distribution(rho, P4).values
    n = 1_000_000
    emp = empirical_distribution(sample_dataset(rho, P4, n, seed=8)).values
    assert 0.5 * np.abs(emp - exact).sum() < 5 * np.sqrt(16 / n)


def test_sampling_deterministic_and_identity_readout():
    rho = projector(build_ghz(3))
    a = sample_dataset(rho, P4, 2000, seed=5)
    b = sample_dataset(rho, P4, 2000, seed=5)
    assert np.array_equal(a.shots, b.shots)
    perfect = NoiseModel(readout=((1.0, 1.0),) * 3)
    c = sample_dataset(rho, P4, 2000, NoiseModel(), seed=5)
    d = sample_dataset(rho, P4, 2000, perfect, seed=5)
    assert np.array_equal(a.shots, c.shots) and np.array_equal(c.shots, d.shots)


def test_sampling_keeps_joint_correlations():
    # Bell in the z basis: both bits always agree.
    bases, bits = sample_measurements(projector(build_ghz(2)), 5000, seed=2)
    zz = np.all(bases == 0, axis=1)
    assert zz.sum() > 300
    assert np.all(bits[zz, 0] == bits[zz, 1])


def test_pauli6_stream_coarse_grains_to_pauli4():
    rho = densify(random_state(2, 4, 3), NoiseModel(0.05))
    n = 200_000
    p6 = empirical_distribution(coarse_grain_p6_to_p4(sample_dataset(rho, P6, n, seed=1))).values
    p4 = empirical_distribution(sample_dataset(rho, P4, n, seed=2)).values
    assert 0.5 * np.abs(p6 - p4).sum() < 5 * np.sqrt(16 / n)


def test_per_qubit_marginals_match_exact():
    rho = densify(random_state(3, 4, 4), NoiseModel(0.02))
    n = 100_000
    emp = empirical_distribution(sample_dataset(rho, P4, n, seed=4)).tensor()
    exact = povm_distribution(rho, P4).tensor()
    for q in range(3):
        axes = tuple(a for a in range(3) if a != q)
        pe, px = emp.sum(axis=axes), exact.sum(axis=axes)
        assert np.all(np.abs(pe - px) < 5 * np.sqrt(px * (1 - px) / n))


C1 = np.array([[0.99, 0.10], [0.01, 0.90]])


def test_bayes_identity_and_round_trip():
    h = {(0,): np.array([0.7, 0.3])}
    assert np.allclose(bayes_correct(h, [np.eye(2)])[(0,)], [0.7, 0.3])
    true = np.array([0.99, 0.01])
    noisy = apply_confusion(true, [C1])
    assert np.allclose(bayes_correct({(0,): noisy}, [C1])[(0,)], true, atol=1e-12)


def test_bayes_improves_noisy_zero_state():
    noise = NoiseModel(readout=(READOUT_TABLE[0],))
    bases, bits = sample_measurements(ZERO, 100_000, noise, seed=6)
    z = bases[:, 0] == 0
    hist = basis_histograms(bases[z], bits[z])[(0,)]
    raw = hist / hist.sum()
    fixed = bayes_correct({(0,): hist}, noise.confusion(1))[(0,)]
    truth = np.array([1.0, 0.0])
    assert np.abs(fixed - truth).sum() < np.abs(raw - truth).sum()


def test_bayes_rejects_singular():
    with pytest.raises(CorrectionError):
        bayes_correct({(0,): np.array([1.0, 0.0])}, [np.array([[0.5, 0.5], [0.5, 0.5]])])


def test_histograms_to_povm_recovers_exact():
    rho = densify(random_state(2, 3, 1))
    from genqst.quantum_sim import rotated_z_distribution, BASES

    hist = {(i, j): rotated_z_distribution(rho, BASES[i] + BASES[j]) for i in range(3) for j in range(3)}
    for kind, povm in (("pauli4", P4), ("pauli6", P6)):
        assert np.allclose(histograms_to_povm(hist, kind, 2).values, povm_distribution(rho, povm).values, atol=1e-12)


def test_dataset_file_round_trip(tmp_path):
    data = sample_dataset(projector(build_ghz(2)), P6, 50, seed=17)
    path = tmp_path / "d.txt"
    save_dataset(data, path)
    assert path.read_text().splitlines()[0] == "#povm=pauli6 qubits=2 seed=17"
    back = load_dataset(path)
    assert np.array_equal(back.shots, data.shots)
    assert (back.K, back.povm, back.seed) == (6, "pauli6", 17)


def test_dataset_bad_header(tmp_path):
    path = tmp_path / "bad.txt"
    path.write_text("povm=pauli4\n0 1\n")
    with pytest.raises(ValidationError):
        load_dataset(path)
