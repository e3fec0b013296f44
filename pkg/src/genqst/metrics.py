"""Evaluation quantities: classical fidelity, quantum fidelity, two-body Pauli correlations."""
import numpy as np

from .errors import ValidationError
from .linalg import PSD_REJECT, check_hermitian, hermitian_eig, psd_sqrt
from .povm import ProbDist, make_povm, reconstruct_linear_inversion
from .quantum_sim import PAULI, n_qubits_of


def _values(p):
    return p.values if isinstance(p, ProbDist) else np.asarray(p, dtype=float)


def classical_fidelity(p, q):
    """Bhattacharyya coefficient sum_a sqrt(p(a) q(a)); zero-probability outcomes contribute 0."""
    a, b = _values(p), _values(q)
    if a.shape != b.shape:
        raise ValidationError(f"shape mismatch {a.shape} vs {b.shape}")
    return float(np.clip(np.sum(np.sqrt(np.clip(a, 0, None) * np.clip(b, 0, None))), 0.0, 1.0))


def _check_state(rho, name):
    rho = check_hermitian(rho, name=name)
    if abs(np.trace(rho).real - 1.0) > 1e-6:
        raise ValidationError(f"{name} does not have unit trace")
    if hermitian_eig(rho).eigenvalues[0] < -PSD_REJECT:
        raise ValidationError(f"{name} is not positive semidefinite")
    return rho


def quantum_fidelity(a, b):
    """Uhlmann fidelity Tr sqrt(sqrt(a) b sqrt(a)) (not squared)."""
    a = _check_state(a, "a")
    b = _check_state(b, "b")
    if a.shape != b.shape:
        raise ValidationError(f"shape mismatch {a.shape} vs {b.shape}")
    sa = psd_sqrt(a)
    inner = sa @ b @ sa
    inner = 0.5 * (inner + inner.conj().T)
    w = hermitian_eig(inner).eigenvalues
    # Round-off eigenvalues (~1e-17) would each add ~1e-8 after the square root.
    w = np.where(w > 1e-13 * max(w[-1], 1e-300), w, 0.0)
    return float(min(np.sum(np.sqrt(w)), 1.0))


def _pair_operator(axis):
    if axis not in ("x", "z", "y"):
        raise ValidationError(f"axis must be 'x' or 'z', got {axis!r}")
    s = PAULI[axis]
    return np.kron(s, s)


def _check_pair(j, k, n):
    if j == k:
        raise ValidationError("correlation needs two distinct qubits")
    for q in (j, k):
        if not 0 <= q < n:
            raise ValidationError(f"qubit {q} out of range for {n} qubits")


def pauli_correlation(rho, j, k, axis):
    """Tr(rho sigma_axis^(j) sigma_axis^(k))."""
    from .quantum_sim import partial_trace

    rho = np.asarray(rho, dtype=complex)
    n = n_qubits_of(rho)
    _check_pair(j, k, n)
    red = partial_trace(rho, [j, k], n)
    return float(np.trace(red @ _pair_operator(axis)).real)


def correlation_from_distribution(dist, j, k, axis):
    """Same correlation read from a Pauli-4 outcome distribution via the two-qubit marginal."""
    n = dist.n_qubits
    _check_pair(j, k, n)
    if dist.K != 4:
        raise ValidationError("correlations from distributions need the Pauli-4 alphabet")
    others = tuple(q for q in range(n) if q not in (j, k))
    marg = dist.tensor().sum(axis=others)
    if j > k:
        marg = marg.T
    red = reconstruct_linear_inversion(ProbDist(2, 4, marg.reshape(-1)), make_povm("pauli4"))
    return float(np.trace(red @ _pair_operator(axis)).real)


def all_correlations(source, axes=("x", "z")):
    """{(axis, j, k): value} for every pair j < k; ``source`` is a density matrix or ProbDist."""
    if isinstance(source, ProbDist):
        n, fn = source.n_qubits, correlation_from_distribution
    else:
        n, fn = n_qubits_of(source), pauli_correlation
    return {(ax, j, k): fn(source, j, k, ax) for ax in axes for j in range(n) for k in range(j + 1, n)}


def tv_distance(p, q):
    return 0.5 * float(np.abs(_values(p) - _values(q)).sum())
