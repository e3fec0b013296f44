"""State preparation, noise channels and basis-rotated measurement statistics.

Qubit 0 is the most significant bit of every basis-state index, matching the
left-to-right order of Kronecker products.
"""
from dataclasses import dataclass, field
from math import cos, sin, sqrt

import numpy as np

from .errors import ValidationError
from .linalg import kron_all

MAX_QUBITS = 8

I2 = np.eye(2, dtype=complex)
X = np.array([[0, 1], [1, 0]], dtype=complex)
Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
Z = np.array([[1, 0], [0, -1]], dtype=complex)
H = np.array([[1, 1], [1, -1]], dtype=complex) / sqrt(2)
PAULI = {"x": X, "y": Y, "z": Z}

# Rotations taking the +1 eigenstate of each Pauli to |0> (and -1 to |1>).
# For y the +1 eigenstate is |l> = (|0> + i|1>)/sqrt(2).
BASIS_CHANGE = {
    "z": I2,
    "x": H,
    "y": H @ np.diag([1, -1j]),
}
BASES = ("z", "x", "y")

# Readout fidelities (F_g, F_e) per qubit Q1..Q5 measured on the device.
READOUT_TABLE = (
    (0.990, 0.899),
    (0.985, 0.933),
    (0.973, 0.922),
    (0.988, 0.917),
    (0.985, 0.918),
)


def rx(theta):
    return np.array([[cos(theta / 2), -1j * sin(theta / 2)], [-1j * sin(theta / 2), cos(theta / 2)]])


def ry(theta):
    return np.array([[cos(theta / 2), -sin(theta / 2)], [sin(theta / 2), cos(theta / 2)]], dtype=complex)


def rz(theta):
    return np.diag([np.exp(-0.5j * theta), np.exp(0.5j * theta)])


_FIXED_GATES = {"X": X, "H": H}
_ROTATIONS = {"Rx": rx, "Ry": ry, "Rz": rz}


@dataclass(frozen=True)
class Gate:
    kind: str
    qubits: tuple
    angle: float = 0.0


@dataclass
class Circuit:
    n_qubits: int
    gates: list = field(default_factory=list)

    def __post_init__(self):
        for g in self.gates:
            self._check(g)

    def _check(self, gate):
        if gate.kind not in _FIXED_GATES and gate.kind not in _ROTATIONS and gate.kind != "CZ":
            raise ValidationError(f"unknown gate {gate.kind!r}")
        arity = 2 if gate.kind == "CZ" else 1
        if len(gate.qubits) != arity:
            raise ValidationError(f"{gate.kind} acts on {arity} qubit(s), got {gate.qubits}")
        for q in gate.qubits:
            if not 0 <= q < self.n_qubits:
                raise ValidationError(f"qubit {q} out of range for {self.n_qubits} qubits")
        if arity == 2 and gate.qubits[0] == gate.qubits[1]:
            raise ValidationError("CZ needs two distinct qubits")

    def add(self, kind, *qubits, angle=0.0):
        g = Gate(kind, tuple(int(q) for q in qubits), float(angle))
        self._check(g)
        self.gates.append(g)
        return self


@dataclass(frozen=True)
class NoiseModel:
    """Depolarizing strength after preparation plus per-qubit readout confusion.

    ``readout`` is a tuple of (F_g, F_e) pairs, one per qubit, or None for
    perfect readout.
    """

    depolarizing_p: float = 0.0
    readout: tuple = None

    def __post_init__(self):
        if not 0.0 <= self.depolarizing_p <= 1.0:
            raise ValidationError(f"depolarizing_p must lie in [0, 1], got {self.depolarizing_p}")
        if self.readout is not None:
            for fg, fe in self.readout:
                if not (0.0 <= fg <= 1.0 and 0.0 <= fe <= 1.0):
                    raise ValidationError(f"readout fidelities must lie in [0, 1], got {(fg, fe)}")

    def confusion(self, n_qubits):
        """Per-qubit 2x2 column-stochastic matrices C[observed, true]."""
        if self.readout is None:
            return [np.eye(2) for _ in range(n_qubits)]
        if len(self.readout) < n_qubits:
            raise ValidationError(f"readout table has {len(self.readout)} entries, need {n_qubits}")
        return [confusion_matrix(fg, fe) for fg, fe in self.readout[:n_qubits]]


def confusion_matrix(f_g, f_e):
    return np.array([[f_g, 1.0 - f_e], [1.0 - f_g, f_e]])


def n_qubits_of(vec_or_mat):
    dim = np.asarray(vec_or_mat).shape[0]
    n = dim.bit_length() - 1
    if dim != 1 << n or n < 1:
        raise ValidationError(f"dimension {dim} is not a power of two")
    return n


def zero_state(n):
    _check_n(n, 1)
    s = np.zeros(1 << n, dtype=complex)
    s[0] = 1.0
    return s


def _check_n(n, lo):
    if not lo <= n <= MAX_QUBITS:
        raise ValidationError(f"qubit count must lie in [{lo}, {MAX_QUBITS}], got {n}")


def _apply_1q(state, u, q, n):
    t = state.reshape((2,) * n)
    t = np.tensordot(u, t, axes=([1], [q]))
    return np.moveaxis(t, 0, q).reshape(-1)


def _apply_cz(state, q0, q1, n):
    t = state.reshape((2,) * n).copy()
    idx = [slice(None)] * n
    idx[q0] = 1
    idx[q1] = 1
    t[tuple(idx)] *= -1
    return t.reshape(-1)


def apply_circuit(circuit, state):
    state = np.asarray(state, dtype=complex)
    n = circuit.n_qubits
    if state.shape != (1 << n,):
        raise ValidationError(f"state of length {state.shape} does not match {n} qubits")
    if abs(np.vdot(state, state).real - 1.0) > 1e-10:
        raise ValidationError("input state is not normalized")
    for g in circuit.gates:
        if g.kind == "CZ":
            state = _apply_cz(state, g.qubits[0], g.qubits[1], n)
        elif g.kind in _ROTATIONS:
            state = _apply_1q(state, _ROTATIONS[g.kind](g.angle), g.qubits[0], n)
        else:
            state = _apply_1q(state, _FIXED_GATES[g.kind], g.qubits[0], n)
    return state


def ghz_circuit(n, experimental_variant=False):
    """H on every qubit, a CZ/H ladder along the chain, optional X layer on odd qubits."""
    c = Circuit(n)
    c.add("H", 0)
    for q in range(1, n):
        c.add("H", q).add("CZ", q - 1, q).add("H", q)
    if experimental_variant:
        for q in range(1, n, 2):
            c.add("X", q)
    return c


def build_ghz(n, experimental_variant=False):
    _check_n(n, 2)
    return apply_circuit(ghz_circuit(n, experimental_variant), zero_state(n))


def random_circuit(n, depth, seed, angle_override=None):
    """Layers of Ry(theta) Rz(phi) on every qubit followed by a CZ chain.

    CZ pairs alternate between even and odd offsets from layer to layer.
    ``angle_override`` replaces every drawn angle (used to pin the circuit).
    """
    _check_n(n, 1)
    if depth < 1:
        raise ValidationError(f"depth must be >= 1, got {depth}")
    rng = np.random.default_rng(seed)
    c = Circuit(n)
    for layer in range(depth):
        angles = rng.uniform(0.0, 2 * np.pi, size=(n, 2))
        if angle_override is not None:
            angles[:] = angle_override
        for q in range(n):
            c.add("Ry", q, angle=angles[q, 0]).add("Rz", q, angle=angles[q, 1])
        for q in range(layer % 2, n - 1, 2):
            c.add("CZ", q, q + 1)
    return c


def random_state(n, depth, seed, angle_override=None):
    return apply_circuit(random_circuit(n, depth, seed, angle_override), zero_state(n))


def projector(state):
    s = np.asarray(state, dtype=complex)
    return np.outer(s, s.conj())


def partial_trace(rho, keep, n):
    """Reduced density matrix on the qubits listed in ``keep`` (kept in given order)."""
    keep = list(keep)
    t = np.asarray(rho).reshape((2,) * (2 * n))
    drop = [q for q in range(n) if q not in keep]
    # Trace out from the highest index so earlier axis numbers stay valid.
    cur = n
    for q in sorted(drop, reverse=True):
        t = np.trace(t, axis1=q, axis2=q + cur)
        cur -= 1
    remaining = [q for q in range(n) if q in keep]
    perm = [remaining.index(q) for q in keep]
    k = len(keep)
    t = np.transpose(t, perm + [p + k for p in perm])
    return t.reshape(1 << k, 1 << k)


def depolarize_qubit(rho, q, p, n):
    """(1-p) rho + p * (I/2 on qubit q) tensor Tr_q rho."""
    if p == 0.0:
        return rho
    t = rho.reshape((2,) * (2 * n))
    reduced = np.trace(t, axis1=q, axis2=q + n)
    mixed = np.multiply.outer(reduced, I2 / 2)
    # mixed axes: other rows, other cols, q_row, q_col -> restore original order.
    others = [k for k in range(n) if k != q]
    src = others + [k + n for k in others] + [q, q + n]
    mixed = np.transpose(mixed, np.argsort(src))
    return (1.0 - p) * rho + p * mixed.reshape(rho.shape)


def densify(state, noise=None):
    """Pure state -> density matrix, then depolarize every qubit."""
    rho = projector(state)
    n = n_qubits_of(rho)
    p = 0.0 if noise is None else noise.depolarizing_p
    for q in range(n):
        rho = depolarize_qubit(rho, q, p, n)
    return rho


def basis_unitary(bases):
    return kron_all(BASIS_CHANGE[b] for b in bases)


def rotated_z_distribution(rho, bases):
    """Born-rule distribution of Z-basis bitstrings after rotating each qubit into ``bases``."""
    rho = np.asarray(rho, dtype=complex)
    n = n_qubits_of(rho)
    if len(bases) != n:
        raise ValidationError(f"need {n} bases, got {len(bases)}")
    for b in bases:
        if b not in BASIS_CHANGE:
            raise ValidationError(f"unknown basis {b!r}")
    u = basis_unitary(bases)
    probs = np.einsum("ij,jk,ik->i", u, rho, u.conj()).real
    probs = np.clip(probs, 0.0, None)
    return probs / probs.sum()


def entanglement_entropy(state, n_left):
    """Von Neumann entropy in bits of the first ``n_left`` qubits."""
    n = n_qubits_of(state)
    red = partial_trace(projector(state), range(n_left), n)
    w = np.linalg.eigvalsh(red)
    w = w[w > 1e-14]
    return float(-np.sum(w * np.log2(w)))


def ghz_fidelity_under_depolarizing(n, p, experimental_variant=False):
    """Uhlmann fidelity between the depolarized GHZ state and the ideal one."""
    psi = build_ghz(n, experimental_variant)
    rho = densify(psi, NoiseModel(depolarizing_p=p))
    return float(sqrt(max(np.vdot(psi, rho @ psi).real, 0.0)))


def calibrate_depolarizing(n, target_fidelity, experimental_variant=False):
    """Per-qubit depolarizing probability giving the requested GHZ fidelity."""
    from scipy.optimize import brentq

    f0 = ghz_fidelity_under_depolarizing(n, 0.0, experimental_variant)
    f1 = ghz_fidelity_under_depolarizing(n, 1.0, experimental_variant)
    if not f1 <= target_fidelity <= f0:
        raise ValidationError(f"target fidelity {target_fidelity} outside [{f1:.4f}, {f0:.4f}]")
    return brentq(
        lambda p: ghz_fidelity_under_depolarizing(n, p, experimental_variant) - target_fidelity,
        0.0,
        1.0,
        xtol=1e-12,
    )
