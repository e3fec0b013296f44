"""Pauli-4 / Pauli-6 POVMs: Born-rule statistics, shot sampling, readout
correction, coarse-graining and linear-inversion reconstruction.

Joint outcomes are base-K digit strings with qubit 0 as the most significant
digit, so a length K**N probability vector reshapes to a (K,)*N tensor whose
axis q belongs to qubit q.
"""
from dataclasses import dataclass, field
from pathlib import Path
import re
import string

import numpy as np

from .errors import CorrectionError, NotInvertibleError, ValidationError
from .quantum_sim import BASES, NoiseModel, n_qubits_of, rotated_z_distribution

KINDS = ("pauli4", "pauli6")
ALPHABET = {"pauli4": 4, "pauli6": 6}

_KET = {
    "0": np.array([1, 0], dtype=complex),
    "1": np.array([0, 1], dtype=complex),
    "+": np.array([1, 1], dtype=complex) / np.sqrt(2),
    "-": np.array([1, -1], dtype=complex) / np.sqrt(2),
    "l": np.array([1, 1j], dtype=complex) / np.sqrt(2),
    "r": np.array([1, -1j], dtype=complex) / np.sqrt(2),
}

# Basis index used in raw records: 0 = z, 1 = x, 2 = y (same order as BASES).
# Measuring bit 0 in basis b gives outcome b; bit 1 gives 3 (pauli4) or 3 + b (pauli6).
COARSE_GRAIN = np.array([0, 1, 2, 3, 3, 3])


def _proj(label):
    k = _KET[label]
    return np.outer(k, k.conj())


@dataclass
class PovmSet:
    kind: str
    elements: np.ndarray  # (K, 2, 2)
    overlap: np.ndarray  # (K, K)
    overlap_inverse: np.ndarray = None

    @property
    def K(self):
        return self.elements.shape[0]


def make_povm(kind):
    if kind == "pauli4":
        elems = [_proj("0"), _proj("+"), _proj("l"), _proj("1") + _proj("-") + _proj("r")]
    elif kind == "pauli6":
        elems = [_proj(s) for s in ("0", "+", "l", "1", "-", "r")]
    else:
        raise ValidationError(f"unknown POVM kind {kind!r}; expected one of {KINDS}")
    m = np.array(elems) / 3.0
    t = np.einsum("aij,bji->ab", m, m).real
    tinv = np.linalg.inv(t) if kind == "pauli4" else None
    return PovmSet(kind, m, t, tinv)


@dataclass
class ProbDist:
    n_qubits: int
    K: int
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.K**self.n_qubits,):
            raise ValidationError(
                f"distribution of length {self.values.shape} does not match K={self.K}, N={self.n_qubits}"
            )

    def tensor(self):
        return self.values.reshape((self.K,) * self.n_qubits)

    def check(self, tol=1e-9):
        if np.any(self.values < -tol) or abs(self.values.sum() - 1.0) > tol:
            raise ValidationError("values are not a probability distribution")
        return self


@dataclass
class OutcomeDataset:
    """Shot records: one row per shot, one column per qubit."""

    n_qubits: int
    K: int
    shots: np.ndarray
    povm: str = "pauli4"
    seed: int = 0
    noise: dict = field(default_factory=dict)

    def __post_init__(self):
        self.shots = np.asarray(self.shots, dtype=np.int64).reshape(-1, self.n_qubits)
        if self.shots.size and (self.shots.min() < 0 or self.shots.max() >= self.K):
            raise ValidationError(f"outcome symbol outside [0, {self.K})")

    def __len__(self):
        return self.shots.shape[0]

    def subset(self, idx):
        return OutcomeDataset(self.n_qubits, self.K, self.shots[idx], self.povm, self.seed, dict(self.noise))

    def indices(self):
        """Flattened base-K index of every shot."""
        w = self.K ** np.arange(self.n_qubits - 1, -1, -1)
        return self.shots @ w


_LETTERS = string.ascii_lowercase


def _apply_per_qubit(tensor, mats, n, leading=0):
    """Contract ``mats[q]`` (shape (out, in)) against axis ``leading + q`` of ``tensor``."""
    for q in range(n):
        ax = leading + q
        tensor = np.moveaxis(np.tensordot(mats[q], tensor, axes=([1], [ax])), 0, ax)
    return tensor


def povm_distribution(rho, povm):
    """Exact P(a) = Tr(M^(a) rho), contracted one qubit at a time."""
    rho = np.asarray(rho, dtype=complex)
    n = n_qubits_of(rho)
    t = rho.reshape((2,) * (2 * n))
    # Before step q the axes are (a_0..a_{q-1}, r_q..r_{n-1}, c_q..c_{n-1}), so the
    # row index of qubit q sits at axis q and its column index at axis n.
    for q in range(n):
        t = np.moveaxis(np.tensordot(povm.elements, t, axes=([2, 1], [q, n])), 0, q)
    p = t.real.reshape(-1)
    return ProbDist(n, povm.K, p)


def _dense_povm_distribution(rho, povm):
    """Reference implementation using full tensor-product elements (small N only)."""
    from .linalg import kron_all
    import itertools

    n = n_qubits_of(rho)
    out = []
    for a in itertools.product(range(povm.K), repeat=n):
        m = kron_all(povm.elements[i] for i in a)
        out.append(np.trace(m @ rho).real)
    return ProbDist(n, povm.K, np.array(out))


def empirical_distribution(data):
    if len(data) == 0:
        raise ValidationError("empty dataset")
    counts = np.bincount(data.indices(), minlength=data.K**data.n_qubits)
    return ProbDist(data.n_qubits, data.K, counts / counts.sum())


def _bits_to_outcomes(bases, bits, kind):
    if kind == "pauli4":
        return np.where(bits == 0, bases, 3)
    if kind == "pauli6":
        return np.where(bits == 0, bases, 3 + bases)
    raise ValidationError(f"unknown POVM kind {kind!r}")


def sample_measurements(rho, n_shots, noise=None, seed=0):
    """Randomized Pauli measurements: per shot draw a basis for each qubit, then a
    joint bitstring from the rotated Z distribution, then corrupt bits through the
    readout confusion matrices.

    Returns (bases, bits), both int arrays of shape (n_shots, N); bases use
    0 = z, 1 = x, 2 = y. The readout corruption draws from its own child stream
    so a perfect-readout model leaves the sample identical to the noiseless one.
    """
    if n_shots < 1:
        raise ValidationError(f"n_shots must be >= 1, got {n_shots}")
    rho = np.asarray(rho, dtype=complex)
    n = n_qubits_of(rho)
    if isinstance(seed, np.random.SeedSequence):
        # fresh copy so repeated calls with one SeedSequence spawn the same children
        ss = np.random.SeedSequence(seed.entropy, spawn_key=seed.spawn_key)
    else:
        ss = np.random.SeedSequence(seed)
    main_ss, readout_ss = ss.spawn(2)
    rng = np.random.default_rng(main_ss)
    bases = rng.integers(0, 3, size=(n_shots, n))
    bits = np.zeros((n_shots, n), dtype=np.int64)

    code = bases @ (3 ** np.arange(n - 1, -1, -1))
    shifts = np.arange(n - 1, -1, -1)
    for c in np.unique(code):
        rows = np.nonzero(code == c)[0]
        setting = [BASES[b] for b in bases[rows[0]]]
        probs = rotated_z_distribution(rho, setting)
        idx = rng.choice(probs.size, size=rows.size, p=probs)
        bits[rows] = (idx[:, None] >> shifts) & 1

    if noise is not None and noise.readout is not None:
        u = np.random.default_rng(readout_ss).random((n_shots, n))
        for q, cm in enumerate(noise.confusion(n)):
            flip_prob = np.where(bits[:, q] == 0, cm[1, 0], cm[0, 1])
            bits[:, q] ^= (u[:, q] < flip_prob).astype(np.int64)
    return bases, bits


def sample_dataset(rho, povm, n_shots, noise=None, seed=0):
    kind = povm.kind if isinstance(povm, PovmSet) else povm
    bases, bits = sample_measurements(rho, n_shots, noise, seed)
    n = bases.shape[1]
    flags = {
        "depolarizing_p": 0.0 if noise is None else noise.depolarizing_p,
        "readout": noise is not None and noise.readout is not None,
    }
    return OutcomeDataset(n, ALPHABET[kind], _bits_to_outcomes(bases, bits, kind), kind, seed, flags)


def coarse_grain_p6_to_p4(obj):
    """Merge Pauli-6 outcomes 3, 4, 5 into the Pauli-4 outcome 3."""
    if obj.K != 6:
        raise ValidationError(f"coarse-graining needs a Pauli-6 alphabet, got K={obj.K}")
    if isinstance(obj, OutcomeDataset):
        return OutcomeDataset(obj.n_qubits, 4, COARSE_GRAIN[obj.shots], "pauli4", obj.seed, dict(obj.noise))
    n = obj.n_qubits
    t = obj.tensor()
    merge = np.zeros((4, 6))
    merge[COARSE_GRAIN, np.arange(6)] = 1.0
    return ProbDist(n, 4, _apply_per_qubit(t, [merge] * n, n).reshape(-1))


def basis_histograms(bases, bits):
    """Group raw records by basis setting: {bases tuple: bit-string probability vector}."""
    n = bases.shape[1]
    weights = 1 << np.arange(n - 1, -1, -1)
    out = {}
    keys = [tuple(row) for row in bases]
    idx = bits @ weights
    order = {}
    for k, i in zip(keys, idx):
        order.setdefault(k, []).append(i)
    for k in sorted(order):
        counts = np.bincount(order[k], minlength=1 << n).astype(float)
        out[k] = counts
    return out


def bayes_correct(histograms, confusion):
    """Undo readout errors on each basis-conditioned bit-string histogram.

    ``histograms`` maps a basis setting to counts or probabilities over 2**N
    bitstrings; ``confusion`` is a list of per-qubit C[observed, true]. Each
    histogram is normalized, multiplied by the inverse of the tensor-product
    confusion matrix, clipped at zero and renormalized.
    """
    invs = []
    for cm in confusion:
        cm = np.asarray(cm, dtype=float)
        if not np.allclose(cm.sum(axis=0), 1.0, atol=1e-12):
            raise ValidationError("confusion matrix columns must sum to 1")
        if abs(np.linalg.det(cm)) < 1e-9:
            raise CorrectionError("confusion matrix is singular")
        invs.append(np.linalg.inv(cm))
    n = len(invs)
    out = {}
    for key, h in histograms.items():
        h = np.asarray(h, dtype=float)
        p = h / h.sum()
        q = _apply_per_qubit(p.reshape((2,) * n), invs, n).reshape(-1)
        q = np.clip(q, 0.0, None)
        out[key] = q / q.sum()
    return out


def apply_confusion(dist, confusion):
    """Forward model: observed bit-string distribution from the true one."""
    n = len(confusion)
    p = np.asarray(dist, dtype=float).reshape((2,) * n)
    return _apply_per_qubit(p, [np.asarray(c, dtype=float) for c in confusion], n).reshape(-1)


def histograms_to_povm(histograms, kind, n_qubits):
    """Combine basis-conditioned bit distributions into a POVM outcome distribution.

    Each basis setting occurs with probability 3**-N; settings that were never
    measured are dropped and the remaining weights renormalized.
    """
    K = ALPHABET[kind]
    out = np.zeros((K,) * n_qubits)
    bit_grid = np.array(np.unravel_index(np.arange(1 << n_qubits), (2,) * n_qubits)).T
    for key, p in histograms.items():
        b = np.broadcast_to(np.array(key), bit_grid.shape)
        outcomes = _bits_to_outcomes(b, bit_grid, kind)
        np.add.at(out, tuple(outcomes.T), p)
    out = out.reshape(-1)
    return ProbDist(n_qubits, K, out / out.sum())


def reconstruct_linear_inversion(dist, povm):
    """rho = sum_{a,a'} P(a) (T^-1)_{a,a'} M^(a'), one qubit factor at a time.

    The result is Hermitian with unit trace but may have negative eigenvalues.
    """
    if povm.kind != "pauli4" or povm.overlap_inverse is None:
        raise NotInvertibleError(
            f"{povm.kind} overlap matrix is not invertible; coarse-grain to pauli4 first"
        )
    if dist.K != povm.K:
        raise ValidationError(f"distribution alphabet {dist.K} does not match POVM ({povm.K})")
    n = dist.n_qubits
    q = _apply_per_qubit(dist.tensor(), [povm.overlap_inverse] * n, n)
    return _weighted_element_sum(q, povm.elements, n)


def _weighted_element_sum(coeffs, elements, n):
    """sum_a coeffs[a] * M^(a_1) x ... x M^(a_N) without forming the big operators."""
    t = np.asarray(coeffs, dtype=complex)
    # After step q: t has axes (r_0, c_0, ..., r_{q}, c_{q}, a_{q+1}, ..., a_{n-1}).
    for q in range(n):
        t = np.tensordot(t, elements, axes=([2 * q], [0]))
        # new (r, c) axes sit at the end; move them into place.
        t = np.moveaxis(t, [-2, -1], [2 * q, 2 * q + 1])
    perm = list(range(0, 2 * n, 2)) + list(range(1, 2 * n, 2))
    d = 1 << n
    return np.transpose(t, perm).reshape(d, d)


def adjoint_map(residual, povm, n):
    """sum_a r(a) M^(a): adjoint of the Born-rule map."""
    return _weighted_element_sum(np.asarray(residual).reshape((povm.K,) * n), povm.elements, n)


def _dense_linear_inversion(dist, povm):
    """Reference path materializing (T^-1)^{x N} and every tensor-product element."""
    from .linalg import kron_all
    import itertools

    n = dist.n_qubits
    tinv = kron_all([povm.overlap_inverse] * n).real
    coeff = dist.values @ tinv
    rho = 0
    for c, a in zip(coeff, itertools.product(range(povm.K), repeat=n)):
        rho = rho + c * kron_all(povm.elements[i] for i in a)
    return rho


_HEADER = re.compile(r"^#povm=(\w+)\s+qubits=(\d+)\s+seed=(\d+)\s*$")


def save_dataset(data, path):
    lines = [f"#povm={data.povm} qubits={data.n_qubits} seed={data.seed}"]
    lines.extend(" ".join(str(int(s)) for s in row) for row in data.shots)
    Path(path).write_text("\n".join(lines) + "\n")


def load_dataset(path):
    text = Path(path).read_text().splitlines()
    if not text:
        raise ValidationError(f"{path}: empty dataset file")
    m = _HEADER.match(text[0])
    if not m:
        raise ValidationError(f"{path}: bad header {text[0]!r}")
    kind, n, seed = m.group(1), int(m.group(2)), int(m.group(3))
    if kind not in ALPHABET:
        raise ValidationError(f"{path}: unknown POVM {kind!r}")
    rows = [line.split() for line in text[1:] if line.strip()]
    shots = np.array(rows, dtype=np.int64).reshape(-1, n)
    return OutcomeDataset(n, ALPHABET[kind], shots, kind, seed)
