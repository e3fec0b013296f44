"""Dense complex linear algebra used throughout the package.

Matrices are plain 2-D complex numpy arrays. ``hermitian_eig`` is backed by
LAPACK (``numpy.linalg.eigh``); a cyclic Jacobi solver is kept alongside it
as an independent cross-check and as a fallback for callers that want a
pure-numpy path.
"""
from typing import NamedTuple

import numpy as np

from .errors import NotPSDError, NumericError, SizeError, ValidationError

# Largest number of entries kron will allocate (4 GiB of complex128).
MAX_ENTRIES = 1 << 28

# Eigenvalues down to -PSD_CLIP are treated as round-off and clipped to zero.
PSD_CLIP = 1e-9
# Below -PSD_REJECT the input is not considered PSD at all.
PSD_REJECT = 1e-6


class EigDecomposition(NamedTuple):
    eigenvalues: np.ndarray  # real, ascending
    eigenvectors: np.ndarray  # columns are orthonormal eigenvectors


def as_cmatrix(a, name="matrix"):
    """Return ``a`` as a finite 2-D complex array, raising ValidationError otherwise."""
    m = np.asarray(a, dtype=complex)
    if m.ndim != 2:
        raise ValidationError(f"{name} must be 2-D, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValidationError(f"{name} contains NaN or Inf")
    return m


def kron(a, b):
    a = as_cmatrix(a, "a")
    b = as_cmatrix(b, "b")
    rows = a.shape[0] * b.shape[0]
    cols = a.shape[1] * b.shape[1]
    if rows * cols > MAX_ENTRIES:
        raise SizeError(f"kron result {rows}x{cols} exceeds {MAX_ENTRIES} entries")
    return np.kron(a, b)


def kron_all(mats):
    """Kronecker product of a sequence of matrices, left to right."""
    out = np.ones((1, 1), dtype=complex)
    for m in mats:
        out = kron(out, m)
    return out


def check_hermitian(a, tol=1e-8, name="matrix"):
    a = as_cmatrix(a, name)
    if a.shape[0] != a.shape[1]:
        raise ValidationError(f"{name} must be square, got shape {a.shape}")
    scale = max(1.0, np.linalg.norm(a))
    if np.linalg.norm(a - a.conj().T) > tol * scale:
        raise ValidationError(f"{name} is not Hermitian")
    return a


def hermitian_eig(a, method="lapack"):
    """Eigendecomposition of a Hermitian matrix, eigenvalues ascending.

    ``method`` is ``"lapack"`` (default) or ``"jacobi"``.
    """
    a = check_hermitian(a)
    a = 0.5 * (a + a.conj().T)
    if method == "lapack":
        try:
            w, v = np.linalg.eigh(a)
        except np.linalg.LinAlgError as exc:
            raise NumericError(f"eigh failed: {exc}") from exc
        return EigDecomposition(w, v)
    if method == "jacobi":
        return jacobi_eigh(a)
    raise ValidationError(f"unknown eigensolver {method!r}")


def jacobi_eigh(a, max_sweeps=100, rel_tol=1e-12):
    """Cyclic Jacobi eigensolver for a complex Hermitian matrix.

    Works on the 2n x 2n real symmetric embedding [[Re, -Im], [Im, Re]], whose
    spectrum is that of ``a`` with every eigenvalue repeated twice. One eigenvector is
    recovered per pair by Gram-Schmidt in the complex space.
    """
    a = check_hermitian(a)
    n = a.shape[0]
    re, im = a.real, a.imag
    s = np.block([[re, -im], [im, re]])
    s = 0.5 * (s + s.T)
    m = 2 * n
    v = np.eye(m)
    thresh = rel_tol * max(np.linalg.norm(s), 1e-300)

    for _ in range(max_sweeps):
        off = np.linalg.norm(s - np.diag(np.diag(s)))
        if off <= thresh:
            break
        for p in range(m - 1):
            for q in range(p + 1, m):
                apq = s[p, q]
                if abs(apq) < 1e-300:
                    continue
                theta = (s[q, q] - s[p, p]) / (2.0 * apq)
                t = np.sign(theta) / (abs(theta) + np.sqrt(theta * theta + 1.0))
                if theta == 0.0:
                    t = 1.0
                c = 1.0 / np.sqrt(t * t + 1.0)
                sn = t * c
                sp = s[:, p].copy()
                sq = s[:, q].copy()
                s[:, p] = c * sp - sn * sq
                s[:, q] = sn * sp + c * sq
                rp = s[p, :].copy()
                rq = s[q, :].copy()
                s[p, :] = c * rp - sn * rq
                s[q, :] = sn * rp + c * rq
                vp = v[:, p].copy()
                vq = v[:, q].copy()
                v[:, p] = c * vp - sn * vq
                v[:, q] = sn * vp + c * vq
    else:
        raise NumericError(f"Jacobi did not converge in {max_sweeps} sweeps")

    w = np.diag(s)
    order = np.argsort(w, kind="stable")
    w = w[order]
    v = v[:, order]
    # Each complex eigenpair appears twice in the embedding: (x, y) and (-y, x).
    cvecs = v[:n, :] + 1j * v[n:, :]
    vals, vecs = [], []
    for k in range(m):
        x = cvecs[:, k].copy()
        for u in vecs:
            x -= u * np.vdot(u, x)
        nrm = np.linalg.norm(x)
        if nrm > 1e-6:
            vecs.append(x / nrm)
            vals.append(w[k])
        if len(vecs) == n:
            break
    if len(vecs) != n:
        raise NumericError("Jacobi eigenvector recovery failed")
    return EigDecomposition(np.array(vals), np.column_stack(vecs))


def clip_spectrum(a, reject=PSD_REJECT):
    """Eigendecompose a Hermitian PSD matrix, zeroing round-off negatives."""
    w, v = hermitian_eig(a)
    scale = max(1.0, np.linalg.norm(a))
    if w.size and w[0] < -reject * scale:
        raise NotPSDError(f"minimum eigenvalue {w[0]:.3e} below -{reject:g}")
    return np.maximum(w, 0.0), v


def psd_sqrt(a):
    """Principal square root of a Hermitian PSD matrix."""
    w, v = clip_spectrum(a)
    return (v * np.sqrt(w)) @ v.conj().T


def psd_function(a, fn):
    """Apply ``fn`` to the clipped spectrum of a PSD matrix."""
    w, v = clip_spectrum(a)
    return (v * fn(w)) @ v.conj().T
