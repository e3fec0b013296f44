"""Least-squares projection of an outcome distribution onto physical states.

Minimizes ||P_model - A(rho)||^2 over density matrices, where A is the
Born-rule map of the POVM, by projected gradient descent with a backtracking
line search. The projection onto {rho >= 0, Tr rho = 1} is exact: the
spectrum is projected onto the probability simplex.
"""
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .linalg import hermitian_eig
from .povm import ProbDist, adjoint_map, povm_distribution, reconstruct_linear_inversion


@dataclass
class MleConfig:
    max_iters: int = 5000
    tol: float = 1e-10  # relative objective change
    grad_tol: float = 1e-9
    step: float = None  # initial step; None uses 1/Lipschitz
    max_halvings: int = 30


@dataclass
class PhysicalFit:
    rho: np.ndarray
    p_mle: ProbDist
    objective: float
    iterations: int
    converged: bool
    history: list


def project_simplex(v):
    """Euclidean projection of a real vector onto {x >= 0, sum x = 1}."""
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    k = np.arange(1, v.size + 1)
    rho = np.nonzero(u - css / k > 0)[0][-1]
    theta = css[rho] / (rho + 1.0)
    return np.maximum(v - theta, 0.0)


def project_density(a):
    """Closest (Frobenius) Hermitian PSD unit-trace matrix to ``a``."""
    a = 0.5 * (a + a.conj().T)
    w, v = hermitian_eig(a)
    w = project_simplex(w)
    rho = (v * w) @ v.conj().T
    return 0.5 * (rho + rho.conj().T)


def objective(rho, p_model, povm):
    r = povm_distribution(rho, povm).values - p_model.values
    return float(r @ r), r


def mle_project(p_model, povm, cfg=None, init=None):
    """Physical state whose POVM distribution is closest to ``p_model`` in L2."""
    cfg = cfg or MleConfig()
    if povm.kind != "pauli4":
        raise ValidationError("mle_project needs a Pauli-4 distribution; coarse-grain Pauli-6 first")
    if p_model.K != povm.K:
        raise ValidationError(f"distribution alphabet {p_model.K} does not match POVM ({povm.K})")
    n = p_model.n_qubits
    d = 1 << n

    candidates = []
    if init is not None:
        candidates.append(project_density(np.asarray(init, dtype=complex)))
    candidates.append(project_density(reconstruct_linear_inversion(p_model, povm)))
    candidates.append(np.eye(d, dtype=complex) / d)
    scored = [(objective(c, p_model, povm)[0], i) for i, c in enumerate(candidates)]
    best_i = min(scored)[1]
    rho = candidates[best_i]
    f, r = objective(rho, p_model, povm)

    # Lipschitz constant of the gradient: 2 * largest eigenvalue of T^{x N}.
    lip = 2.0 * np.linalg.eigvalsh(povm.overlap).max() ** n
    step = cfg.step if cfg.step is not None else 1.0 / lip
    history = [f]
    converged = False
    it = 0
    prev_rho = prev_grad = None
    for it in range(1, cfg.max_iters + 1):
        grad = 2.0 * adjoint_map(r, povm, n)
        gnorm = np.linalg.norm(grad)
        if gnorm < cfg.grad_tol or f == 0.0:
            converged = True
            break
        # Barzilai-Borwein trial step, safeguarded and then backtracked.
        trial = step
        if prev_grad is not None:
            s = (rho - prev_rho).reshape(-1)
            y = (grad - prev_grad).reshape(-1)
            sy = np.vdot(s, y).real
            if sy > 0:
                trial = min(max(np.vdot(s, s).real / sy, 1.0 / lip), 1e3 / lip)
        accepted = False
        for _ in range(cfg.max_halvings + 1):
            cand = project_density(rho - trial * grad)
            fc, rc = objective(cand, p_model, povm)
            if fc < f:
                accepted = True
                break
            trial *= 0.5
        if not accepted:
            converged = True
            break
        prev_rho, prev_grad = rho, grad
        rel = (f - fc) / max(f, 1e-300)
        rho, f, r = cand, fc, rc
        history.append(f)
        if rel < cfg.tol:
            converged = True
            break
    return PhysicalFit(rho, povm_distribution(rho, povm), f, it, converged, history)
