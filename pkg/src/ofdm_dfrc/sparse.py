"""Complex sparse recovery: OMP, joint-support group OMP and FISTA (BPDN)."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np


class SolverError(ValueError):
    pass


@dataclass
class SparseSolution:
    """Result of a sparse solve.

    ``coefficients`` has one row per support atom; for group problems it has
    one column per measurement.
    """

    support: np.ndarray
    coefficients: np.ndarray
    residual_norm: float
    iterations: int
    residual_history: list = field(default_factory=list)
    converged: bool = True
    rank_deficient: bool = False
    x: Optional[np.ndarray] = None  # dense solution (FISTA)

    def dense(self, n_atoms: int) -> np.ndarray:
        if self.x is not None:
            return self.x.copy()
        out = np.zeros((n_atoms,) + self.coefficients.shape[1:], dtype=complex)
        out[self.support] = self.coefficients
        return out


def check_unit_columns(A: np.ndarray, atol: float = 1e-9) -> None:
    norms = np.linalg.norm(A, axis=0)
    if norms.size and np.max(np.abs(norms - 1.0)) > atol:
        raise SolverError("dictionary columns must have unit norm")


def omp(A: np.ndarray, y: np.ndarray, K: Optional[int] = None, tol: Optional[float] = None,
        check_columns: bool = True) -> SparseSolution:
    """Orthogonal matching pursuit for ``y ~ A x`` with complex data.

    Stops after `K` atoms or once the residual norm is ``<= tol``, whichever
    comes first.  With neither given, runs until ``rank(A)`` atoms.
    """
    A = np.asarray(A, dtype=complex)
    y = np.asarray(y, dtype=complex).ravel()
    rows, atoms = A.shape
    if check_columns:
        check_unit_columns(A)
    if K is None:
        K = min(rows, atoms)
    if K > rows:
        raise SolverError(f"sparsity {K} exceeds dictionary rows {rows}")
    residual = y.copy()
    norm = float(np.linalg.norm(residual))
    history = [norm]
    support: list[int] = []
    coef = np.zeros(0, dtype=complex)
    deficient = False
    stop_tol = -1.0 if tol is None else tol
    while len(support) < K and norm > stop_tol and norm > 0.0:
        corr = np.abs(A.conj().T @ residual)
        corr[support] = -1.0
        support.append(int(np.argmax(corr)))
        sub = A[:, support]
        coef, _, rank, _ = np.linalg.lstsq(sub, y, rcond=None)
        if rank < len(support):
            deficient = True
        residual = y - sub @ coef
        norm = float(np.linalg.norm(residual))
        history.append(norm)
    return SparseSolution(np.asarray(support, dtype=np.int64), coef, norm, len(support),
                          history, True, deficient)


def group_omp(dictionaries, Y, K: Optional[int] = None, tol: Optional[float] = None) -> SparseSolution:
    """OMP with one support shared by several measurement vectors.

    ``dictionaries`` is a stack ``(M, rows, atoms)`` (one dictionary per
    measurement, equal atom count) and ``Y`` is ``(M, rows)``.  The atom
    score is ``sum_i |<a_i,n, r_i>|^2 / ||a_i,n||^2``; coefficients are
    least-squares fits per measurement.  ``tol`` bounds the total residual
    norm over all measurements.
    """
    D = np.asarray(dictionaries, dtype=complex)
    Y = np.asarray(Y, dtype=complex)
    if D.ndim == 2:
        D = D[None]
    if Y.ndim == 1:
        Y = Y[None]
    M, rows, atoms = D.shape
    if Y.shape != (M, rows):
        raise SolverError(f"measurement shape {Y.shape} does not match dictionaries {D.shape}")
    if K is None:
        K = min(rows, atoms)
    if K > rows:
        raise SolverError(f"sparsity {K} exceeds dictionary rows {rows}")
    col_energy = np.sum(np.abs(D) ** 2, axis=1)  # (M, atoms)
    col_energy[col_energy == 0] = np.inf
    DH = D.conj().transpose(0, 2, 1)
    residual = Y.copy()
    norm = float(np.linalg.norm(residual))
    history = [norm]
    support: list[int] = []
    coef = np.zeros((0, M), dtype=complex)
    deficient = False
    stop_tol = -1.0 if tol is None else tol
    while len(support) < K and norm > stop_tol and norm > 0.0:
        corr = np.einsum("man,mn->ma", DH, residual)
        score = np.sum(np.abs(corr) ** 2 / col_energy, axis=0)
        score[support] = -1.0
        support.append(int(np.argmax(score)))
        sub = D[:, :, support]  # (M, rows, k)
        pinv = np.linalg.pinv(sub)
        c = np.einsum("mkr,mr->mk", pinv, Y)
        if np.any(np.linalg.matrix_rank(sub) < len(support)):
            deficient = True
        residual = Y - np.einsum("mrk,mk->mr", sub, c)
        coef = c.T
        norm = float(np.linalg.norm(residual))
        history.append(norm)
    return SparseSolution(np.asarray(support, dtype=np.int64), coef, norm, len(support),
                          history, True, deficient)


def spectral_norm_sq(A: np.ndarray, iters: int = 500, rtol: float = 1e-12) -> float:
    """Largest eigenvalue of ``A^H A`` by power iteration."""
    v = np.ones(A.shape[1], dtype=complex) / math.sqrt(A.shape[1])
    lam = 0.0
    for _ in range(iters):
        w = A.conj().T @ (A @ v)
        new = float(np.linalg.norm(w))
        if new == 0.0:
            return 0.0
        v = w / new
        if abs(new - lam) <= rtol * new:
            lam = new
            break
        lam = new
    return lam


def soft_threshold(x: np.ndarray, tau: float) -> np.ndarray:
    """Shrink magnitudes by `tau`, keeping phase."""
    mag = np.abs(x)
    scale = np.maximum(0.0, 1.0 - tau / np.maximum(mag, np.finfo(float).tiny))
    return x * scale


def bpdn_objective(A, y, x, lam) -> float:
    r = A @ x - y
    return 0.5 * float(np.vdot(r, r).real) + lam * float(np.sum(np.abs(x)))


def fista_bpdn(A: np.ndarray, y: np.ndarray, lam: float, max_iter: int = 5000, rtol: float = 1e-8,
               support_rtol: float = 1e-3, check_columns: bool = True,
               accelerate: bool = True) -> SparseSolution:
    """Minimise ``0.5||Ax - y||^2 + lam ||x||_1`` over complex `x`.

    Accelerated proximal gradient with step ``1/L``, ``L = ||A||_2^2``.  A step
    that would raise the objective is discarded and replaced by a plain
    proximal-gradient step from the last iterate with the momentum reset, so
    the recorded objective never increases.  ``accelerate=False`` gives ISTA.
    """
    if not lam > 0:
        raise SolverError("lambda must be positive")
    A = np.asarray(A, dtype=complex)
    y = np.asarray(y, dtype=complex).ravel()
    if check_columns:
        check_unit_columns(A)
    L = spectral_norm_sq(A)
    n = A.shape[1]
    x = np.zeros(n, dtype=complex)
    AH = A.conj().T
    AHy = AH @ y
    if L == 0.0 or lam >= np.max(np.abs(AHy)):
        # lasso null bound: zero is optimal
        return SparseSolution(np.zeros(0, np.int64), np.zeros(0, complex), float(np.linalg.norm(y)),
                              0, [bpdn_objective(A, y, x, lam)], True, False, x)

    def prox_step(z):
        return soft_threshold(z - (AH @ (A @ z) - AHy) / L, lam / L)

    f = bpdn_objective(A, y, x, lam)
    history = [f]
    z, t = x, 1.0
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        x_new = prox_step(z)
        f_new = bpdn_objective(A, y, x_new, lam)
        if f_new > f:
            t = 1.0
            x_new = prox_step(x)
            f_new = bpdn_objective(A, y, x_new, lam)
        if accelerate:
            t_new = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
            z = x_new + ((t - 1.0) / t_new) * (x_new - x)
            t = t_new
        else:
            z = x_new
        change = abs(f - f_new) / max(abs(f), np.finfo(float).tiny)
        x, f = x_new, f_new
        history.append(f)
        if change < rtol:
            converged = True
            break
    mag = np.abs(x)
    peak = mag.max() if mag.size else 0.0
    support = np.flatnonzero(mag > support_rtol * peak) if peak > 0 else np.zeros(0, np.int64)
    return SparseSolution(support.astype(np.int64), x[support],
                          float(np.linalg.norm(A @ x - y)), it, history, converged, False, x)
