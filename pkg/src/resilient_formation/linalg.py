"""Small dense eigenvalue routines used by the stability certificates."""

from __future__ import annotations

import numpy as np


def jacobi_eigh(S, tol: float = 1e-14, max_sweeps: int = 100):
    """Eigen-decomposition of a real symmetric matrix by cyclic Jacobi rotations.

    Returns ``(eigenvalues, eigenvectors)`` with eigenvalues ascending and
    eigenvectors as columns.
    """
    A = np.array(S, dtype=float, copy=True)
    m = A.shape[0]
    if A.shape != (m, m):
        raise ValueError(f"expected a square matrix, got shape {A.shape}")
    if not np.allclose(A, A.T, atol=1e-12 * max(1.0, np.abs(A).max(initial=0.0))):
        raise ValueError("matrix is not symmetric")
    A = 0.5 * (A + A.T)
    V = np.eye(m)
    scale = np.linalg.norm(A)
    for _ in range(max_sweeps):
        off = np.sqrt(np.sum(np.tril(A, -1) ** 2))
        if off <= tol * max(scale, 1e-300):
            break
        for p in range(m - 1):
            for q in range(p + 1, m):
                apq = A[p, q]
                if apq == 0.0:
                    continue
                theta = (A[q, q] - A[p, p]) / (2.0 * apq)
                t = np.sign(theta) / (abs(theta) + np.sqrt(theta * theta + 1.0)) if theta != 0 else 1.0
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                rp, rq = A[p, :].copy(), A[q, :].copy()
                A[p, :] = c * rp - s * rq
                A[q, :] = s * rp + c * rq
                cp, cq = A[:, p].copy(), A[:, q].copy()
                A[:, p] = c * cp - s * cq
                A[:, q] = s * cp + c * cq
                A[p, q] = A[q, p] = 0.0
                vp, vq = V[:, p].copy(), V[:, q].copy()
                V[:, p] = c * vp - s * vq
                V[:, q] = s * vp + c * vq
    w = np.diag(A).copy()
    order = np.argsort(w)
    return w[order], V[:, order]


def lambda_max_symmetric(S) -> float:
    return float(jacobi_eigh(S)[0][-1])


def spectral_radius(A, squarings: int = 60) -> float:
    """Spectral radius of a general square matrix by power iteration on ``A^(2^k)``.

    Uses ``rho(A) = lim ||A^N||^(1/N)``. Each squaring is renormalized and the
    log scale accumulated, so the limit is reached without overflow; the
    error after ``k`` squarings is about ``log(cond)/2^k``.
    """
    B = np.array(A, dtype=float, copy=True)
    if B.ndim != 2 or B.shape[0] != B.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {B.shape}")
    if B.size == 0:
        return 0.0
    log_scale = 0.0
    power = 1.0
    estimate = 0.0
    for _ in range(squarings):
        nrm = np.linalg.norm(B, 2)
        if nrm == 0.0 or not np.isfinite(nrm):
            return 0.0 if nrm == 0.0 else float("inf")
        # B holds A^power / exp(log_scale)
        estimate = np.exp((log_scale + np.log(nrm)) / power)
        B = B / nrm
        log_scale += np.log(nrm)
        B = B @ B
        log_scale *= 2.0
        power *= 2.0
    return float(estimate)
