"""Lyapunov certificates for the formation error dynamics.

The error system is the closed-loop matrix restricted to the orthogonal
complement of uniform translations, which is exactly the part of the state
the formation error depends on. ``Q_e`` solves
``Gamma_e^T Q_e Gamma_e - Q_e = -I`` so the decrease constant is 1.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .dynamics import attacked_step_reference, closed_loop_matrix
from .errors import CertificateInapplicableError, DecreaseViolation, NotSchurError
from .linalg import jacobi_eigh, spectral_radius
from .mitigation import HallucinationParams

SCHUR_MARGIN = 1e-12


@dataclass(frozen=True, eq=False)
class ErrorSystem:
    gamma_e: np.ndarray
    basis: np.ndarray
    spectral_radius: float

    def project(self, M: np.ndarray) -> np.ndarray:
        """Express a full-state operator in error coordinates: ``B^T M B``."""
        return self.basis.T @ M @ self.basis


@dataclass(frozen=True, eq=False)
class LyapunovCertificate:
    Q_e: np.ndarray
    alpha: float
    lambda_max_Qe: float
    gamma: float
    r_e: float
    stable: bool
    margin: float

    @property
    def threshold(self) -> float:
        """Largest admissible ``gamma^2``."""
        return self.alpha / self.lambda_max_Qe

    @property
    def gamma_limit(self) -> float:
        return float(np.sqrt(self.threshold))

    def as_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "lambda_max_Qe": self.lambda_max_Qe,
            "threshold": self.threshold,
            "gamma": self.gamma,
            "gamma_squared": self.gamma**2,
            "r_e": self.r_e,
            "stable": self.stable,
            "margin": self.margin,
        }


def translation_basis(n_agents: int, dim: int) -> np.ndarray:
    """Orthonormal columns spanning uniform translations, ``(1/sqrt(N)) 1 ⊗ I_n``."""
    return np.kron(np.ones((n_agents, 1)) / np.sqrt(n_agents), np.eye(dim))


def error_basis(n_agents: int, dim: int) -> np.ndarray:
    """Orthonormal basis of the complement of the translation subspace."""
    T = translation_basis(n_agents, dim)
    U, _, _ = np.linalg.svd(T, full_matrices=True)
    return U[:, dim:]


def error_system(gamma: np.ndarray, n_agents: int, dim: int, tol: float = 1e-8) -> ErrorSystem:
    gamma = np.asarray(gamma, dtype=float)
    T = translation_basis(n_agents, dim)
    B = error_basis(n_agents, dim)
    leak = max(np.abs(B.T @ gamma @ T).max(initial=0.0), np.abs(T.T @ gamma @ B).max(initial=0.0))
    if leak > tol:
        raise CertificateInapplicableError(
            f"closed-loop matrix mixes translations and formation error (coupling {leak:.3g})"
        )
    gamma_e = B.T @ gamma @ B
    return ErrorSystem(gamma_e=gamma_e, basis=B, spectral_radius=spectral_radius(gamma_e))


def solve_discrete_lyapunov(gamma_e) -> tuple[np.ndarray, float]:
    """Solve ``G^T Q G - Q = -I`` through ``(I - G^T ⊗ G^T) vec(Q) = vec(I)``.

    Returns ``(Q, alpha)`` with ``alpha = 1``.
    """
    G = np.asarray(gamma_e, dtype=float)
    m = G.shape[0]
    rho = spectral_radius(G)
    if rho >= 1.0 - SCHUR_MARGIN:
        raise NotSchurError(f"error dynamics are not Schur stable (spectral radius {rho:.12g})", rho)
    K = np.eye(m * m) - np.kron(G.T, G.T)
    q = np.linalg.solve(K, np.eye(m).ravel())
    Q = q.reshape(m, m)
    return 0.5 * (Q + Q.T), 1.0


def certify(gamma: float, Q_e: np.ndarray, alpha: float) -> LyapunovCertificate:
    """Check ``gamma^2 < alpha / lambda_max(Q_e)``."""
    lam = float(jacobi_eigh(Q_e)[0][-1])
    threshold = alpha / lam
    return LyapunovCertificate(
        Q_e=Q_e,
        alpha=alpha,
        lambda_max_Qe=lam,
        gamma=float(gamma),
        r_e=lam * gamma**2,
        stable=bool(gamma**2 < threshold),
        margin=threshold - gamma**2,
    )


@dataclass(frozen=True)
class DecreaseReport:
    samples: int
    radius: float
    strict_decrease: int
    fitted_C: float
    max_delta_v: float
    min_relative_drop: float

    @property
    def all_decrease(self) -> bool:
        return self.strict_decrease == self.samples


def empirical_decrease_check(
    system: ErrorSystem,
    Q_e: np.ndarray,
    alpha: float,
    selector: np.ndarray,
    params: HallucinationParams,
    sample_count: int = 1000,
    radius: float = 0.05,
    rng: Optional[np.random.Generator] = None,
) -> DecreaseReport:
    """Sample small error states and take one attacked step in error coordinates.

    ``e+ = Gamma_e e - P_e f_e(e)`` with ``P_e = B^T P B`` and ``f_e`` the
    hallucination map on the whole error vector. Every sample must strictly
    decrease ``V(e) = e^T Q_e e``; the constant ``C`` in
    ``dV <= -(alpha - r_e)||e||^2 + C||e||^3`` is fitted and reported.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    G = system.gamma_e
    m = G.shape[0]
    P_e = system.project(selector)
    r_e = float(jacobi_eigh(Q_e)[0][-1]) * params.gamma**2
    strict = 0
    C = 0.0
    worst = -np.inf
    min_drop = np.inf
    for _ in range(sample_count):
        direction = rng.standard_normal(m)
        direction /= np.linalg.norm(direction)
        e = radius * rng.uniform() ** (1.0 / m) * direction
        e_next = attacked_step_reference(e, G, P_e, params.f)
        v, v_next = e @ Q_e @ e, e_next @ Q_e @ e_next
        dv = v_next - v
        if not v_next < v:
            raise DecreaseViolation(f"V did not decrease: V(e)={v:.6g}, V(e+)={v_next:.6g}", e)
        strict += 1
        norm = np.linalg.norm(e)
        C = max(C, (dv + (alpha - r_e) * norm**2) / norm**3)
        worst = max(worst, dv)
        min_drop = min(min_drop, -dv / v)
    return DecreaseReport(
        samples=sample_count,
        radius=radius,
        strict_decrease=strict,
        fitted_C=float(C),
        max_delta_v=float(worst),
        min_relative_drop=float(min_drop),
    )


def certificate_for(g, dim: int, dt: float, gamma: float) -> tuple[ErrorSystem, LyapunovCertificate]:
    """Error system and certificate for the formation law on ``g`` with step ``dt``.

    Raises :class:`NotSchurError` when the nominal error dynamics are unstable.
    """
    system = error_system(closed_loop_matrix(g, dim, dt), g.n_nodes, dim)
    Q, alpha = solve_discrete_lyapunov(system.gamma_e)
    return system, certify(gamma, Q, alpha)
