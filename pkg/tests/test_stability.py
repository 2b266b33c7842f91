import numpy as np
import pytest
import scipy.linalg
from hypothesis import given
from hypothesis import strategies as st

from resilient_formation.attacks import SelectorMask, selector_matrix
from resilient_formation.dynamics import StepParams, attacked_step_reference, closed_loop_matrix
from resilient_formation.errors import CertificateInapplicableError, DecreaseViolation, NotSchurError
from resilient_formation.graph import build_complete, build_ring
from resilient_formation.linalg import jacobi_eigh, lambda_max_symmetric, spectral_radius
from resilient_formation.mitigation import HallucinationParams
from resilient_formation.stability import (
    ErrorSystem,
    certificate_for,
    certify,
    empirical_decrease_check,
    error_basis,
    error_system,
    solve_discrete_lyapunov,
    translation_basis,
)

seeds = st.integers(0, 2**32 - 1)


def random_schur(rng, m, rho=None):
    A = rng.normal(size=(m, m))
    target = rng.uniform(0.05, 0.98) if rho is None else rho
    return A * target / max(np.abs(np.linalg.eigvals(A)).max(), 1e-12)


# --- eigen routines ---------------------------------------------------------------------

@given(st.integers(1, 12), seeds)
def test_jacobi_matches_dense_eigensolver(m, seed):
    A = np.random.default_rng(seed).normal(size=(m, m))
    S = A + A.T
    w, V = jacobi_eigh(S)
    np.testing.assert_allclose(w, np.linalg.eigvalsh(S), rtol=0, atol=1e-10 * max(1, np.abs(S).max()))
    np.testing.assert_allclose(V.T @ V, np.eye(m), atol=1e-10)
    np.testing.assert_allclose(S @ V, V * w, atol=1e-9 * max(1, np.abs(S).max()))


def test_jacobi_rejects_nonsymmetric():
    with pytest.raises(ValueError):
        jacobi_eigh([[1.0, 2.0], [0.0, 1.0]])


def test_lambda_max():
    assert lambda_max_symmetric(np.diag([3.0, -7.0, 1.0])) == 3.0


@given(st.integers(1, 20), seeds)
def test_spectral_radius_matches_eigvals(m, seed):
    A = np.random.default_rng(seed).normal(size=(m, m))
    assert spectral_radius(A) == pytest.approx(np.abs(scipy.linalg.eigvals(A)).max(), abs=1e-9)


@pytest.mark.parametrize(
    "A,rho",
    [
        ([[0.0, 1.0], [0.0, 0.0]], 0.0),
        ([[0.9, 1.0], [0.0, 0.9]], 0.9),
        ([[0.0, -0.6], [0.6, 0.0]], 0.6),
        (np.zeros((3, 3)), 0.0),
    ],
    ids=["nilpotent", "jordan", "rotation", "zero"],
)
def test_spectral_radius_special_cases(A, rho):
    assert spectral_radius(A) == pytest.approx(rho, abs=1e-9)


# --- error system -----------------------------------------------------------------------

@pytest.mark.parametrize("N,n", [(2, 1), (5, 2), (4, 3)])
def test_error_basis_orthonormal_and_translation_free(N, n):
    B = error_basis(N, n)
    assert B.shape == (N * n, (N - 1) * n)
    assert np.abs(B.T @ B - np.eye(B.shape[1])).max() <= 1e-10
    ones = np.kron(np.ones((N, 1)), np.eye(n))
    assert np.abs(B.T @ ones).max() <= 1e-10
    np.testing.assert_allclose(translation_basis(N, n).T @ translation_basis(N, n), np.eye(n), atol=1e-15)


def test_k5_error_system():
    sys_ = error_system(closed_loop_matrix(build_complete(5), 2, 0.05), 5, 2)
    assert sys_.gamma_e.shape == (8, 8)
    np.testing.assert_allclose(np.linalg.eigvals(sys_.gamma_e), 0.75, atol=1e-12)
    assert sys_.spectral_radius == pytest.approx(0.75, abs=1e-12)


def test_k5_large_step_not_schur():
    sys_ = error_system(closed_loop_matrix(build_complete(5), 2, 0.4), 5, 2)
    assert sys_.spectral_radius == pytest.approx(1.0, abs=1e-9)
    with pytest.raises(NotSchurError) as exc:
        solve_discrete_lyapunov(sys_.gamma_e)
    assert exc.value.spectral_radius == pytest.approx(1.0, abs=1e-9)
    with pytest.raises(NotSchurError):
        certificate_for(build_complete(5), 2, 0.4, 0.3)


def test_two_node_error_system():
    sys_ = error_system(np.array([[0.75, 0.25], [0.25, 0.75]]), 2, 1)
    np.testing.assert_allclose(sys_.gamma_e, [[0.5]], atol=1e-15)


def test_mixing_gain_is_inapplicable(rng):
    G = closed_loop_matrix(build_complete(5), 2, 0.05) + 0.1 * rng.normal(size=(10, 10))
    with pytest.raises(CertificateInapplicableError):
        error_system(G, 5, 2)


# --- Lyapunov solver ---------------------------------------------------------------------

def test_lyapunov_zero_matrix():
    Q, alpha = solve_discrete_lyapunov(np.zeros((3, 3)))
    np.testing.assert_allclose(Q, np.eye(3), atol=1e-15)
    assert alpha == 1.0


def test_lyapunov_scaled_identity():
    Q, _ = solve_discrete_lyapunov(0.75 * np.eye(8))
    np.testing.assert_allclose(Q, 16 / 7 * np.eye(8), atol=1e-12)
    assert lambda_max_symmetric(Q) == pytest.approx(2.285714, abs=1e-6)
    assert lambda_max_symmetric(Q) == pytest.approx(16 / 7, abs=1e-9)


def test_lyapunov_diagonal_closed_form():
    Q, _ = solve_discrete_lyapunov(np.diag([0.5, 0.9]))
    np.testing.assert_allclose(Q, np.diag([4 / 3, 100 / 19]), rtol=0, atol=1e-10)


@given(st.integers(1, 50), seeds)
def test_lyapunov_residual_and_scipy_agreement(m, seed):
    rng = np.random.default_rng(seed)
    G = random_schur(rng, m)
    Q, alpha = solve_discrete_lyapunov(G)
    assert np.linalg.norm(G.T @ Q @ G - Q + alpha * np.eye(m), "fro") <= 1e-8
    assert np.abs(Q - Q.T).max() <= 1e-10
    assert np.linalg.eigvalsh(Q).min() > 0
    ref = scipy.linalg.solve_discrete_lyapunov(G.T, np.eye(m))
    np.testing.assert_allclose(Q, ref, rtol=1e-8, atol=1e-8 * np.abs(ref).max())


@given(st.lists(st.floats(-0.99, 0.99), min_size=1, max_size=20))
def test_lyapunov_diagonal_property(diag):
    d = np.array(diag)
    Q, _ = solve_discrete_lyapunov(np.diag(d))
    np.testing.assert_allclose(np.diag(Q), 1 / (1 - d**2), rtol=0, atol=1e-10 * (1 / (1 - d**2)).max())
    assert np.abs(Q - np.diag(np.diag(Q))).max() <= 1e-10


def test_certificate_invariant_negative_semidefinite():
    G = error_system(closed_loop_matrix(build_ring(6), 2, 0.1), 6, 2).gamma_e
    Q, alpha = solve_discrete_lyapunov(G)
    assert np.linalg.eigvalsh(G.T @ Q @ G - Q + alpha * np.eye(G.shape[0])).max() <= 1e-8


# --- certify -------------------------------------------------------------------------------

def test_certify_benchmark_stable():
    _, cert = certificate_for(build_complete(5), 2, 0.05, 0.3)
    assert cert.alpha == 1.0
    assert cert.lambda_max_Qe == pytest.approx(16 / 7, abs=1e-9)
    assert cert.threshold == pytest.approx(0.4375, abs=1e-9)
    assert cert.stable
    assert cert.margin == pytest.approx(0.3475, abs=1e-9)
    assert cert.r_e == pytest.approx(16 / 7 * 0.09, abs=1e-9)
    assert cert.gamma_limit == pytest.approx(np.sqrt(0.4375), abs=1e-9)


def test_certify_benchmark_unstable_gain():
    _, cert = certificate_for(build_complete(5), 2, 0.05, 0.7)
    assert not cert.stable
    assert cert.margin < 0


def test_certify_tiny_gain():
    Q, alpha = solve_discrete_lyapunov(0.75 * np.eye(8))
    cert = certify(1e-8, Q, alpha)
    assert cert.stable
    assert cert.margin == pytest.approx(cert.threshold, abs=1e-15)


@given(st.floats(0.0, 2.0), st.floats(0.0, 2.0))
def test_certify_monotone_in_gain(g1, g2):
    lo, hi = sorted((g1, g2))
    Q, alpha = solve_discrete_lyapunov(0.75 * np.eye(8))
    if certify(hi, Q, alpha).stable:
        assert certify(lo, Q, alpha).stable


# --- empirical decrease --------------------------------------------------------------------

@pytest.fixture
def bench_system():
    system, cert = certificate_for(build_complete(5), 2, 0.05, 0.3)
    P = selector_matrix(SelectorMask(frozenset({2})), 5, 2)
    return system, cert, P


def test_decrease_linear_case(bench_system):
    system, cert, P = bench_system
    rep = empirical_decrease_check(system, cert.Q_e, cert.alpha, P, HallucinationParams(0.3, 0.0), 1000)
    assert rep.all_decrease and rep.strict_decrease == 1000


def test_decrease_quadratic_case(bench_system):
    system, cert, P = bench_system
    rep = empirical_decrease_check(system, cert.Q_e, cert.alpha, P, HallucinationParams(0.3, 1.0), 1000, radius=0.05)
    assert rep.all_decrease
    assert np.isfinite(rep.fitted_C)
    assert rep.max_delta_v < 0


def test_zero_error_is_fixed(bench_system):
    system, _, P = bench_system
    e = np.zeros(8)
    e_next = attacked_step_reference(e, system.gamma_e, system.project(P), HallucinationParams(0.3, 1.0).f)
    assert not e_next.any()


def test_decrease_violation_carries_state():
    system = ErrorSystem(np.eye(2), np.eye(2), 1.0)
    params = HallucinationParams(0.01, 50.0)
    with pytest.raises(DecreaseViolation) as exc:
        empirical_decrease_check(system, np.eye(2), 1.0, -np.eye(2), params, 10, radius=1.0)
    assert exc.value.state.shape == (2,)
