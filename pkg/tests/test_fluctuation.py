import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pekarlab.errors import OutOfRegimeError, PreconditionError
from pekarlab.fluctuation import (
    assemble_K,
    assemble_L,
    correction_convergence,
    fd_hessian,
    fluctuation_operators,
    global_bound_check,
    lipschitz_trace_check,
    local_expansion_check,
    quantum_correction,
    reduced_resolvent,
    shell_closures,
)
from pekarlab.pekar import PekarProblem, PekarSolution, electron_hamiltonian, pekar_F, scf_solve
from pekarlab.spectral import DomainSpec, build_basis

PI = math.pi


@pytest.fixture(scope="module")
def basis():
    return build_basis(DomainSpec.interval(), count=60)


@pytest.fixture(scope="module")
def run(basis):
    p = PekarProblem(basis, B=12, M=6)
    s = scf_solve(p)
    return p, s, fluctuation_operators(s, p)


def test_reduced_resolvent_identity():
    H = np.diag([1.0, 3.0, 6.0]) + 0.2 * np.ones((3, 3))
    R, mu, psi = reduced_resolvent(H)
    Q = np.eye(3) - np.outer(psi, psi)
    np.testing.assert_allclose(R @ (H - mu * np.eye(3)), Q, atol=1e-13)
    np.testing.assert_allclose(R @ psi, 0, atol=1e-14)


def test_decoupled_K_is_zero(basis):
    p = PekarProblem(basis, B=6, M=3, g=0.0)
    s = scf_solve(p)
    assert np.all(assemble_K(s, p) == 0)


def test_hessian_identity(run):
    p, s, ops = run
    H = fd_hessian(lambda lam: pekar_F(p, lam), s.lam, step=1e-3)
    assert np.max(np.abs(H - 2 * (np.eye(p.M) - ops.K))) <= 1e-6


def test_two_level_hand_chain(basis):
    p = PekarProblem(basis, B=2, M=1)
    s = scf_solve(p)
    w, U = np.linalg.eigh(electron_hamiltonian(p, s.lam))
    Phi1 = p.Phi[0]
    K11 = 4 / p.e[0] * (U[:, 1] @ Phi1 @ s.psi) ** 2 / (w[1] - w[0])
    assert assemble_K(s, p)[0, 0] == pytest.approx(K11, rel=1e-12)


def test_operator_invariants(run):
    p, s, ops = run
    assert np.max(np.abs(ops.K - ops.K.T)) <= 1e-14
    assert np.max(np.abs(ops.L - ops.L.T)) <= 1e-14
    k = np.linalg.eigvalsh(ops.K)
    assert k[0] >= -1e-12 and k[-1] < 1
    assert np.linalg.eigvalsh(ops.L)[0] >= -1e-12
    assert ops.correction >= 0
    assert ops.correction <= 0.5 * np.trace(ops.K) / (2 * math.sqrt(1 - k[-1]))
    np.testing.assert_array_equal(ops.k_spectrum, np.sort(ops.k_spectrum)[::-1])


def test_k_times_e_squared_bounded(basis):
    p = PekarProblem(basis, B=30, M=20)
    s = scf_solve(p)
    k = np.sort(np.linalg.eigvalsh(assemble_K(s, p)))[::-1]
    w = k * p.e_ph**2
    assert w.max() <= 10 * w[0]


def test_L_for_lowest_mode_electron(basis):
    p = PekarProblem(basis, B=10, M=4)
    s = PekarSolution(np.zeros(4), np.eye(10)[0], 0.0, 0.0, 1.0, 0.0, 0)
    T = p.full_tensor  # (B, B, n)
    ref = np.array(
        [[4 * np.sum(T[:, 0, m] * T[:, 0, n] / p.e_el) / math.sqrt(p.e[m] * p.e[n]) for n in range(4)] for m in range(4)]
    )
    np.testing.assert_allclose(assemble_L(s, p), ref, atol=1e-14)


def test_L_trace_below_sup_norm_bound(run):
    # sum_k (psi phi_m, phi_k)^2 <= |phi_m|_inf^2 = 2/pi and e_1 = 1, so Tr L <= 4 (2/pi) sum 1/m^2
    p, s, ops = run
    assert np.trace(ops.L) <= 4 * (2 / PI) * (PI**2 / 6)


def test_quantum_correction_examples():
    assert quantum_correction(np.zeros((3, 3)))[0] == 0.0
    assert quantum_correction(np.diag([0.75]))[0] == pytest.approx(0.25, abs=1e-15)
    with pytest.raises(OutOfRegimeError):
        quantum_correction(np.diag([1.0, 0.1]))
    with pytest.raises(OutOfRegimeError):
        quantum_correction(np.diag([-0.1]))


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(0.0, 0.99), min_size=1, max_size=8))
def test_quantum_correction_diagonal(ks):
    val = quantum_correction(np.diag(ks))[0]
    ref = 0.5 * sum(1 - math.sqrt(1 - k) for k in ks)
    assert val == pytest.approx(ref, abs=1e-14)
    assert val <= 0.5 * sum(ks) / (2 * math.sqrt(1 - max(ks))) + 1e-15


def test_correction_monotone_in_mode_count(run):
    p, s, ops = run
    vals = [quantum_correction(ops.K[:m, :m])[0] for m in range(1, p.M + 1)]
    assert np.all(np.diff(vals) >= -1e-15)


def test_tail_bound_reported(run):
    _, _, ops = run
    assert math.isfinite(ops.tail_bound) and ops.tail_bound >= 0
    d = json.loads(ops.to_json())
    assert set(d) == {"M", "K", "L", "k_spectrum", "correction", "tail_bound"}


def test_shell_closures_box():
    b = build_basis(DomainSpec.box(PI, PI), count=8)
    # 2, 5, 5, 8, 10, 10, 13, 13
    assert shell_closures(b.eigenvalues, 8) == [1, 3, 4, 6, 8]


def test_correction_convergence_needs_closures(run):
    p, s, ops = run
    with pytest.raises(PreconditionError):
        correction_convergence(ops.K, p.e_ph, min_modes=10)


def test_local_expansion_zero_direction(run):
    p, s, _ = run
    assert pekar_F(p, s.lam) - s.eP == pytest.approx(0, abs=1e-13)


def test_local_expansion_linear_in_eps(run):
    p, s, ops = run
    eps = [1e-2, 3e-3, 1e-3]
    r = [local_expansion_check(s, p, ops.K, ops.L, e, samples=50, seed=0).max_ratio for e in eps]
    slope = np.polyfit(np.log(eps), np.log(r), 1)[0]
    assert abs(slope - 1) <= 0.3


def test_quadratic_limit_along_a_direction(run):
    p, s, ops = run
    u = np.random.default_rng(4).normal(size=p.M)
    q = lambda t: (pekar_F(p, s.lam + t * u) - s.eP) / t**2
    rich = (4 * q(5e-4) - q(1e-3)) / 3
    assert rich == pytest.approx(u @ (np.eye(p.M) - ops.K) @ u, rel=1e-6)


def test_global_bound_small_kappa(run):
    p, s, _ = run
    rep = global_bound_check(s, p, 1e-6, samples=200, seed=0)
    assert rep.violations == 0
    assert rep.largest_kappa > 0


def test_global_bound_equality_at_minimizer(run):
    p, s, _ = run
    assert pekar_F(p, s.lam) == pytest.approx(s.eP, abs=1e-13)
    with pytest.raises(PreconditionError):
        global_bound_check(s, p, 0.0)


def test_global_bound_bisection_consistent(run):
    p, s, _ = run
    rep = global_bound_check(s, p, 0.1, samples=200, seed=1)
    again = global_bound_check(s, p, 0.5 * rep.largest_kappa, samples=200, seed=1)
    assert again.violations == 0


def test_lipschitz_random_trials():
    rep = lipschitz_trace_check(0.9, size=8, trials=100, seed=0)
    assert rep.violations == 0


@settings(max_examples=50, deadline=None)
@given(st.floats(0.01, 0.99), st.floats(0.0, 1.0))
def test_lipschitz_scalar_through_origin(nu, frac):
    t = frac * nu
    assert 1 - math.sqrt(1 - t) <= t / (2 * math.sqrt(1 - nu)) + 1e-15


def test_lipschitz_zero_increment():
    A = np.diag([0.2, 0.5])
    f = lambda X: np.sum(1 - np.sqrt(1 - np.linalg.eigvalsh(X)))
    assert f(A + 0 * A) == f(A)
    with pytest.raises(PreconditionError):
        lipschitz_trace_check(1.0)


def test_fd_hessian_quadratic():
    A = np.array([[2.0, 0.5], [0.5, 1.0]])
    H = fd_hessian(lambda x: 0.5 * x @ A @ x + np.sin(x[0]), np.array([0.3, -0.2]))
    np.testing.assert_allclose(H, A + np.diag([-math.sin(0.3), 0]), atol=1e-9)
