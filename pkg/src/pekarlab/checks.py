"""Built-in battery of invariant checks used by ``pekarlab check``."""

from __future__ import annotations

import math

import numpy as np

from .bounds import gross_constants, gross_integrals
from .fluctuation import assemble_K, fd_hessian, lipschitz_trace_check
from .fock import TruncatedModel, coupling_monotonicity_check, ground_state
from .pekar import PekarProblem, electron_hessian, pekar_F, scf_solve
from .semiclassical import oscillator_bound
from .spectral import DomainSpec, build_basis, triple_overlap


def _interval_problem(B=10, M=2, count=40):
    return PekarProblem(build_basis(DomainSpec.interval(), count=count), B=B, M=M)


def check_overlap_closed_form():
    basis = build_basis(DomainSpec.interval(), count=4)
    T = triple_overlap(basis, 1, 1).T[0, 0, 0]
    ref = (2 / math.pi) ** 1.5 * 4 / 3
    return abs(T - ref) < 1e-12, f"T111 = {float(T)!r}, closed form {ref!r}"


def check_bound_constants():
    worst = 0.0
    for K in (0.5, 2.0):
        num, ref = gross_integrals(K), gross_constants(K)
        worst = max(worst, max(abs(num[k] / ref[k] - 1) for k in ref))
    return worst < 1e-8, f"max relative error {worst:.2e}"


def check_hessian_identity(problem, sol):
    K = assemble_K(sol, problem)
    H = fd_hessian(lambda lam: pekar_F(problem, lam), sol.lam)
    err = float(np.abs(H - 2 * (np.eye(problem.M) - K)).max())
    return err < 1e-6, f"|Hess F - 2(1 - K)| = {err:.2e}"


def check_k_spectrum(problem, sol):
    k = np.linalg.eigvalsh(assemble_K(sol, problem))
    return bool(k[0] > -1e-12 and k[-1] < 1), f"spec K in [{k[0]:.3e}, {k[-1]:.6f}]"


def check_zero_mode(problem, sol):
    Z, _ = electron_hessian(sol, problem)
    r = float(np.linalg.norm(Z @ sol.psi))
    return r < 1e-8, f"|Z psi| = {r:.2e}"


def check_fock_lower_bound(problem, sol, alpha=8.0, P=16):
    E0 = ground_state(TruncatedModel(problem, alpha, P, shift=sol.lam)).E0
    EK = oscillator_bound(problem, sol, alpha)
    return E0 >= EK - 1e-9, f"E0 - E_K = {E0 - EK:.3e}"


def check_coupling_monotonicity(problem, sol, alpha=4.0, P=12):
    model = TruncatedModel(problem, alpha, P)
    _, violations = coupling_monotonicity_check(model, 0, np.linspace(0, 1, 6))
    return violations == 0, f"{violations} violations"


def check_lipschitz(seed=0):
    rep = lipschitz_trace_check(0.5, size=6, trials=30, seed=seed)
    return rep.violations == 0, f"{rep.violations} violations, min margin {rep.min_margin:.2e}"


def run_checks(quick: bool = False, seed=0) -> list[tuple[str, bool, str]]:
    problem = _interval_problem(B=6 if quick else 10, M=1 if quick else 2)
    sol = scf_solve(problem, seed=seed)
    battery = [
        ("overlap closed form", check_overlap_closed_form),
        ("bound constants", check_bound_constants),
        ("Hessian of F^P equals 2(1 - K)", lambda: check_hessian_identity(problem, sol)),
        ("spectrum of K in [0, 1)", lambda: check_k_spectrum(problem, sol)),
        ("electron Hessian annihilates psi", lambda: check_zero_mode(problem, sol)),
        ("lower bound E0 >= E_K", lambda: check_fock_lower_bound(problem, sol, P=8 if quick else 16)),
        ("coupling monotonicity", lambda: check_coupling_monotonicity(problem, sol, P=6 if quick else 12)),
        ("trace Lipschitz inequality", lambda: check_lipschitz(seed)),
    ]
    out = []
    for name, fn in battery:
        ok, detail = fn()
        out.append((name, bool(ok), detail))
    return out
