"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line."""
import json
import math
import os
import time

import numpy as np
import pytest

from pekarlab import bounds
from pekarlab.cli import EXIT_OK, main
from pekarlab.fluctuation import (
    assemble_K,
    correction_convergence,
    fd_hessian,
    fluctuation_operators,
    k_decay_slope,
    lipschitz_trace_check,
    local_expansion_check,
    quantum_correction,
)
from pekarlab.fock import TruncatedModel, coupling_monotonicity_check, ground_state
from pekarlab.pekar import PekarProblem, pekar_F, scf_solve
from pekarlab.semiclassical import oscillator_bound, trial_state_energy
from pekarlab.spectral import DomainSpec, build_basis, weyl_count
from pekarlab.sweep import asymptotic_fit

PI = math.pi
INTERVAL = DomainSpec.interval()
CUBE = DomainSpec.box(PI, PI, PI)
CONFIGS = os.path.join(os.path.dirname(__file__), os.pardir, "configs")


@pytest.fixture
def report(capsys):
    def _report(criterion, ok, detail):
        with capsys.disabled():
            print(f"\ncriterion {criterion:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
        assert ok, detail

    return _report


@pytest.fixture(scope="module")
def interval_basis():
    return build_basis(INTERVAL, count=60)


def test_criterion_01_gross_constants(report):
    t0 = time.perf_counter()
    worst = 0.0
    for K in (0.5, 1.0, 3.0):
        num, ref = bounds.gross_integrals(K), bounds.gross_constants(K)
        worst = max(worst, max(abs(num[k] / ref[k] - 1) for k in ref))
    elapsed = time.perf_counter() - t0
    report(1, worst <= 1e-8 and elapsed < 1.0, f"max rel err {worst:.2e}, {elapsed:.2f} s")


def test_criterion_02_hessian_identity(report, interval_basis):
    t0 = time.perf_counter()
    p = PekarProblem(interval_basis, B=12, M=6)
    s = scf_solve(p)
    K = assemble_K(s, p)
    H = fd_hessian(lambda lam: pekar_F(p, lam), s.lam, step=1e-3)
    err = float(np.max(np.abs(H - 2 * (np.eye(p.M) - K))))
    elapsed = time.perf_counter() - t0
    report(2, err <= 1e-6 and elapsed < 10, f"max abs err {err:.2e}, {elapsed:.2f} s")


def test_criterion_03_sweep_fit(report):
    p = PekarProblem(build_basis(INTERVAL, count=40), B=10, M=2, g=1.0)
    s = scf_solve(p)
    corr = quantum_correction(assemble_K(s, p))[0]
    fit = asymptotic_fit(p, s, [4.0, 8.0, 16.0, 32.0], P_schedule=(16, 32, 48, 64), tol=1e-9)
    rel = fit.relative_error(corr)
    report(3, rel <= 0.05, f"c0 {fit.c0:.6g} vs correction {corr:.6g}, rel err {rel:.2e}")


def test_criterion_04_sandwich(report):
    p = PekarProblem(build_basis(INTERVAL, count=30), B=10, M=1)
    s = scf_solve(p)
    K = assemble_K(s, p)
    margins = []
    for alpha in (8.0, 16.0):
        E_up = trial_state_energy(p, s, K, alpha, 0.5)
        E0 = ground_state(TruncatedModel(p, alpha, 24, shift=s.lam)).E0
        E_K = oscillator_bound(p, s, alpha, K=K)
        margins += [E_up - E0, E0 - E_K]
    worst = min(margins)
    report(4, worst >= -1e-7, f"smallest margin {worst:.3e}")


def test_criterion_05_coupling_monotonicity(report):
    p = PekarProblem(build_basis(INTERVAL, count=30), B=6, M=2)
    model = TruncatedModel(p, 3.0, 10)
    total, rise = 0, -math.inf
    for mode in range(p.M):
        E, violations = coupling_monotonicity_check(model, mode, [0, 0.5, 1, 1.5, 2], tol=1e-10)
        total += violations
        rise = max(rise, float(np.max(np.diff(E))))
    report(5, total == 0, f"violations {total}, largest step {rise:.2e}")


def test_criterion_06_k_regime(report):
    p = PekarProblem(build_basis(CUBE, energy_cutoff=80.0), B=60, M=44)
    s = scf_solve(p)
    K = assemble_K(s, p)
    k = np.linalg.eigvalsh(K)
    in_range = k[0] >= -1e-12 and k[-1] < 1
    slope = k_decay_slope(K, p.e_ph)
    q = correction_convergence(K, p.e_ph).exponent
    ok = in_range and slope <= -1.8 and abs(q + 1 / 3) <= 0.15
    report(6, ok, f"spec(K) in [{k[0]:.2e}, {k[-1]:.3f}], slope {slope:.3f}, tail exponent {q:.3f}")


def test_criterion_07_remainder_linear_in_eps(report, interval_basis):
    p = PekarProblem(interval_basis, B=12, M=6)
    s = scf_solve(p)
    ops = fluctuation_operators(s, p)
    r = [local_expansion_check(s, p, ops.K, ops.L, e, samples=50, seed=0).max_ratio for e in (1e-3, 1e-2)]
    ratio = r[0] / r[1]
    report(7, 0.05 <= ratio <= 0.3, f"max_ratio(1e-3)/max_ratio(1e-2) = {ratio:.4f}")


def test_criterion_08_cutoff_norm_slopes(report):
    table = bounds.cutoff_norms(CUBE, [5, 7, 10, 14, 20])
    fits = {f.quantity: f for f in table.fits}
    a2, a1 = fits["A2"], fits["A1"]
    ok = abs(a2.fitted_exponent + 1.5) <= 0.15 and abs(a1.fitted_exponent + 2.5) <= 0.15
    report(8, ok, f"A2 slope {a2.fitted_exponent:.3f}, A1 slope {a1.fitted_exponent:.3f}")


def test_criterion_09_appendix_b(report):
    violations = 0
    for dom in (INTERVAL, CUBE):
        for s_ in (0.01, 0.1, 1.0):
            rep = bounds.diagonal_sum_check(
                dom, lambda t, s_=s_: np.exp(-s_ * np.asarray(t)), 40 / s_, f_scalar=lambda t, s_=s_: math.exp(-s_ * t)
            )
            violations += rep.violations
    fit12, _ = bounds.derivative_growth_fit(CUBE, (1, 0, 0), [10, 14, 20, 28, 40])
    growth_ok = abs(fit12.fitted_exponent - 5) <= 0.2
    b = build_basis(CUBE, energy_cutoff=401.0)
    ratios = [weyl_count(b, L).ratio for L in np.linspace(8, 20, 7)]
    weyl_ok = all(0.9 <= r <= 1.1 for r in ratios)
    detail = (
        f"b5 violations {violations}, b12 exponent {fit12.fitted_exponent:.3f}, "
        f"Weyl ratio in [{min(ratios):.3f}, {max(ratios):.3f}]"
    )
    report(9, violations == 0 and growth_ok and weyl_ok, detail)


def test_criterion_10_trace_lipschitz(report):
    rep = lipschitz_trace_check(0.9, size=8, trials=100, seed=0, tol=1e-12)
    report(10, rep.violations == 0, f"violations {rep.violations} in {rep.trials}, min margin {rep.min_margin:.2e}")


def test_criterion_11_cli_determinism(report, tmp_path):
    cfg = os.path.join(CONFIGS, "quick.json")
    outs = [str(tmp_path / f"run{i}") for i in range(2)]
    codes = [main(["fit", "--config", cfg, "--out", out, "--seed", "11"]) for out in outs]
    same = all(
        open(os.path.join(outs[0], name), "rb").read() == open(os.path.join(outs[1], name), "rb").read()
        for name in ("fit.json", "manifest.json")
    )
    c0 = json.load(open(os.path.join(outs[0], "fit.json")))["c0"]
    report(11, codes == [EXIT_OK, EXIT_OK] and same, f"exit codes {codes}, identical JSON {same}, c0 {c0}")
