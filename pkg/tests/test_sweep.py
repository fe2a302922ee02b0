import csv
import io
import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pekarlab.errors import NonConvergenceError, PreconditionError
from pekarlab.fluctuation import assemble_K, quantum_correction
from pekarlab.pekar import PekarProblem, scf_solve
from pekarlab.spectral import DomainSpec, build_basis
from pekarlab.sweep import SweepFit, asymptotic_fit, fit_linear


@pytest.fixture(scope="module")
def basis():
    return build_basis(DomainSpec.interval(), count=30)


@settings(max_examples=30, deadline=None)
@given(st.floats(-5, 5), st.floats(-5, 5))
def test_fit_linear_exact_line(c0, c1):
    x = np.array([0.25, 0.125, 0.0625, 0.03125])
    coef, err = fit_linear(x, c0 + c1 * x)
    assert coef[0] == pytest.approx(c0, abs=1e-10)
    assert coef[1] == pytest.approx(c1, abs=1e-9)
    assert np.all(err < 1e-8)


def test_sweepfit_needs_three_increasing_alphas():
    with pytest.raises(PreconditionError):
        SweepFit([1.0, 2.0], [0.0, 0.0], 0.0, 0.0, (0.0, 0.0))
    with pytest.raises(PreconditionError):
        SweepFit([1.0, 3.0, 2.0], [0.0] * 3, 0.0, 0.0, (0.0, 0.0))


def test_decoupled_sweep_is_zero(basis):
    p = PekarProblem(basis, B=4, M=2, g=0.0)
    s = scf_solve(p)
    fit = asymptotic_fit(p, s, [2.0, 4.0, 8.0], P_schedule=(4, 8))
    np.testing.assert_allclose(fit.deltas, 0, atol=1e-9)
    assert fit.c0 == pytest.approx(0, abs=1e-9)


def test_single_mode_sweep_and_exports(basis):
    p = PekarProblem(basis, B=6, M=1)
    s = scf_solve(p)
    corr = quantum_correction(assemble_K(s, p))[0]
    fit = asymptotic_fit(p, s, [4.0, 8.0, 16.0, 32.0], P_schedule=(16, 24, 32, 48), threads=2)
    assert fit.relative_error(corr) <= 0.05
    d = np.abs(np.diff(fit.deltas))
    assert d[2] < d[1] < d[0]  # Cauchy trend
    rows = list(csv.reader(io.StringIO(fit.to_csv())))
    assert rows[0] == ["alpha", "dimension", "P", "E0", "residual", "delta"]
    assert len(rows) == 5
    summary = json.loads(fit.to_json())
    assert {"c0", "c1", "stderr", "c0_alt_model"} <= set(summary)


def test_sweep_threads_do_not_change_results(basis):
    p = PekarProblem(basis, B=6, M=1)
    s = scf_solve(p)
    a = asymptotic_fit(p, s, [4.0, 8.0, 16.0], P_schedule=(16, 24, 32), threads=1)
    b = asymptotic_fit(p, s, [4.0, 8.0, 16.0], P_schedule=(16, 24, 32), threads=3)
    assert a.deltas == b.deltas


def test_sweep_unconverged_names_alpha(basis):
    p = PekarProblem(basis, B=6, M=2)
    s = scf_solve(p)
    with pytest.raises(NonConvergenceError, match="alpha=2.0"):
        asymptotic_fit(p, s, [2.0, 4.0, 8.0], P_schedule=(1, 2), tol=1e-14, displaced=False)


def test_c0_stable_under_larger_electron_basis(basis):
    out = []
    for B in (10, 14):
        p = PekarProblem(basis, B=B, M=2)
        s = scf_solve(p)
        out.append(asymptotic_fit(p, s, [4.0, 8.0, 16.0, 32.0], P_schedule=(16, 32, 48, 64)).c0)
    assert abs(out[1] - out[0]) <= 0.01 * abs(out[0])
