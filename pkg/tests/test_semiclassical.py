import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pekarlab.errors import PreconditionError, QuadratureError
from pekarlab.fluctuation import assemble_K, quantum_correction
from pekarlab.fock import TruncatedModel, ground_state
from pekarlab.pekar import PekarProblem, scf_solve
from pekarlab.semiclassical import (
    QuadratureRule,
    oscillator_bound,
    smootherstep_cutoff,
    smootherstep_cutoff_deriv,
    trial_state_energy,
)
from pekarlab.spectral import DomainSpec, build_basis


@pytest.fixture(scope="module")
def basis():
    return build_basis(DomainSpec.interval(), count=30)


@pytest.fixture(scope="module")
def single(basis):
    p = PekarProblem(basis, B=10, M=1)
    s = scf_solve(p)
    return p, s, assemble_K(s, p)


def test_cutoff_shape():
    t = np.array([0.0, 0.25, 0.5, 1.0, 1.7])
    np.testing.assert_array_equal(smootherstep_cutoff(t), [1, 1, 1, 0, 0])
    assert smootherstep_cutoff(0.75) == pytest.approx(0.5)


@settings(max_examples=50, deadline=None)
@given(st.floats(0.5, 1.0))
def test_cutoff_derivative_matches_difference(t):
    h = 1e-6
    fd = (smootherstep_cutoff(t + h) - smootherstep_cutoff(t - h)) / (2 * h)
    assert float(smootherstep_cutoff_deriv(t)) == pytest.approx(float(fd), abs=1e-6)


@pytest.mark.parametrize("M", [1, 2])
def test_decoupled_trial_energy(basis, M):
    # away from the cutoff the Gaussian is the exact oscillator ground state
    p = PekarProblem(basis, B=4, M=M, g=0.0)
    s = scf_solve(p)
    K = assemble_K(s, p)
    assert trial_state_energy(p, s, K, 16.0, 0.5) == pytest.approx(1.0, abs=1e-12)
    assert trial_state_energy(p, s, K, 8.0, 0.9) == pytest.approx(1.0, abs=1e-12)


def test_decoupled_cutoff_costs_energy(basis):
    p = PekarProblem(basis, B=4, M=1, g=0.0)
    s = scf_solve(p)
    assert trial_state_energy(p, s, assemble_K(s, p), 4.0, 0.5) > 1.0


@pytest.mark.parametrize("alpha", [8.0, 16.0])
def test_sandwich_single_mode(single, alpha):
    p, s, K = single
    E_up = trial_state_energy(p, s, K, alpha, 0.5)
    E0 = ground_state(TruncatedModel(p, alpha, 24, shift=s.lam)).E0
    E_K = oscillator_bound(p, s, alpha, K=K)
    assert E_up - E0 >= -1e-7
    assert E0 - E_K >= -1e-7


def test_upper_bound_gap_shrinks(single):
    p, s, K = single
    c = quantum_correction(K)[0]
    gaps = [trial_state_energy(p, s, K, a, 0.5) - (s.eP - c / a**2) for a in (8.0, 16.0, 32.0)]
    assert all(g > 0 for g in gaps)
    assert gaps[0] > gaps[1] > gaps[2]


def test_two_mode_sandwich(basis):
    p = PekarProblem(basis, B=10, M=2)
    s = scf_solve(p)
    K = assemble_K(s, p)
    E_up = trial_state_energy(p, s, K, 8.0, 0.5)
    E0 = ground_state(TruncatedModel(p, 8.0, 24, shift=s.lam)).E0
    assert E_up >= E0 - 1e-7


def test_trial_preconditions(basis, single):
    p, s, K = single
    with pytest.raises(PreconditionError):
        trial_state_energy(p, s, K, 8.0, 1.5)
    p3 = PekarProblem(basis, B=6, M=3)
    s3 = scf_solve(p3)
    with pytest.raises(PreconditionError):
        trial_state_energy(p3, s3, assemble_K(s3, p3), 8.0, 0.5)


def test_coarse_quadrature_detected(single):
    p, s, K = single
    with pytest.raises(QuadratureError):
        trial_state_energy(p, s, K, 4.0, 0.5, QuadratureRule(order=3, panels=1, tol=1e-14))
