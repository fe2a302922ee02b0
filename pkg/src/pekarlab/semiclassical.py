"""Semiclassical bounds on the ground-state energy in the field coordinates.

Lower bound: the operator -(1/4 alpha^4) Lap_lam + F^P(lam) - M/(2 alpha^2) on
R^M, solved with a sine discrete-variable representation.

Upper bound: exact energy of the Gaussian x cutoff x adiabatic trial state
Psi(lam) = G(lam) psi_lam, where psi_lam is the electron ground state at lam.
For real normalized psi_lam,
    <Psi|H|Psi> = int (1/4 alpha^4)(|grad G|^2 + G^2 sum_n |d_n psi|^2)
                  + (F^P - M/(2 alpha^2)) G^2 dlam.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.fft import dst
from scipy.sparse import linalg as spla

from .errors import GridConvergenceError, OutOfRegimeError, PreconditionError, QuadratureError
from .fluctuation import reduced_resolvent
from .pekar import PekarProblem, PekarSolution, electron_hamiltonian, pekar_F


# ---------------------------------------------------------------- lower bound


@dataclass(frozen=True)
class GridSpec:
    points: int = 48  # interior points per axis
    half_width: float | None = None  # box half-width; default 12 harmonic widths
    tol: float = 1e-8


def _sine_dvr_kinetic(n: int, width: float) -> np.ndarray:
    """Matrix of -d^2/dx^2 on n interior points of a Dirichlet box of the given width."""
    S = dst(np.eye(n), type=1, norm="ortho", axis=0)
    k = np.arange(1, n + 1) * math.pi / width
    return (S * k**2) @ S.T


def _harmonic_width(alpha: float, curvature: np.ndarray) -> np.ndarray:
    # ground state exp(-alpha^2 sqrt(c) x^2) has standard deviation 1/(2 alpha c^{1/4})
    return 1.0 / (2 * alpha * np.clip(curvature, 1e-6, None) ** 0.25)


def _oscillator_energy(problem, center, alpha, n, half_widths) -> float:
    M = problem.M
    axes = [center[m] + np.linspace(-half_widths[m], half_widths[m], n + 2)[1:-1] for m in range(M)]
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([g.ravel() for g in mesh], axis=1)
    V = np.array([pekar_F(problem, p) for p in pts]) - M / (2 * alpha**2)
    Ts = [_sine_dvr_kinetic(n, 2 * h) / (4 * alpha**4) for h in half_widths]
    if M == 1:
        w = np.linalg.eigvalsh(Ts[0] + np.diag(V))
        return float(w[0])
    I = sp.identity(n)
    H = sp.kron(sp.csr_matrix(Ts[0]), I) + sp.kron(I, sp.csr_matrix(Ts[1])) + sp.diags(V)
    v0 = np.exp(-0.5 * np.sum(((pts - center) / (half_widths / 12)) ** 2, axis=1))
    w = spla.eigsh(H.tocsr(), k=1, which="SA", v0=v0, tol=1e-14)[0]
    return float(w[0])


def oscillator_bound(
    problem: PekarProblem,
    solution: PekarSolution,
    alpha: float,
    grid: GridSpec = GridSpec(),
    K: np.ndarray | None = None,
) -> float:
    """Ground energy of the field-coordinate oscillator operator built on F^P.

    The grid is centred at lam^P.  Both resolution (n -> 2n) and box size
    (half-width and n doubled together) are checked against ``grid.tol``.
    """
    if problem.M > 2:
        raise PreconditionError("oscillator_bound uses tensor grids and needs M <= 2")
    if K is None:
        from .fluctuation import assemble_K

        K = assemble_K(solution, problem)
    curv = np.clip(1 - np.diag(K), 1e-3, None)
    hw = (
        np.full(problem.M, grid.half_width)
        if grid.half_width is not None
        else 12 * _harmonic_width(alpha, curv)
    )
    n = grid.points
    E = _oscillator_energy(problem, solution.lam, alpha, n, hw)
    E_fine = _oscillator_energy(problem, solution.lam, alpha, 2 * n, hw)
    E_wide = _oscillator_energy(problem, solution.lam, alpha, 2 * n, 2 * hw)
    change = max(abs(E_fine - E), abs(E_wide - E_fine))
    if change > grid.tol:
        raise GridConvergenceError(f"oscillator energy changed by {change:.3e} under grid doubling")
    return E_fine


# ---------------------------------------------------------------- upper bound


def smootherstep_cutoff(t):
    """C^2 cutoff: 1 for t <= 1/2, 0 for t >= 1, quintic in between."""
    t = np.asarray(t, dtype=float)
    s = np.clip(2 * t - 1, 0, 1)
    return 1 - s**3 * (10 - 15 * s + 6 * s**2)


def smootherstep_cutoff_deriv(t):
    t = np.asarray(t, dtype=float)
    s = np.clip(2 * t - 1, 0, 1)
    return -2 * 30 * s**2 * (1 - s) ** 2


@dataclass(frozen=True)
class QuadratureRule:
    order: int = 40  # Gauss-Legendre nodes per panel
    panels: int = 4  # per side of the cutoff onset t = 1/2
    angles: int = 64  # trapezoid nodes on the circle (M = 2)
    tol: float = 1e-10


def _composite_gl(a: float, b: float, order: int, panels: int, split: float | None = None):
    # panels are counted per side of the split, so doubling always refines
    if split is not None and a < split < b:
        edges = np.concatenate([np.linspace(a, split, panels + 1), np.linspace(split, b, panels + 1)[1:]])
    else:
        edges = np.linspace(a, b, panels + 1)
    x0, w0 = np.polynomial.legendre.leggauss(order)
    xs, ws = [], []
    for lo, hi in zip(edges[:-1], edges[1:]):
        xs.append(0.5 * (hi - lo) * x0 + 0.5 * (hi + lo))
        ws.append(0.5 * (hi - lo) * w0)
    return np.concatenate(xs), np.concatenate(ws)


def _local_terms(problem: PekarProblem, lam: np.ndarray) -> tuple[float, float]:
    """F^P(lam) and sum_n |d psi_lam / d lam_n|^2."""
    H = electron_hamiltonian(problem, lam)
    R, mu, psi = reduced_resolvent(H, problem.degenerate_tol)
    # d_n H = -2 g e_n^{-1/2} Phi_n,  d_n psi = -R (d_n H) psi
    dpsi = 2 * np.einsum("ij,mjk,k->mi", R, problem.coupling, psi)
    return mu + float(lam @ lam), float(np.sum(dpsi**2))


def _trial_integrals(problem, solution, K, alpha, eps, rule: QuadratureRule):
    M = problem.M
    w, U = np.linalg.eigh(np.eye(M) - K)
    if np.any(w <= 0):
        raise OutOfRegimeError("1 - K is not positive definite")
    S = (U * np.sqrt(w)) @ U.T  # (1 - K)^{1/2}
    sq_e = np.sqrt(problem.e_ph)
    # support: |(-Lap)^{-1/2} delta| <= eps, i.e. delta = eps * sqrt(e) * u with |u| <= 1
    r, wr = _composite_gl(0.0, 1.0, rule.order, rule.panels, split=0.5)
    if M == 1:
        dirs = np.array([[-1.0], [1.0]])
        wdir = np.array([1.0, 1.0])
        jac = np.ones_like(r)
    else:
        th = 2 * math.pi * np.arange(rule.angles) / rule.angles
        dirs = np.stack([np.cos(th), np.sin(th)], axis=1)
        wdir = np.full(rule.angles, 2 * math.pi / rule.angles)
        jac = r
    scale = eps * sq_e
    num = den = 0.0
    for u, wu in zip(dirs, wdir):
        for t, wt, jt in zip(r, wr, jac):
            delta = scale * u * t
            gauss = math.exp(-(alpha**2) * delta @ S @ delta)
            chi = float(smootherstep_cutoff(t))
            if chi == 0.0:
                continue
            G = gauss * chi
            # gradient of G in lam: Gaussian part plus the cutoff through t = |delta/sqrt(e)|/eps
            gradG = -2 * alpha**2 * (S @ delta) * G
            if t > 0:
                dt = delta / problem.e_ph / (eps**2 * t)
                gradG = gradG + gauss * float(smootherstep_cutoff_deriv(t)) * dt
            F, dpsi2 = _local_terms(problem, solution.lam + delta)
            weight = wu * wt * jt
            num += weight * ((gradG @ gradG + G**2 * dpsi2) / (4 * alpha**4) + (F - M / (2 * alpha**2)) * G**2)
            den += weight * G**2
    return num / den


def trial_state_energy(
    problem: PekarProblem,
    solution: PekarSolution,
    K: np.ndarray,
    alpha: float,
    eps: float,
    rule: QuadratureRule = QuadratureRule(),
) -> float:
    """Energy of the Gaussian x cutoff x adiabatic trial state over M <= 2 field modes.

    The quadrature is repeated with doubled panels; disagreement above
    ``rule.tol`` raises.  The constant Jacobian of lam -> u (u = delta /
    (eps sqrt(e))) cancels between numerator and denominator.
    """
    if problem.M > 2:
        raise PreconditionError("trial_state_energy supports at most two field modes")
    if not (0 < eps < 1):
        raise PreconditionError("eps must lie in (0, 1)")
    E1 = _trial_integrals(problem, solution, K, alpha, eps, rule)
    fine = QuadratureRule(rule.order, 2 * rule.panels, 2 * rule.angles, rule.tol)
    E2 = _trial_integrals(problem, solution, K, alpha, eps, fine)
    if abs(E2 - E1) > rule.tol:
        raise QuadratureError(f"trial energy quadrature changed by {abs(E2 - E1):.3e}")
    return E2
