"""Fluctuation operators K and L around the Pekar minimizer.

Convention: the Hessian of F^P at lam^P equals 2 (1 - K).  The quadratic
form <phi|H^P|phi> of the continuum theory is half the coordinate Hessian
(F^P(lam^P + t u) - e^P ~ t^2 u.(1-K).u).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import DegeneracyError, OutOfRegimeError, PreconditionError
from .pekar import PekarProblem, PekarSolution, electron_hamiltonian, pekar_F


def reduced_resolvent(H: np.ndarray, degenerate_tol: float = 1e-10) -> tuple[np.ndarray, float, np.ndarray]:
    """Q (H - mu)^{-1} Q for the ground level of symmetric H; returns (R, mu, psi)."""
    w, v = np.linalg.eigh(H)
    if len(w) > 1 and w[1] - w[0] < degenerate_tol:
        raise DegeneracyError(f"electron gap {w[1] - w[0]:.3e} too small for the reduced resolvent")
    R = (v[:, 1:] / (w[1:] - w[0])) @ v[:, 1:].T
    return R, float(w[0]), v[:, 0]


def _field_vectors(problem: PekarProblem, psi: np.ndarray) -> np.ndarray:
    """Columns e_m^{-1/2} Phi_m psi, shape (B, M)."""
    return np.einsum("mij,j->im", problem.Phi, psi) / np.sqrt(problem.e_ph)


def assemble_K(solution: PekarSolution, problem: PekarProblem) -> np.ndarray:
    R, _, psi = reduced_resolvent(electron_hamiltonian(problem, solution.lam), problem.degenerate_tol)
    A = _field_vectors(problem, psi)
    K = 4 * problem.g**2 * A.T @ R @ A
    return 0.5 * (K + K.T)


def assemble_L(solution: PekarSolution, problem: PekarProblem) -> np.ndarray:
    # the electron index k runs over the B-dimensional electron basis
    A = _field_vectors(problem, solution.psi)
    L = 4 * problem.g**2 * (A.T / problem.e_el) @ A
    return 0.5 * (L + L.T)


def quantum_correction(
    K, mode_eigenvalues=None, dim: int | None = None, fit_fraction: float = 1 / 3
) -> tuple[float, float]:
    """1/2 Tr(1 - sqrt(1 - K)) and an extrapolated bound on the missing modes.

    The tail fits k_j ~ C e_j^p on the last ``fit_fraction`` of the sorted
    spectrum and sums (1/2) C e_j^p over the eigenvalues in
    ``mode_eigenvalues`` beyond the first M, continuing past the list with
    Weyl growth e_j ~ j^(2/d).  The result carries a safety factor 2.
    Without ``mode_eigenvalues`` the tail is NaN.
    """
    K = np.asarray(K, dtype=float)
    k = np.sort(np.linalg.eigvalsh(0.5 * (K + K.T)))[::-1]
    if k[0] >= 1:
        raise OutOfRegimeError(f"largest eigenvalue of K is {k[0]:.6f} >= 1")
    if k[-1] < -1e-10:
        raise OutOfRegimeError(f"K has negative eigenvalue {k[-1]:.3e}")
    value = 0.5 * float(np.sum(1 - np.sqrt(1 - np.clip(k, 0, None))))
    if mode_eigenvalues is None:
        return value, math.nan
    return value, _tail(k, np.asarray(mode_eigenvalues, dtype=float), dim, fit_fraction)


def _tail(k, e_all, dim, fit_fraction) -> float:
    M = len(k)
    if len(e_all) < M:
        raise PreconditionError("need at least M mode eigenvalues for the tail fit")
    start = min(int(M * (1 - fit_fraction)), M - 2)
    sel = slice(max(start, 0), M)
    kk, ee = k[sel], e_all[:M][sel]
    pos = kk > 0
    if pos.sum() < 2:
        return 0.0
    p, logC = np.polyfit(np.log(ee[pos]), np.log(kk[pos]), 1)
    C = math.exp(logC)
    beyond = e_all[M:]
    tail = 0.5 * C * float(np.sum(beyond**p))
    N = len(e_all)
    d = dim or 3
    growth = 2 * p / d
    if growth >= -1:
        return math.inf
    tail += 0.5 * C * e_all[-1] ** p * N / (-growth - 1)
    return 2.0 * tail


@dataclass(frozen=True, eq=False)
class FluctuationOperators:
    K: np.ndarray
    L: np.ndarray
    correction: float
    tail_bound: float
    k_spectrum: np.ndarray

    def to_dict(self) -> dict:
        return {
            "M": int(self.K.shape[0]),
            "K": self.K.tolist(),
            "L": self.L.tolist(),
            "k_spectrum": self.k_spectrum.tolist(),
            "correction": self.correction,
            "tail_bound": self.tail_bound,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def fluctuation_operators(solution: PekarSolution, problem: PekarProblem) -> FluctuationOperators:
    K = assemble_K(solution, problem)
    L = assemble_L(solution, problem)
    value, tail = quantum_correction(K, problem.basis.eigenvalues, problem.basis.dim)
    k = np.sort(np.linalg.eigvalsh(K))[::-1]
    return FluctuationOperators(K, L, value, tail, k)


def fd_hessian(func, x0, step: float = 1e-3, richardson: bool = True) -> np.ndarray:
    """Central-difference Hessian, optionally Richardson-extrapolated (h, h/2)."""

    def central(h):
        n = len(x0)
        Hm = np.empty((n, n))
        f0 = func(x0)
        I = np.eye(n) * h
        for i in range(n):
            Hm[i, i] = (func(x0 + I[i]) - 2 * f0 + func(x0 - I[i])) / h**2
            for j in range(i):
                v = (
                    func(x0 + I[i] + I[j])
                    - func(x0 + I[i] - I[j])
                    - func(x0 - I[i] + I[j])
                    + func(x0 - I[i] - I[j])
                ) / (4 * h**2)
                Hm[i, j] = Hm[j, i] = v
        return Hm

    x0 = np.asarray(x0, dtype=float)
    H1 = central(step)
    if not richardson:
        return H1
    H2 = central(step / 2)
    return (4 * H2 - H1) / 3


@dataclass
class ExpansionReport:
    eps: float
    max_ratio: float
    ratios: np.ndarray
    skipped: int


def _directions(problem, eps, samples, rng):
    u = rng.normal(size=(samples, problem.M))
    norm = np.sqrt(np.sum(u**2 / problem.e_ph, axis=1))
    return eps * u / norm[:, None]


def local_expansion_check(
    solution: PekarSolution,
    problem: PekarProblem,
    K: np.ndarray,
    L: np.ndarray,
    eps: float,
    samples: int = 50,
    seed=0,
) -> ExpansionReport:
    """Remainder of the quadratic expansion relative to <delta|L|delta>.

    Directions are normalized so that |(-Delta)^{-1/2} delta| = eps.
    """
    rng = np.random.default_rng(seed)
    ratios, skipped = [], 0
    Hq = np.eye(problem.M) - K
    for delta in _directions(problem, eps, samples, rng):
        try:
            F = pekar_F(problem, solution.lam + delta)
        except np.linalg.LinAlgError:
            skipped += 1
            continue
        rem = abs(F - solution.eP - delta @ Hq @ delta)
        denom = delta @ L @ delta
        if denom <= 0:
            skipped += 1
            continue
        ratios.append(rem / denom)
    ratios = np.asarray(ratios)
    return ExpansionReport(eps, float(ratios.max()) if len(ratios) else math.nan, ratios, skipped)


@dataclass
class GlobalBoundReport:
    kappa: float
    violations: int
    samples: int
    largest_kappa: float
    min_margin: float


def global_bound_check(
    solution: PekarSolution,
    problem: PekarProblem,
    kappa: float,
    samples: int = 500,
    seed=0,
    tol: float = 1e-12,
    radius_range: tuple[float, float] = (1e-3, 10.0),
) -> GlobalBoundReport:
    """F^P(lam) >= e^P + delta.(1 - (1 + kappa sqrt(e))^{-1}).delta on random lam.

    Radii are log-uniform in ``radius_range`` (times max(|lam^P|, 1)), so the
    sample mixes near-minimizer and far draws.  The largest kappa satisfied by
    every sample is found by bisection (the right side increases with kappa).
    """
    if kappa <= 0:
        raise PreconditionError("kappa must be positive")
    rng = np.random.default_rng(seed)
    scale = max(float(np.linalg.norm(solution.lam)), 1.0)
    u = rng.normal(size=(samples, problem.M))
    u /= np.linalg.norm(u, axis=1)[:, None]
    r = scale * np.exp(rng.uniform(*np.log(radius_range), size=samples))
    deltas = u * r[:, None]
    gains = np.array([pekar_F(problem, solution.lam + d) - solution.eP for d in deltas])
    sq = np.sqrt(problem.e_ph)

    def margins(kp):
        w = 1 - 1 / (1 + kp * sq)
        return gains - np.sum(deltas**2 * w, axis=1)

    m = margins(kappa)
    lo, hi = 0.0, 1.0
    while np.all(margins(hi) >= -tol) and hi < 1e8:
        lo, hi = hi, hi * 2
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if np.all(margins(mid) >= -tol):
            lo = mid
        else:
            hi = mid
    return GlobalBoundReport(kappa, int(np.sum(m < -tol)), samples, lo, float(m.min()))


@dataclass
class LipschitzReport:
    nu: float
    trials: int
    violations: int
    min_margin: float
    mean_margin: float


def _f_sqrt(A):
    w = np.clip(np.linalg.eigvalsh(A), 0, None)
    return float(np.sum(1 - np.sqrt(1 - w)))


def lipschitz_trace_check(nu: float, size: int = 8, trials: int = 100, seed=0, tol: float = 1e-12) -> LipschitzReport:
    """Tr f(A+B) <= Tr f(A) + C_f Tr B for f(t) = 1 - sqrt(1 - t) on random PSD A, B."""
    if not (0 < nu < 1):
        raise PreconditionError("nu must lie in (0, 1)")
    rng = np.random.default_rng(seed)
    Cf = 1 / (2 * math.sqrt(1 - nu))
    margins = []
    for _ in range(trials):
        X = rng.normal(size=(size, rng.integers(1, size + 1)))
        Y = rng.normal(size=(size, rng.integers(1, size + 1)))
        A, Bm = X @ X.T, Y @ Y.T
        s = nu * rng.uniform(0.05, 1.0) / np.linalg.eigvalsh(A + Bm)[-1]
        A, Bm = s * A, s * Bm
        margins.append(_f_sqrt(A) + Cf * np.trace(Bm) - _f_sqrt(A + Bm))
    margins = np.asarray(margins)
    return LipschitzReport(nu, trials, int(np.sum(margins < -tol)), float(margins.min()), float(margins.mean()))


def k_decay_slope(K: np.ndarray, mode_eigenvalues) -> float:
    """Log-log slope of the descending eigenvalues of K against ascending e_j."""
    k = np.sort(np.linalg.eigvalsh(K))[::-1]
    e = np.asarray(mode_eigenvalues, dtype=float)[: len(k)]
    pos = k > 0
    return float(np.polyfit(np.log(e[pos]), np.log(k[pos]), 1)[0])


def shell_closures(eigenvalues, upto: int, tol: float = 1e-9) -> list[int]:
    """Mode counts that do not split a degenerate level."""
    e = np.asarray(eigenvalues, dtype=float)
    out = [i + 1 for i in range(min(upto, len(e) - 1)) if e[i + 1] - e[i] > tol]
    if upto == len(e):
        out.append(upto)
    return out


@dataclass
class CorrectionConvergence:
    modes: list
    values: list
    limit: float
    amplitude: float
    exponent: float


def correction_convergence(K: np.ndarray, mode_eigenvalues, min_modes: int = 10) -> CorrectionConvergence:
    """Fit correction(m) = c_inf - A m^q over leading blocks of K at shell closures."""
    from scipy.optimize import curve_fit

    ms = [m for m in shell_closures(mode_eigenvalues, K.shape[0]) if m >= min_modes]
    if len(ms) < 4:
        raise PreconditionError("need at least four shell closures for the convergence fit")
    vals = np.array([quantum_correction(K[:m, :m])[0] for m in ms])
    x = np.asarray(ms, dtype=float)
    model = lambda m, c, A, q: c - A * m**q  # noqa: E731
    popt, _ = curve_fit(model, x, vals, p0=[vals[-1], vals[-1] - vals[0], -0.5], maxfev=20000)
    return CorrectionConvergence(ms, vals.tolist(), float(popt[0]), float(popt[1]), float(popt[2]))
