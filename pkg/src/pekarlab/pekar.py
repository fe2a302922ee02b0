"""Truncated classical Pekar problem.

Phonon fields are represented by their coordinates ``lam`` in the first M
Dirichlet modes and the electron by a unit vector ``psi`` in the first B
modes.  With Phi_n the matrix (Phi_n)_ij = T[i, j, n] the classical energy is

    E(psi, lam) = psi.diag(e).psi - 2 g sum_n lam_n e_n^{-1/2} psi.Phi_n.psi + |lam|^2

and the partial minimizations give E^P(psi) (over lam) and F^P(lam) (over psi).
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import optimize

from .errors import DegeneracyError, NonConvergenceError, PreconditionError
from .spectral import SpectralBasis, triple_overlap


@dataclass(frozen=True, eq=False)
class PekarProblem:
    basis: SpectralBasis
    B: int
    M: int
    g: float = 1.0
    damping: float = 0.5
    tol_residual: float = 1e-12
    tol_energy: float = 1e-13
    max_iterations: int = 20000
    degenerate_tol: float = 1e-10

    def __post_init__(self):
        n = len(self.basis)
        if not (1 <= self.B <= n and 1 <= self.M <= n):
            raise PreconditionError(f"need 1 <= B, M <= {n}, got B={self.B}, M={self.M}")
        if self.g < 0:
            raise PreconditionError("coupling multiplier g must be non-negative")
        if not (0 < self.damping <= 1):
            raise PreconditionError("damping must lie in (0, 1]")

    @cached_property
    def e(self) -> np.ndarray:
        return np.asarray(self.basis.eigenvalues)

    @cached_property
    def e_el(self) -> np.ndarray:
        return self.e[: self.B]

    @cached_property
    def e_ph(self) -> np.ndarray:
        return self.e[: self.M]

    @cached_property
    def full_tensor(self) -> np.ndarray:
        """T[i, j, k] for electron indices i, j < B and every basis mode k."""
        return triple_overlap(self.basis, self.B, len(self.basis)).T

    @cached_property
    def Phi(self) -> np.ndarray:
        """Phonon multiplication matrices, shape (M, B, B)."""
        return np.ascontiguousarray(np.moveaxis(self.full_tensor[:, :, : self.M], 2, 0))

    @cached_property
    def coupling(self) -> np.ndarray:
        """g e_n^{-1/2} Phi_n, shape (M, B, B)."""
        return self.g * self.Phi / np.sqrt(self.e_ph)[:, None, None]

    def with_(self, **changes) -> "PekarProblem":
        params = {k: getattr(self, k) for k in self.__dataclass_fields__}
        params.update(changes)
        return PekarProblem(**params)


@dataclass(frozen=True, eq=False)
class PekarSolution:
    lam: np.ndarray
    psi: np.ndarray
    eP: float
    mu: float
    gap: float
    residual: float
    iterations: int
    energies: list = field(default_factory=list, repr=False)
    converged: bool = True

    def to_dict(self, problem: PekarProblem) -> dict:
        return {
            "B": problem.B,
            "M": problem.M,
            "g": problem.g,
            "lambdaP": self.lam.tolist(),
            "psiP": self.psi.tolist(),
            "eP": self.eP,
            "muP": self.mu,
            "gap": self.gap,
            "residual": self.residual,
            "iterations": self.iterations,
        }

    def to_json(self, problem: PekarProblem) -> str:
        return json.dumps(self.to_dict(problem))


def electron_hamiltonian(problem: PekarProblem, lam) -> np.ndarray:
    lam = np.asarray(lam, dtype=float)
    if lam.shape != (problem.M,):
        raise PreconditionError(f"lam must have shape ({problem.M},)")
    H = np.diag(problem.e_el) - 2.0 * np.tensordot(lam, problem.coupling, axes=1)
    return 0.5 * (H + H.T)


def _phase_fix(v: np.ndarray) -> np.ndarray:
    nz = np.flatnonzero(np.abs(v) > 1e-14)
    if len(nz) and v[nz[0]] < 0:
        return -v
    return v


def ground_state(H, degenerate_tol: float = 1e-10) -> tuple[float, np.ndarray, float]:
    """Lowest eigenpair of a symmetric matrix and the gap to the next level."""
    H = np.asarray(H, dtype=float)
    w, v = np.linalg.eigh(H)
    gap = float(w[1] - w[0]) if len(w) > 1 else math.inf
    if gap < degenerate_tol:
        raise DegeneracyError(f"electron gap {gap:.3e} below {degenerate_tol:.1e}")
    return float(w[0]), _phase_fix(v[:, 0]), gap


def optimal_field(problem: PekarProblem, psi) -> np.ndarray:
    """The minimizing lam for a given electron state: g e_n^{-1/2} psi.Phi_n.psi."""
    return np.einsum("i,nij,j->n", psi, problem.coupling, psi)


def pekar_F(problem: PekarProblem, lam) -> float:
    lam = np.asarray(lam, dtype=float)
    mu = np.linalg.eigvalsh(electron_hamiltonian(problem, lam))[0]
    return float(lam @ lam + mu)


def pekar_F_grad(problem: PekarProblem, lam) -> tuple[float, np.ndarray]:
    """F^P and its gradient 2 (lam - lam*(psi_lam)) (Hellmann-Feynman)."""
    lam = np.asarray(lam, dtype=float)
    w, v = np.linalg.eigh(electron_hamiltonian(problem, lam))
    psi = v[:, 0]
    return float(lam @ lam + w[0]), 2.0 * (lam - optimal_field(problem, psi))


def functional_values(problem: PekarProblem, psi, lam) -> tuple[float, float, float]:
    """(E(psi, lam), E^P(psi), F^P(lam))."""
    psi = np.asarray(psi, dtype=float)
    lam = np.asarray(lam, dtype=float)
    if abs(psi @ psi - 1) > 1e-10:
        raise PreconditionError("psi must be normalized")
    proj = np.einsum("i,nij,j->n", psi, problem.coupling, psi)
    kinetic = psi @ (problem.e_el * psi)
    E = kinetic - 2 * lam @ proj + lam @ lam
    EP = kinetic - proj @ proj
    return float(E), float(EP), pekar_F(problem, lam)


def initial_field(problem: PekarProblem, seed) -> np.ndarray:
    rng = np.random.default_rng(seed)
    scale = problem.g * np.abs(problem.Phi[:, 0, 0]).max() / math.sqrt(problem.e_ph[0])
    return rng.normal(scale=max(scale, 1e-3), size=problem.M)


def scf_solve(problem: PekarProblem, init=None, seed=0) -> PekarSolution:
    """Damped fixed-point iteration lam <- (1-theta) lam + theta lam*(psi_lam).

    The update is gradient descent on F^P with step theta/2, so F^P decreases
    monotonically once the iteration is in the basin of a minimizer.
    """
    lam = initial_field(problem, seed) if init is None else np.array(init, dtype=float)
    if lam.shape != (problem.M,):
        raise PreconditionError(f"initial field must have shape ({problem.M},)")
    theta = problem.damping
    energies: list[float] = []
    prev_energy = math.inf
    for it in range(1, problem.max_iterations + 1):
        mu, psi, gap = ground_state(electron_hamiltonian(problem, lam), problem.degenerate_tol)
        energy = float(lam @ lam + mu)
        energies.append(energy)
        lam_new = optimal_field(problem, psi)
        residual = float(np.max(np.abs(lam_new - lam)))
        if residual < problem.tol_residual and abs(energy - prev_energy) < problem.tol_energy:
            return _finish(problem, lam, it, energies)
        prev_energy = energy
        lam = (1 - theta) * lam + theta * lam_new
    raise NonConvergenceError(
        f"SCF not converged after {problem.max_iterations} iterations (residual {residual:.2e})",
        trajectory=energies,
    )


def _finish(problem, lam, iterations, energies) -> PekarSolution:
    mu, psi, gap = ground_state(electron_hamiltonian(problem, lam), problem.degenerate_tol)
    residual = float(np.max(np.abs(optimal_field(problem, psi) - lam)))
    return PekarSolution(
        lam=lam.copy(),
        psi=psi,
        eP=float(lam @ lam + mu),
        mu=mu,
        gap=gap,
        residual=residual,
        iterations=iterations,
        energies=energies,
    )


def minimize_direct(problem: PekarProblem, init=None, seed=0, gtol: float = 1e-12) -> PekarSolution:
    """Quasi-Newton minimization of F^P; independent route to the SCF fixed point."""
    lam0 = initial_field(problem, seed) if init is None else np.asarray(init, dtype=float)
    res = optimize.minimize(
        lambda l: pekar_F_grad(problem, l),
        lam0,
        jac=True,
        method="BFGS",
        options={"gtol": gtol, "maxiter": 10000},
    )
    return _finish(problem, res.x, int(res.nit), [])


@dataclass
class UniquenessReport:
    distinct_minima: list
    basin_counts: list
    failures: list

    def to_dict(self) -> dict:
        return {
            "distinct_minima": [{"eP": e, "lambdaP": l.tolist()} for e, l in self.distinct_minima],
            "basin_counts": list(self.basin_counts),
            "failures": [str(f) for f in self.failures],
        }


def uniqueness_probe(
    problem: PekarProblem, n_starts: int = 20, seed=0, threshold: float = 1e-6, threads: int = 1
) -> UniquenessReport:
    """Multi-start SCF; clusters converged fields within ``threshold`` (max norm)."""
    if n_starts < 2:
        raise PreconditionError("n_starts must be at least 2")
    seeds = np.random.SeedSequence(seed).spawn(n_starts)

    def run(ss):
        try:
            return scf_solve(problem, seed=ss)
        except Exception as exc:  # a failed start must not stop the others
            return exc

    with ThreadPoolExecutor(max_workers=max(threads, 1)) as pool:
        results = list(pool.map(run, seeds))
    minima, counts, failures = [], [], []
    for r in results:
        if isinstance(r, Exception):
            failures.append(r)
            continue
        for k, (_, lam) in enumerate(minima):
            if np.max(np.abs(lam - r.lam)) < threshold:
                counts[k] += 1
                break
        else:
            minima.append((r.eP, r.lam))
            counts.append(1)
    order = np.argsort([e for e, _ in minima], kind="stable")
    return UniquenessReport([minima[i] for i in order], [counts[i] for i in order], failures)


def electron_hessian(
    solution: PekarSolution, problem: PekarProblem, k_range: str = "M"
) -> tuple[np.ndarray, np.ndarray]:
    """Hessian Z^P of E^P on the unit sphere at psi^P, and its spectrum.

    ``k_range="M"`` sums the inverse Laplacian over the M phonon modes, which
    is the definition consistent with the truncated minimization (so
    Z psi^P = 0 holds to solver precision); ``"full"`` uses every basis mode.
    """
    if not solution.converged or solution.residual > 1e-6:
        raise PreconditionError("electron_hessian needs a converged solution")
    if k_range == "M":
        kmax = problem.M
    elif k_range == "full":
        kmax = len(problem.basis)
    else:
        raise PreconditionError("k_range must be 'M' or 'full'")
    psi = solution.psi
    T = problem.full_tensor[:, :, :kmax]
    inv_e = problem.g**2 / problem.e[:kmax]
    Tpsi = np.einsum("ijk,j->ik", T, psi)  # (Phi_k psi)_i
    rho = psi @ Tpsi  # psi.Phi_k.psi
    W = np.einsum("k,ijk->ij", inv_e * rho, T)
    X = (Tpsi * inv_e) @ Tpsi.T
    D = float(psi @ W @ psi)
    Wpsi = W @ psi
    Z = (
        np.diag(problem.e_el)
        - 2 * W
        - 4 * X
        - solution.mu * np.eye(problem.B)
        - 4 * D * np.outer(psi, psi)
        + 4 * (np.outer(psi, Wpsi) + np.outer(Wpsi, psi))
    )
    Z = 0.5 * (Z + Z.T)
    return Z, np.linalg.eigvalsh(Z)


def pekar_EP_sphere(problem: PekarProblem, psi) -> float:
    """E^P(psi / |psi|), used by the Z^P finite-difference oracle."""
    psi = np.asarray(psi, dtype=float)
    psi = psi / np.linalg.norm(psi)
    return functional_values(problem, psi, np.zeros(problem.M))[1]


def reconstruct(problem: PekarProblem, coeffs, points) -> np.ndarray:
    """Real-space values of an electron coefficient vector."""
    return np.asarray(coeffs) @ problem.basis.evaluate(points, modes=slice(0, problem.B))
