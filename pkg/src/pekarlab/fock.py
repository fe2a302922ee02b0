"""Exact diagonalization of the finite-mode polaron Hamiltonian.

The Fock space of M modes is truncated by total occupation sum(p) <= P.
Ladder operators are normalized as b = alpha * a so that [b, b^+] = 1; the
field energy alpha^-2 b^+ b then carries the 1/alpha^2 scale explicitly.
Electron index is the slow (major) index of the tensor product.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from itertools import combinations

import numpy as np
import scipy.sparse as sp
from scipy.sparse import linalg as spla

from .errors import MemoryBudgetError, NonConvergenceError, PreconditionError
from .pekar import PekarProblem

DEFAULT_MAX_DIMENSION = 4_000_000


def fock_dimension(M: int, P: int) -> int:
    return math.comb(M + P, M)


def enumerate_fock_basis(M: int, P: int, B: int = 1, max_dimension: int = DEFAULT_MAX_DIMENSION) -> list[tuple]:
    """Occupation tuples with sum <= P in graded-lexicographic order.

    Tuples are grouped by total occupation and ordered lexicographically
    (descending in the first mode) within a group.
    """
    if M < 1 or P < 0:
        raise PreconditionError("need M >= 1 and P >= 0")
    if fock_dimension(M, P) * B > max_dimension:
        raise MemoryBudgetError(
            f"dimension {B} x C({M + P},{M}) = {B * fock_dimension(M, P)} exceeds budget {max_dimension}"
        )
    out = []
    for total in range(P + 1):
        # stars and bars: choose M-1 bar positions among total+M-1 slots
        group = []
        for bars in combinations(range(total + M - 1), M - 1):
            prev, occ = -1, []
            for b in bars:
                occ.append(b - prev - 1)
                prev = b
            occ.append(total + M - 1 - prev - 1)
            group.append(tuple(occ))
        group.sort(reverse=True)
        out.extend(group)
    return out


def annihilators(states: list[tuple], M: int) -> list[sp.csr_matrix]:
    """Sparse b_n on the truncated space (b_n^+ is the transpose)."""
    index = {s: i for i, s in enumerate(states)}
    dim = len(states)
    occ = np.asarray(states, dtype=np.int64).reshape(dim, M)
    ops = []
    for n in range(M):
        rows, cols, vals = [], [], []
        for j in np.flatnonzero(occ[:, n] > 0):
            target = list(states[j])
            target[n] -= 1
            rows.append(index[tuple(target)])
            cols.append(j)
            vals.append(math.sqrt(occ[j, n]))
        ops.append(sp.csr_matrix((vals, (rows, cols)), shape=(dim, dim)))
    return ops


@dataclass(frozen=True, eq=False)
class TruncatedModel:
    """Finite-mode polaron Hamiltonian.

    ``shift`` selects the frame: None is the bare frame, a length-M vector
    is the coherent displacement b = d + alpha * shift.  ``multipliers``
    scale the coupling of each mode individually.
    """

    problem: PekarProblem
    alpha: float
    P: int
    shift: np.ndarray | None = None
    multipliers: np.ndarray | None = None
    max_dimension: int = DEFAULT_MAX_DIMENSION

    def __post_init__(self):
        if self.alpha <= 0:
            raise PreconditionError("alpha must be positive")
        if self.P < 0:
            raise PreconditionError("P must be non-negative")
        if self.shift is not None:
            s = np.asarray(self.shift, dtype=float)
            if s.shape != (self.problem.M,):
                raise PreconditionError("displaced frame needs a shift of length M")
            object.__setattr__(self, "shift", s)
        if self.multipliers is not None:
            c = np.asarray(self.multipliers, dtype=float)
            if c.shape != (self.problem.M,) or np.any(c < 0):
                raise PreconditionError("multipliers must be M non-negative numbers")
            object.__setattr__(self, "multipliers", c)

    @property
    def M(self) -> int:
        return self.problem.M

    @property
    def B(self) -> int:
        return self.problem.B

    @property
    def frame(self) -> str:
        return "bare" if self.shift is None else "displaced"

    @property
    def dimension(self) -> int:
        return self.B * fock_dimension(self.M, self.P)

    @cached_property
    def states(self) -> list[tuple]:
        return enumerate_fock_basis(self.M, self.P, self.B, self.max_dimension)

    def with_(self, **changes) -> "TruncatedModel":
        params = {k: getattr(self, k) for k in self.__dataclass_fields__}
        params.update(changes)
        return TruncatedModel(**params)


def assemble_hamiltonian(model: TruncatedModel) -> sp.csr_matrix:
    pr = model.problem
    c = np.ones(pr.M) if model.multipliers is None else model.multipliers
    V = pr.coupling * c[:, None, None]  # g c_n e_n^{-1/2} Phi_n
    states = model.states
    nf = len(states)
    ops = annihilators(states, pr.M)
    occ = np.asarray(states, dtype=float).reshape(nf, pr.M).sum(axis=1)
    If = sp.identity(nf, format="csr")
    if model.shift is None:
        h0 = np.diag(pr.e_el)
        C = -V / model.alpha
    else:
        lam = model.shift
        h0 = np.diag(pr.e_el) - 2 * np.tensordot(lam, V, axes=1) + (lam @ lam) * np.eye(pr.B)
        C = -(V - lam[:, None, None] * np.eye(pr.B)) / model.alpha
    H = sp.kron(sp.csr_matrix(0.5 * (h0 + h0.T)), If)
    H = H + sp.kron(sp.identity(pr.B), sp.diags(occ / model.alpha**2))
    for n, b in enumerate(ops):
        X = (b + b.T).tocsr()
        H = H + sp.kron(sp.csr_matrix(0.5 * (C[n] + C[n].T)), X)
    return H.tocsr()


@dataclass
class FockGroundState:
    E0: float
    residual: float
    dimension: int
    mean_occupation: np.ndarray
    vector: np.ndarray = field(repr=False, default=None)


def lowest_eigenvalue(
    H, tol: float = 1e-12, seed=0, dense_max: int = 2000, maxiter: int | None = None
) -> tuple[float, np.ndarray, float]:
    """Lowest eigenpair (E0, v, residual) of a symmetric operator.

    Dense LAPACK below ``dense_max``; otherwise ARPACK Lanczos with a
    starting vector drawn from ``seed``.
    """
    n = H.shape[0]
    if n <= dense_max:
        A = H.toarray() if sp.issparse(H) else np.asarray(H)
        w, v = np.linalg.eigh(A)
        E, x = float(w[0]), v[:, 0]
    else:
        v0 = np.random.default_rng(seed).standard_normal(n)
        try:
            w, v = spla.eigsh(H, k=1, which="SA", v0=v0, tol=tol, maxiter=maxiter, ncv=min(n, 64))
        except spla.ArpackNoConvergence as exc:
            raise NonConvergenceError(f"Lanczos did not converge at dimension {n}") from exc
        E, x = float(w[0]), v[:, 0]
    x = x / np.linalg.norm(x)
    i = int(np.argmax(np.abs(x)))
    if x[i] < 0:
        x = -x
    residual = float(np.linalg.norm(H @ x - E * x))
    return E, x, residual


def ground_state(model: TruncatedModel, tol: float = 1e-12, seed=0) -> FockGroundState:
    H = assemble_hamiltonian(model)
    E, x, res = lowest_eigenvalue(H, tol=tol, seed=seed)
    nf = len(model.states)
    prob = (x.reshape(model.B, nf) ** 2).sum(axis=0)
    occ = prob @ np.asarray(model.states, dtype=float).reshape(nf, model.M)
    return FockGroundState(E, res, H.shape[0], occ, x)


def converge_in_P(
    model: TruncatedModel, tol: float, P_schedule=None, seed=0
) -> tuple[FockGroundState, int, list[tuple[int, float]]]:
    """Raise P along ``P_schedule`` until successive E0 differ by < tol.

    Returns the last ground state, its P, and the (P, E0) history.
    """
    schedule = list(P_schedule) if P_schedule is not None else [8, 16, 24, 32, 48, 64, 96]
    history, prev = [], None
    for P in schedule:
        gs = ground_state(model.with_(P=P), seed=seed)
        history.append((P, gs.E0))
        if prev is not None and abs(prev - gs.E0) < tol:
            return gs, P, history
        prev = gs.E0
    raise NonConvergenceError(
        f"E0 not converged in P at alpha={model.alpha}: history {history}", trajectory=history
    )


def coupling_monotonicity_check(
    model: TruncatedModel, mode_index: int, multipliers, tol: float = 1e-10
) -> tuple[list[float], int]:
    """E0 along a grid of coupling multipliers for one mode; returns (E0s, violations)."""
    mult = np.asarray(multipliers, dtype=float)
    if np.any(mult < 0) or np.any(np.diff(mult) < 0):
        raise PreconditionError("multipliers must be non-negative and increasing")
    base = np.ones(model.M) if model.multipliers is None else model.multipliers.copy()
    E = []
    for m in mult:
        c = base.copy()
        c[mode_index] = m
        E.append(ground_state(model.with_(multipliers=c)).E0)
    violations = int(np.sum(np.diff(E) > tol))
    return E, violations


def operator_inequality_check(lhs, rhs) -> float:
    """Smallest eigenvalue of rhs - lhs (>= -tol certifies lhs <= rhs)."""
    A = rhs - lhs
    if A.shape[0] != A.shape[1]:
        raise PreconditionError("operators must be square with equal dimensions")
    A = A.toarray() if sp.issparse(A) else np.asarray(A, dtype=float)
    return float(np.linalg.eigvalsh(0.5 * (A + A.T))[0])


def single_mode_lemma_instance(problem: PekarProblem, P: int, alpha: float, profile, constant: float):
    """Operators of a^+(h_x) a(h_x) <= C p^2 N for h_x(y) = profile(x) phi_1(y).

    With a single field mode a(h_x) = profile(x) a_1, so the left side is
    (profile^2 in the electron basis) (x) N and the right side is
    C diag(e) (x) N.  Returns (lhs, rhs) as dense matrices.
    """
    basis = problem.basis
    if basis.dim != 1:
        raise PreconditionError("the lemma instance is built on an interval basis")
    L = basis.domain.lengths[0]
    x, w = np.polynomial.legendre.leggauss(400)
    x = 0.5 * L * (x + 1)
    w = 0.5 * L * w
    phi = basis.evaluate(x[:, None], modes=slice(0, problem.B))
    prof = np.asarray(profile(x), dtype=float)
    Hmult = (phi * w * prof**2) @ phi.T
    states = enumerate_fock_basis(1, P)
    N = np.diag(np.array([s[0] for s in states], dtype=float) / alpha**2)
    lhs = np.kron(Hmult, N)
    rhs = constant * np.kron(np.diag(problem.e_el), N)
    return lhs, rhs
