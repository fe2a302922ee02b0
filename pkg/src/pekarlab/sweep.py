"""Large-alpha sweep of the finite-mode ground-state energy.

Delta(alpha) = alpha^2 (e^P - E0(alpha)) is fitted to c0 + c1/alpha; c0 is
compared with the quantum correction 1/2 Tr(1 - sqrt(1 - K)) of the same
(M, B) truncation.
"""

from __future__ import annotations

import csv
import io
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import NonConvergenceError, PreconditionError
from .fock import TruncatedModel, converge_in_P
from .pekar import PekarProblem, PekarSolution


@dataclass
class SweepFit:
    alphas: list
    deltas: list
    c0: float
    c1: float
    stderr: tuple
    rows: list = field(default_factory=list)
    c0_alt: float = float("nan")  # c0 under the model c0 + c1 alpha^(-2/11)

    def __post_init__(self):
        if len(self.alphas) < 3 or np.any(np.diff(self.alphas) <= 0):
            raise PreconditionError("a sweep needs at least three strictly increasing alphas")

    def relative_error(self, reference: float) -> float:
        return abs(self.c0 - reference) / abs(reference) if reference else abs(self.c0)

    def to_dict(self) -> dict:
        return {
            "alphas": list(map(float, self.alphas)),
            "deltas": list(map(float, self.deltas)),
            "c0": self.c0,
            "c1": self.c1,
            "stderr": list(self.stderr),
            "c0_alt_model": self.c0_alt,
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["alpha", "dimension", "P", "E0", "residual", "delta"])
        for r in self.rows:
            w.writerow([repr(float(v)) if isinstance(v, float) else v for v in r])
        return buf.getvalue()

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def fit_linear(x, y) -> tuple[np.ndarray, np.ndarray]:
    """Least squares y = c0 + c1 x; returns coefficients and standard errors."""
    x, y = np.asarray(x, float), np.asarray(y, float)
    A = np.column_stack([np.ones_like(x), x])
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    dof = len(x) - 2
    if dof > 0:
        s2 = float(np.sum((y - A @ coef) ** 2)) / dof
        cov = s2 * np.linalg.inv(A.T @ A)
        err = np.sqrt(np.diag(cov))
    else:
        err = np.zeros(2)
    return coef, err


def asymptotic_fit(
    problem: PekarProblem,
    solution: PekarSolution,
    alphas,
    P_schedule=(16, 32, 48, 64, 96),
    tol: float = 1e-9,
    displaced: bool = True,
    threads: int = 1,
    seed=0,
) -> SweepFit:
    """Fock ground energies along ``alphas`` (each converged in P) and the Delta fit."""
    alphas = [float(a) for a in alphas]
    if len(alphas) < 3 or np.any(np.diff(alphas) <= 0):
        raise PreconditionError("alphas must be strictly increasing with at least three entries")
    shift = solution.lam if displaced else None

    def run(alpha):
        model = TruncatedModel(problem, alpha, P_schedule[0], shift=shift)
        try:
            gs, P, _ = converge_in_P(model, tol, P_schedule, seed=seed)
        except NonConvergenceError as exc:
            raise NonConvergenceError(f"alpha={alpha}: {exc}", exc.trajectory) from exc
        return gs, P

    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        results = list(pool.map(run, alphas))
    rows, deltas = [], []
    for a, (gs, P) in zip(alphas, results):
        d = a * a * (solution.eP - gs.E0)
        deltas.append(d)
        rows.append([a, gs.dimension, P, gs.E0, gs.residual, d])
    coef, err = fit_linear(1 / np.asarray(alphas), deltas)
    alt, _ = fit_linear(np.asarray(alphas) ** (-2 / 11), deltas)
    return SweepFit(alphas, deltas, float(coef[0]), float(coef[1]), (float(err[0]), float(err[1])), rows, float(alt[0]))
