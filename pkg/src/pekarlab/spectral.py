"""Dirichlet-Laplacian eigenbases on intervals and rectangular boxes.

Everything downstream (electron Hamiltonians, phonon couplings, kernel
bounds) is expressed in the sine eigenbasis built here.  For a box
``[0, L_1] x ... x [0, L_d]`` the eigenpairs are

    e_n = sum_k (n_k pi / L_k)**2,
    phi_n(x) = prod_k sqrt(2 / L_k) sin(n_k pi x_k / L_k),

indexed by positive integer multi-indices ``n``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Sequence

import numpy as np

from .errors import (
    AccuracyError,
    BasisBoundsError,
    EmptyBasisError,
    InsufficientBasisError,
    PreconditionError,
)

_KIND_DIM = {"interval": 1, "box2d": 2, "box3d": 3}


@dataclass(frozen=True)
class DomainSpec:
    kind: str
    lengths: tuple[float, ...]

    def __post_init__(self):
        if self.kind not in _KIND_DIM:
            raise PreconditionError(f"unknown domain kind {self.kind!r}")
        lengths = tuple(float(v) for v in self.lengths)
        if len(lengths) != _KIND_DIM[self.kind]:
            raise PreconditionError(
                f"{self.kind} needs {_KIND_DIM[self.kind]} side lengths, got {len(lengths)}"
            )
        if any(not (v > 0 and math.isfinite(v)) for v in lengths):
            raise PreconditionError("side lengths must be positive and finite")
        object.__setattr__(self, "lengths", lengths)

    @classmethod
    def interval(cls, length: float = math.pi) -> "DomainSpec":
        return cls("interval", (length,))

    @classmethod
    def box(cls, *lengths: float) -> "DomainSpec":
        kind = {1: "interval", 2: "box2d", 3: "box3d"}.get(len(lengths))
        if kind is None:
            raise PreconditionError("boxes have 1, 2 or 3 sides")
        return cls(kind, tuple(lengths))

    @property
    def dim(self) -> int:
        return len(self.lengths)

    @property
    def volume(self) -> float:
        return float(np.prod(self.lengths))

    def to_dict(self) -> dict:
        return {"kind": self.kind, "lengths": list(self.lengths)}

    @classmethod
    def from_dict(cls, data: dict) -> "DomainSpec":
        return cls(data["kind"], tuple(data["lengths"]))


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


def _sine_derivative(n: np.ndarray, x: np.ndarray, length: float, order: int) -> np.ndarray:
    """d^order/dx^order of sqrt(2/L) sin(n pi x / L); shape (len(n), len(x))."""
    k = n[:, None] * (math.pi / length)
    arg = k * x[None, :]
    # derivatives cycle sin, cos, -sin, -cos
    base = (np.sin, np.cos, lambda t: -np.sin(t), lambda t: -np.cos(t))[order % 4](arg)
    return math.sqrt(2.0 / length) * k**order * base


@dataclass(frozen=True)
class SpectralBasis:
    """Ordered Dirichlet eigenpairs of a box.

    ``indices[i]`` is the multi-index of mode ``i`` and ``eigenvalues[i]`` its
    eigenvalue; modes are sorted by eigenvalue with lexicographic tie-breaking.
    """

    domain: DomainSpec
    indices: np.ndarray
    eigenvalues: np.ndarray
    energy_cutoff: float | None = field(default=None, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "indices", _frozen(np.asarray(self.indices, dtype=np.int64)))
        object.__setattr__(self, "eigenvalues", _frozen(np.asarray(self.eigenvalues, dtype=float)))

    def __len__(self) -> int:
        return len(self.eigenvalues)

    @property
    def dim(self) -> int:
        return self.domain.dim

    @property
    def complete_below(self) -> float:
        """Energy up to which the basis is known to contain every mode."""
        if self.energy_cutoff is not None:
            return self.energy_cutoff
        top = self.eigenvalues[-1]
        # with count selection the top shell may be cut; the level below is safe
        lower = self.eigenvalues[self.eigenvalues < top * (1 - 1e-12)]
        return float(lower[-1]) if len(lower) else 0.0

    def truncate(self, count: int) -> "SpectralBasis":
        if count > len(self):
            raise BasisBoundsError(f"basis has {len(self)} modes, asked for {count}")
        return SpectralBasis(self.domain, self.indices[:count], self.eigenvalues[:count])

    def evaluate(self, points, beta: Sequence[int] | None = None, modes=None) -> np.ndarray:
        """Values of ``d^beta phi_n`` at ``points``; returns shape (n_modes, n_points).

        ``points`` has shape (n_points, d) (or (n_points,) in 1D).
        """
        pts = np.asarray(points, dtype=float)
        if pts.ndim == 0:
            pts = pts.reshape(1, 1)
        elif pts.ndim == 1:
            pts = pts.reshape(-1, 1) if self.dim == 1 else pts.reshape(1, -1)
        if pts.shape[1] != self.dim:
            raise PreconditionError(f"points must have {self.dim} coordinates")
        beta = tuple(beta) if beta is not None else (0,) * self.dim
        if len(beta) != self.dim or any(b < 0 for b in beta):
            raise PreconditionError("beta must be a non-negative multi-index of length d")
        idx = self.indices if modes is None else self.indices[modes]
        out = np.ones((len(idx), len(pts)))
        for axis, length in enumerate(self.domain.lengths):
            out *= _sine_derivative(idx[:, axis], pts[:, axis], length, beta[axis])
        return out

    def to_dict(self) -> dict:
        return {
            "domain": self.domain.to_dict(),
            "modes": [
                {"index": [int(v) for v in idx], "eigenvalue": float(e)}
                for idx, e in zip(self.indices, self.eigenvalues)
            ],
        }


def _eigenvalues_for(indices: np.ndarray, lengths: Sequence[float]) -> np.ndarray:
    scale = np.array([(math.pi / L) ** 2 for L in lengths])
    return (indices.astype(float) ** 2) @ scale


def _lattice_below(domain: DomainSpec, cutoff: float) -> np.ndarray:
    nmax = [int(math.floor(L * math.sqrt(cutoff) / math.pi)) for L in domain.lengths]
    if min(nmax) < 1:
        return np.zeros((0, domain.dim), dtype=np.int64)
    axes = [np.arange(1, m + 1) for m in nmax]
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, domain.dim)
    e = _eigenvalues_for(grid, domain.lengths)
    return grid[e <= cutoff * (1 + 1e-13)]


def _sorted(indices: np.ndarray, lengths) -> tuple[np.ndarray, np.ndarray]:
    e = _eigenvalues_for(indices, lengths)
    # round so that float noise cannot reorder exactly degenerate levels
    key_e = np.round(e, 9)
    order = np.lexsort(tuple(indices[:, k] for k in reversed(range(indices.shape[1]))) + (key_e,))
    return indices[order], e[order]


def build_basis(
    domain: DomainSpec, count: int | None = None, energy_cutoff: float | None = None
) -> SpectralBasis:
    """Lowest ``count`` modes, or all modes with eigenvalue <= ``energy_cutoff``."""
    if (count is None) == (energy_cutoff is None):
        raise PreconditionError("give exactly one of count or energy_cutoff")
    e1 = sum((math.pi / L) ** 2 for L in domain.lengths)
    if energy_cutoff is not None:
        if energy_cutoff < e1 * (1 - 1e-13):
            raise EmptyBasisError(f"cutoff {energy_cutoff} below first eigenvalue {e1}")
        idx, e = _sorted(_lattice_below(domain, energy_cutoff), domain.lengths)
        return SpectralBasis(domain, idx, e, energy_cutoff=float(energy_cutoff))
    if count < 1:
        raise EmptyBasisError("count must be at least 1")
    cutoff = e1
    while True:
        idx = _lattice_below(domain, cutoff)
        if len(idx) >= count:
            break
        cutoff *= 1.5
    idx, e = _sorted(idx, domain.lengths)
    return SpectralBasis(domain, idx[:count], e[:count])


def sine_triple_integral(a, b, c, length: float = math.pi) -> np.ndarray:
    """Closed form of int_0^L phi_a phi_b phi_c dx for 1D sine modes (broadcasting)."""
    a, b, c = np.broadcast_arrays(*(np.asarray(v, dtype=np.int64) for v in (a, b, c)))

    def J(m):
        # int_0^pi sin(m t) dt
        m = np.asarray(m)
        odd = (m % 2) != 0
        safe = np.where(odd, m, 1)
        return np.where(odd, 2.0 / safe, 0.0)

    # the middle pair is grouped so the result is bitwise symmetric in (a, b)
    s = J(a + b - c) + (J(a - b + c) + J(-a + b + c)) - J(a + b + c)
    return (2.0 / length) ** 1.5 * (length / math.pi) * 0.25 * s


@dataclass(frozen=True)
class OverlapTensor:
    """T[i, j, n] = int phi_i phi_j phi_n for i, j < B and n < M."""

    B: int
    M: int
    T: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "T", _frozen(self.T))

    def to_dict(self) -> dict:
        return {"shape": list(self.T.shape), "T": self.T.ravel().tolist()}


def triple_overlap(basis: SpectralBasis, B: int, M: int) -> OverlapTensor:
    if B < 1 or M < 1 or B > len(basis) or M > len(basis):
        raise BasisBoundsError(f"B={B}, M={M} exceed basis of {len(basis)} modes")
    T = np.ones((B, B, M))
    ie, ip = basis.indices[:B], basis.indices[:M]
    for axis, L in enumerate(basis.domain.lengths):
        top = int(max(ie[:, axis].max(), ip[:, axis].max()))
        r = np.arange(top + 1)
        table = sine_triple_integral(r[:, None, None], r[None, :, None], r[None, None, :], L)
        T *= table[ie[:, axis][:, None, None], ie[:, axis][None, :, None], ip[:, axis][None, None, :]]
    return OverlapTensor(B, M, T)


def unit_ball_volume(d: int) -> float:
    return math.pi ** (d / 2) / math.gamma(1 + d / 2)


class WeylCount(NamedTuple):
    counted: int
    predicted: float
    predicted_without_ball_volume: float

    @property
    def ratio(self) -> float:
        return self.counted / self.predicted


def weyl_count(basis: SpectralBasis, Lam: float) -> WeylCount:
    """Eigenvalue count below ``Lam**2`` against the one-term Weyl law.

    ``predicted`` is the standard law omega_d |Omega| Lam^d / (2 pi)^d;
    ``predicted_without_ball_volume`` drops omega_d.
    """
    if Lam**2 > basis.complete_below * (1 + 1e-12):
        raise InsufficientBasisError(
            f"Lam^2 = {Lam**2} beyond basis coverage {basis.complete_below}"
        )
    d = basis.dim
    counted = int(np.count_nonzero(basis.eigenvalues <= Lam**2))
    plain = basis.domain.volume * Lam**d / (2 * math.pi) ** d
    return WeylCount(counted, unit_ball_volume(d) * plain, plain)


class KernelValue(NamedTuple):
    value: float
    tail: float
    terms: int


def _mode_envelope(basis: SpectralBasis, beta) -> np.ndarray:
    env = np.ones(len(basis))
    for axis, L in enumerate(basis.domain.lengths):
        env *= (2.0 / L) * (basis.indices[:, axis] * math.pi / L) ** beta[axis]
    return env


def kernel_eval(
    basis: SpectralBasis,
    spectral_function: Callable[[np.ndarray], np.ndarray],
    x,
    y,
    beta: Sequence[int] | None = None,
    tol: float = 1e-10,
) -> KernelValue:
    """sum_n f(e_n) d^beta phi_n(x) phi_n(y), derivative taken in x.

    The truncation tail is estimated by fitting a power law to the term
    envelope |f(e_n)| sup|d^beta phi_n| sup|phi_n| over the last decade of
    summed modes and integrating it to infinity (times a safety factor 2).
    On an interval with x != y, a conditionally convergent sum falls back to
    the Abel-summation bound of ``_oscillatory_tail``.
    Raises AccuracyError when that tail exceeds ``tol`` or does not converge.
    """
    beta = tuple(beta) if beta is not None else (0,) * basis.dim
    if sum(beta) > 2:
        raise PreconditionError("|beta| <= 2 supported")
    fvals = np.asarray(spectral_function(basis.eigenvalues), dtype=float)
    dx = basis.evaluate(np.atleast_1d(np.asarray(x, dtype=float)).reshape(1, -1), beta)[:, 0]
    py = basis.evaluate(np.atleast_1d(np.asarray(y, dtype=float)).reshape(1, -1))[:, 0]
    value = float(np.dot(fvals * dx, py))
    env = np.abs(fvals) * _mode_envelope(basis, beta)
    tail = _tail_estimate(env)
    if not (tail <= tol) and basis.dim == 1:
        tail = min(tail, _oscillatory_tail(basis, env, float(np.ravel(x)[0]), float(np.ravel(y)[0])))
    if not (tail <= tol):
        raise AccuracyError(
            f"kernel tail estimate {tail:.3e} exceeds tolerance {tol:.1e}",
            partial_sum=value,
            tail=tail,
        )
    return KernelValue(value, tail, len(basis))


def _oscillatory_tail(basis: SpectralBasis, env: np.ndarray, x: float, y: float) -> float:
    """Summation-by-parts bound for 1D sums at x != y.

    d^beta sin(k x) sin(k y) is half a difference of trigonometric functions
    of k(x - y) and k(x + y).  If the coefficients decrease monotonically
    past the last summed mode, Abel summation bounds each remainder by
    a_N / |sin(theta / 2)| with theta = pi (x -+ y) / L.
    """
    L = basis.domain.lengths[0]
    th_minus, th_plus = math.pi * (x - y) / L, math.pi * (x + y) / L
    s_minus, s_plus = abs(math.sin(th_minus / 2)), abs(math.sin(th_plus / 2))
    if min(s_minus, s_plus) < 1e-12 or len(env) < 20:
        return math.inf
    last = env[len(env) - len(env) // 10 :]
    if np.any(np.diff(last) > 0):
        return math.inf
    return float(2.0 * 0.5 * env[-1] * (1 / s_minus + 1 / s_plus))


def _tail_estimate(env: np.ndarray) -> float:
    N = len(env)
    if not np.any(env[N - max(N // 10, 1) :]):
        return 0.0  # the final decade vanishes: compactly supported spectral function
    start = max(N // 10, 1) if N >= 20 else 0
    last = env[start:]
    ords = np.arange(start + 1, N + 1, dtype=float)
    pos = last > 0
    if not pos.any():
        return 0.0
    if pos.sum() < 3:
        return float(2 * last[pos].max() * N)
    slope, icpt = np.polyfit(np.log(ords[pos]), np.log(last[pos]), 1)
    if slope >= -1.0:
        return math.inf
    a_end = max(math.exp(icpt + slope * math.log(N)), float(last[-1]))
    return float(2.0 * a_end * N / (-slope - 1.0))


def export_json(basis: SpectralBasis, tensor: OverlapTensor | None = None) -> str:
    payload = basis.to_dict()
    if tensor is not None:
        payload.update(tensor.to_dict())
    return json.dumps(payload)
