"""Quadrature checks of closed-form constants and spectral-sum scalings.

Sums over Dirichlet eigenfunctions of a box are evaluated on tensor grids by
contracting a weight array W[n1, .., nd] = w(e_n) against per-axis tables
(2/L) |d^r sin(n pi x / L)|^2, one axis at a time.
"""

from __future__ import annotations

import csv
import io
import itertools
import json
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import integrate

from .errors import AccuracyError, InsufficientBasisError, PreconditionError, QuadratureError
from .spectral import DomainSpec, KernelValue, SpectralBasis, kernel_eval


@dataclass(frozen=True)
class QuadratureSpec:
    rule: str = "adaptive"  # or "fixed_n"
    abs_tol: float = 0.0
    rel_tol: float = 1e-12
    max_subdivisions: int = 500
    nodes: int = 400  # for fixed_n

    def __post_init__(self):
        if self.rule not in ("adaptive", "fixed_n"):
            raise PreconditionError("rule must be 'adaptive' or 'fixed_n'")
        if self.abs_tol < 0 or self.rel_tol <= 0:
            raise PreconditionError("tolerances must be positive")


def sphere_area(d: int) -> float:
    """Surface area of the unit sphere in R^d."""
    return 2 * math.pi ** (d / 2) / math.gamma(d / 2)


def _half_line(g: Callable[[float], float], quad: QuadratureSpec, points=None) -> float:
    if quad.rule == "fixed_n":
        # k = s / (1 - s) maps (0, 1) onto (0, inf)
        x, w = np.polynomial.legendre.leggauss(quad.nodes)
        s = 0.5 * (x + 1)
        k = s / (1 - s)
        jac = 0.5 / (1 - s) ** 2
        return float(np.sum(w * jac * np.array([g(v) for v in k])))
    total, err = 0.0, 0.0
    edges = [0.0] + sorted(points or []) + [math.inf]
    for lo, hi in zip(edges[:-1], edges[1:]):
        val, e = integrate.quad(
            g, lo, hi, epsabs=quad.abs_tol, epsrel=quad.rel_tol, limit=quad.max_subdivisions
        )
        total += val
        err += e
    if not np.isfinite(total) or err > max(quad.abs_tol, 1e3 * quad.rel_tol * abs(total)):
        raise QuadratureError(f"radial integral error estimate {err:.3e} too large (value {total:.6e})")
    return total


def radial_fourier_integral(
    f: Callable[[float], float],
    d: int = 3,
    include_measure: bool = True,
    quad: QuadratureSpec = QuadratureSpec(),
    points=None,
) -> float:
    """int_{R^d} f(|k|^2) dk as a radial integral, optionally divided by (2 pi)^d."""
    val = sphere_area(d) * _half_line(lambda k: f(k * k) * k ** (d - 1) if k > 0 else 0.0, quad, points)
    return val / (2 * math.pi) ** d if include_measure else val


def gross_constants(K: float) -> dict:
    """Closed forms of the four Gross-transform integrals (field-strength factors stripped)."""
    return {
        "g": math.e * K / (4 * math.pi**1.5),
        "f": K**-3 / (4 * math.pi),
        "vf": 1 / (2 * math.pi * K),
        "pf": 6 * math.pi**2 / K,
    }


def gross_integrals(K: float, quad: QuadratureSpec = QuadratureSpec()) -> dict:
    """The same four integrals by radial quadrature."""
    K2 = K * K
    return {
        "g": radial_fourier_integral(lambda t: math.exp(1 - t / K2) / t, 3, True, quad),
        "f": radial_fourier_integral(lambda t: (2 / (t + K2)) ** 3, 3, True, quad),
        "vf": radial_fourier_integral(lambda t: (2 / (t + K2)) ** 2, 3, True, quad),
        "pf": radial_fourier_integral(lambda t: t * (2 / (t + K2)) ** 3, 3, False, quad),
    }


# ------------------------------------------------------------ lattice sums


def _axis_table(n: np.ndarray, x: np.ndarray, L: float, order: int) -> np.ndarray:
    """(2/L) |d^order sin(n pi x / L)|^2, shape (len(n), len(x))."""
    k = n[:, None] * math.pi / L
    trig = np.sin(k * x[None, :]) if order % 2 == 0 else np.cos(k * x[None, :])
    return (2.0 / L) * k ** (2 * order) * trig**2


def _lattice(domain: DomainSpec, energy_cutoff: float):
    nmax = [int(math.floor(math.sqrt(energy_cutoff) * L / math.pi)) for L in domain.lengths]
    if min(nmax) < 1:
        raise InsufficientBasisError("energy cutoff below the first eigenvalue")
    axes = [np.arange(1, m + 1) for m in nmax]
    e = np.zeros([len(a) for a in axes])
    for i, (a, L) in enumerate(zip(axes, domain.lengths)):
        shape = [1] * domain.dim
        shape[i] = len(a)
        e = e + ((a * math.pi / L) ** 2).reshape(shape)
    return axes, e


def lattice_sum(domain: DomainSpec, weight: np.ndarray, axes, x_axes, orders) -> np.ndarray:
    """sum_n weight[n] prod_k (2/L_k)|d^{orders_k} sin(n_k pi x_k / L_k)|^2 on a tensor grid."""
    S = weight
    for i, (a, xs, L, r) in enumerate(zip(axes, x_axes, domain.lengths, orders)):
        tab = _axis_table(a, np.asarray(xs, float), L, r)
        # contract the leading n axis; the new x axis goes to the end
        S = np.tensordot(S, tab, axes=([0], [0]))
    return S


def default_x_axes(
    domain: DomainSpec,
    points: int = 33,
    closed: bool = True,
    Lam: float | None = None,
    layer_points: int = 60,
) -> list[np.ndarray]:
    """Sample grid per axis for suprema over x.

    The closed grid includes the faces: sums over odd derivatives peak on the
    boundary (cos^2 = 1 there), and the supremum over the open box equals the
    maximum over its closure.  ``closed=False`` gives interior midpoints.
    With ``Lam`` each axis also gets ``layer_points`` nodes in a layer of
    width 6/Lam at both ends, where cutoff-weighted sums of even derivatives
    peak at distance of order 1/Lam from the face.
    """
    if closed:
        axes = [np.linspace(0.0, L, points) for L in domain.lengths]
    else:
        axes = [(np.arange(points) + 0.5) * L / points for L in domain.lengths]
    if Lam is None:
        return axes
    out = []
    for ax, L in zip(axes, domain.lengths):
        w = min(6.0 / Lam, 0.5 * L)
        layer = np.linspace(0.0, w, layer_points + 1)[1:]
        out.append(np.unique(np.concatenate([ax, layer, L - layer])))
    return out


def _multi_indices(d: int, order: int):
    return sorted({tuple(np.bincount(c, minlength=d)) for c in itertools.combinations_with_replacement(range(d), order)})


def _fit(x, y) -> tuple[float, float]:
    """Log-log slope and R^2."""
    lx, ly = np.log(np.asarray(x, float)), np.log(np.asarray(y, float))
    slope, icpt = np.polyfit(lx, ly, 1)
    resid = ly - (slope * lx + icpt)
    ss = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1 - float(np.sum(resid**2)) / ss if ss > 0 else 1.0
    return float(slope), r2


@dataclass
class ScalingFit:
    quantity: str
    fitted_exponent: float
    expected: float
    tolerance: float
    r2: float

    @property
    def passed(self) -> bool:
        return abs(self.fitted_exponent - self.expected) <= self.tolerance and self.r2 >= 0.98

    def to_dict(self) -> dict:
        return {
            "quantity": self.quantity,
            "fitted_exponent": self.fitted_exponent,
            "expected": self.expected,
            "tolerance": self.tolerance,
            "r2": self.r2,
            "pass": self.passed,
        }


@dataclass
class CutoffNormTable:
    Lams: np.ndarray
    A1: np.ndarray
    A2: np.ndarray
    fits: list

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["Lambda", "A1", "A2"])
        for row in zip(self.Lams, self.A1, self.A2):
            w.writerow([repr(float(v)) for v in row])
        return buf.getvalue()


def cutoff_weight(e: np.ndarray, Lam: float, power: float) -> np.ndarray:
    return e ** (-power) * (1 - np.exp(-e / Lam**2)) ** 4


def cutoff_norm(domain: DomainSpec, Lam: float, order: int, energy_cutoff: float, x_axes=None) -> float:
    """max over derivative directions and grid points of |p^order |p|^(-2 order) w_x|_2.

    The squared norm is sum_n e_n^{-1-2 order} (1 - e^{-e_n/Lam^2})^4 |d^order phi_n(x)|^2.
    """
    axes, e = _lattice(domain, energy_cutoff)
    x_axes = x_axes if x_axes is not None else default_x_axes(domain, Lam=Lam)
    W = np.where(e <= energy_cutoff, cutoff_weight(e, Lam, 1 + 2 * order), 0.0)
    best = 0.0
    for gamma in _multi_indices(domain.dim, order):
        best = max(best, float(lattice_sum(domain, W, axes, x_axes, gamma).max()))
    return math.sqrt(best)


def cutoff_norms(
    basis: SpectralBasis | DomainSpec,
    Lams: Sequence[float],
    x_axes=None,
    energy_cutoff: float | None = None,
    tol: float = 0.15,
) -> CutoffNormTable:
    """A2 (two derivatives) and A1 (three derivatives) over a Lambda grid with log-log fits."""
    domain = basis.domain if isinstance(basis, SpectralBasis) else basis
    Lams = np.asarray(sorted(Lams), float)
    if energy_cutoff is None:
        energy_cutoff = basis.complete_below if isinstance(basis, SpectralBasis) else 25 * Lams[-1] ** 2
    if energy_cutoff < 4 * Lams[-1] ** 2:
        raise InsufficientBasisError(f"energy cutoff {energy_cutoff} does not reach well beyond Lambda^2")
    A2 = np.array([cutoff_norm(domain, L, 2, energy_cutoff, x_axes) for L in Lams])
    A1 = np.array([cutoff_norm(domain, L, 3, energy_cutoff, x_axes) for L in Lams])
    s2, r2_2 = _fit(Lams, A2)
    s1, r2_1 = _fit(Lams, A1)
    fits = [ScalingFit("A2", s2, -1.5, tol, r2_2), ScalingFit("A1", s1, -2.5, tol, r2_1)]
    return CutoffNormTable(Lams, A1, A2, fits)


def flat_A2_constant(Lam: float) -> float:
    """Flat-space analogue of A2: sqrt(max_{jk} int k_j^2 k_k^2 |k|^-10 (1-e^{-k^2/Lam^2})^4 dk/(2pi)^3).

    The maximum is at j = k, where the angular average of khat_j^4 is 1/5.
    """
    I = radial_fourier_integral(lambda t: t**-3 * (1 - math.exp(-t / Lam**2)) ** 4, 3, True)
    return math.sqrt(I / 5)


# ------------------------------------------------------------ Coulomb norm


def coulomb_norm_radial(f: Callable[[float], float], quad: QuadratureSpec = QuadratureSpec(rel_tol=1e-11), points=None) -> float:
    """Coulomb norm of a radial function on R^3.

    |f|_C^2 = (1/4 pi) int int f(x) f(y) / |x - y| = 4 pi int f(r) r^2 [r^-1 int_0^r f s^2 + int_r^inf f s] dr.
    """
    pts = sorted(points or [])

    def seg_quad(g, lo, hi):
        edges = [lo] + [p for p in pts if lo < p < hi] + [hi]
        tot = 0.0
        for a, b in zip(edges[:-1], edges[1:]):
            v, err = integrate.quad(g, a, b, epsabs=quad.abs_tol, epsrel=quad.rel_tol, limit=quad.max_subdivisions)
            if not np.isfinite(v):
                raise QuadratureError("divergent inner integral")
            tot += v
        return tot

    def potential(r):
        inner = seg_quad(lambda s: f(s) * s * s, 0.0, r) / r
        outer = seg_quad(lambda s: f(s) * s, r, math.inf)
        return inner + outer

    val = 4 * math.pi * seg_quad(lambda r: f(r) * r * r * potential(r) if r > 0 else 0.0, 0.0, math.inf)
    if val < -1e-14:
        raise QuadratureError(f"negative Coulomb energy {val}")
    return math.sqrt(max(val, 0.0))


def coulomb_norm_fourier(fhat: Callable[[float], float], quad: QuadratureSpec = QuadratureSpec(rel_tol=1e-11)) -> float:
    """Coulomb norm from the radial Fourier transform: |f|_C^2 = int |fhat(k)|^2 / k^2 dk / (2 pi)^3."""
    return math.sqrt(radial_fourier_integral(lambda t: fhat(math.sqrt(t)) ** 2 / t, 3, True, quad))


# ------------------------------------------------------------ diagonal sums


def b5_constant(f: Callable[[float], float], d: int) -> float:
    """(2e/d)^{d/2} Gamma(1 + d/2) int f(k^2) dk / (2 pi)^d."""
    return (2 * math.e / d) ** (d / 2) * math.gamma(1 + d / 2) * radial_fourier_integral(f, d, True)


@dataclass
class DiagonalReport:
    bound: float
    sup_sum: float
    min_margin: float
    violations: int


def diagonal_sum_check(
    domain: DomainSpec,
    f: Callable[[np.ndarray], np.ndarray],
    energy_cutoff: float,
    x_axes=None,
    f_scalar: Callable[[float], float] | None = None,
) -> DiagonalReport:
    """sum_n f(e_n)|phi_n(x)|^2 against the constant for non-increasing f, on a grid."""
    axes, e = _lattice(domain, energy_cutoff)
    x_axes = x_axes if x_axes is not None else default_x_axes(domain)
    W = np.where(e <= energy_cutoff, f(e), 0.0)
    S = lattice_sum(domain, W, axes, x_axes, (0,) * domain.dim)
    bound = b5_constant(f_scalar or (lambda t: float(f(np.asarray(t)))), domain.dim)
    margin = bound - S
    return DiagonalReport(bound, float(S.max()), float(margin.min()), int(np.sum(margin < 0)))


def truncated_sum(domain: DomainSpec, K: float, beta: Sequence[int], x_axes=None) -> np.ndarray:
    """sum_{e_n <= K^2} |d^beta phi_n(x)|^2 on a tensor grid."""
    axes, e = _lattice(domain, K * K)
    x_axes = x_axes if x_axes is not None else default_x_axes(domain)
    W = (e <= K * K).astype(float)
    return lattice_sum(domain, W, axes, x_axes, tuple(beta))


def derivative_growth_fit(domain: DomainSpec, beta: Sequence[int], Ks: Sequence[float], x_axes=None, tol: float = 0.2) -> tuple[ScalingFit, np.ndarray]:
    """Fit sup_x sum_{e_n<=K^2}|d^beta phi_n|^2 ~ K^{2|beta|+d}."""
    sups = np.array([truncated_sum(domain, K, beta, x_axes).max() for K in Ks])
    slope, r2 = _fit(Ks, sups)
    return ScalingFit("diag_derivative_sum", slope, 2 * sum(beta) + domain.dim, tol, r2), sups


def weighted_sum_ratio(domain: DomainSpec, beta: Sequence[int], Ks: Sequence[float], energy_factor: float = 40.0, x_axes=None) -> np.ndarray:
    """sup_x sum_n f_K(e_n)|d^beta phi_n|^2 / int k^{2|beta|} f_K(k^2) dk/(2pi)^d for f_K(t) = e^{-t/K^2}.

    A bounded ratio across K is the weighted analogue of the truncated-sum growth law.
    """
    out = []
    b = sum(beta)
    for K in Ks:
        cut = energy_factor * K * K
        axes, e = _lattice(domain, cut)
        x = x_axes if x_axes is not None else default_x_axes(domain)
        W = np.where(e <= cut, np.exp(-e / K**2), 0.0)
        S = lattice_sum(domain, W, axes, x, tuple(beta)).max()
        ref = radial_fourier_integral(lambda t, K=K: t**b * math.exp(-t / K**2), domain.dim, True)
        out.append(S / ref)
    return np.asarray(out)


# ------------------------------------------------------------ off-diagonal kernels


def z_ell(ell: float, Lam: float) -> Callable[[np.ndarray], np.ndarray]:
    return lambda t: np.asarray(t, float) ** (-ell) * (1 - np.exp(-np.asarray(t, float) / Lam**2)) ** 2


def _z_ell_remainder(ell: float, Lam: float) -> Callable[[np.ndarray], np.ndarray]:
    # t^-ell - z_ell(t): exponentially decaying in t
    def f(t):
        t = np.asarray(t, float)
        u = np.exp(-t / Lam**2)
        return t ** (-ell) * u * (2 - u)

    return f


def power_kernel_1d(ell: float, x: float, y: float, length: float) -> float | None:
    """Closed form of sum_n e_n^-ell phi_n(x) phi_n(y) on [0, L] where one is known.

    For ell = 1/2 the sum is (1/pi) log|sin(pi (x + y) / 2L) / sin(pi (x - y) / 2L)|.
    """
    if ell == 0.5:
        a, b = math.pi * (x + y) / (2 * length), math.pi * (x - y) / (2 * length)
        return math.log(abs(math.sin(a) / math.sin(b))) / math.pi
    return None


def _z_kernel(basis: SpectralBasis, ell: float, Lam: float, x, y, beta, tol: float) -> KernelValue:
    """Kernel of z_ell(-Lap); in 1D the Lambda-independent power part is split off.

    z_ell(t) = t^-ell - t^-ell e^{-t/Lam^2}(2 - e^{-t/Lam^2}).  The remainder
    converges exponentially, so only the power part can be slow; it is
    evaluated in closed form when available.
    """
    if basis.dim == 1 and not any(beta):
        P = power_kernel_1d(ell, float(np.ravel(x)[0]), float(np.ravel(y)[0]), basis.domain.lengths[0])
        if P is not None:
            r = kernel_eval(basis, _z_ell_remainder(ell, Lam), x, y, beta, tol)
            return KernelValue(P - r.value, r.tail, r.terms)
    return kernel_eval(basis, z_ell(ell, Lam), x, y, beta, tol)


@dataclass
class KernelDecayReport:
    ell: float
    rows: list  # (Lambda, x, y, value, tail)
    far_exponents: list  # per pair: fitted Lambda exponent where Lambda |x - y| >= 1
    far_constant: float
    near_constant: float
    basis_change: float

    def to_dict(self) -> dict:
        return {
            "ell": self.ell,
            "far_exponents": self.far_exponents,
            "far_constant": self.far_constant,
            "near_constant": self.near_constant,
            "basis_change": self.basis_change,
        }


def offdiagonal_kernel_decay(
    basis: SpectralBasis,
    ell: float,
    Lams: Sequence[float],
    pairs: Sequence[tuple[float, float]],
    beta: Sequence[int] | None = None,
    tol: float = 1e-9,
) -> KernelDecayReport:
    """Kernel of z_ell(-Lap) off the diagonal against its two-regime envelope.

    far (Lam r >= 1):  Lam^-4 r^(2 ell - 4 - d - |beta|)
    near (Lam r <= 1): r^(2 ell - d - |beta|), log, or Lam^(d - 2 ell) r^-|beta| by the sign of ell - d/2
    """
    d = basis.dim
    if d > 2:
        raise PreconditionError("off-diagonal kernels are evaluated on 1D or 2D bases")
    beta = tuple(beta) if beta is not None else (0,) * d
    b = sum(beta)
    if not (b < ell < 2 + d / 2):
        raise PreconditionError("need |beta| < ell < 2 + d/2")
    half = basis.truncate(len(basis) // 2)
    rows, far_c, near_c, change = [], [], [], 0.0
    exps = []
    for x, y in pairs:
        r = float(np.linalg.norm(np.atleast_1d(x) - np.atleast_1d(y)))
        if r == 0:
            raise PreconditionError("x = y is excluded")
        far_L, far_v = [], []
        for Lam in Lams:
            kv = _z_kernel(basis, ell, Lam, x, y, beta, tol)
            rows.append((Lam, x, y, kv.value, kv.tail))
            try:
                kh = _z_kernel(half, ell, Lam, x, y, beta, tol)
                change = max(change, abs(kh.value - kv.value))
            except AccuracyError as exc:
                change = max(change, abs(exc.partial_sum - kv.value))
            v = abs(kv.value)
            if Lam * r >= 1:
                far_L.append(Lam)
                far_v.append(v)
                far_c.append(v / (Lam**-4 * r ** (2 * ell - 4 - d - b)))
            else:
                if ell < d / 2:
                    env = r ** (2 * ell - d - b)
                elif ell == d / 2:
                    env = math.log(1 + 1 / (Lam * r)) * r**-b
                else:
                    env = Lam ** (d - 2 * ell) * r**-b
                near_c.append(v / env)
        if len(far_L) >= 2:
            exps.append(_fit(far_L, far_v)[0])
    return KernelDecayReport(
        ell,
        rows,
        exps,
        max(far_c) if far_c else math.nan,
        max(near_c) if near_c else math.nan,
        change,
    )


def summary_json(fits: Sequence[ScalingFit]) -> str:
    return json.dumps([f.to_dict() for f in fits])
