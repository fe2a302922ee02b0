"""Command line runner: ``pekarlab <subcommand> [--config PATH] ...``.

Exit status: 0 pass, 1 usage or configuration error, 2 numerical
non-convergence, 3 failed property check.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import platform
import sys
from dataclasses import replace

import numpy as np
import scipy

from . import __version__
from .config import ExperimentConfig, load_config
from .errors import (
    AccuracyError,
    ConfigError,
    DegeneracyError,
    GridConvergenceError,
    NonConvergenceError,
    OutOfRegimeError,
    PekarLabError,
    QuadratureError,
)

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_CHECK = 0, 1, 2, 3
NUMERIC_ERRORS = (
    NonConvergenceError,
    GridConvergenceError,
    QuadratureError,
    AccuracyError,
    DegeneracyError,
    OutOfRegimeError,
)


class PropertyFailure(Exception):
    def __init__(self, invariant: str, detail: str = ""):
        super().__init__(f"{invariant}: {detail}" if detail else invariant)
        self.invariant = invariant


def round_sig(obj, digits: int = 12):
    """Round every float in a nested structure to ``digits`` significant digits."""
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if x == 0 or not math.isfinite(x):
            return x if math.isfinite(x) else str(x)
        return float(f"{x:.{digits - 1}e}")
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.ndarray):
        return round_sig(obj.tolist(), digits)
    if isinstance(obj, dict):
        return {str(k): round_sig(v, digits) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [round_sig(v, digits) for v in obj]
    return obj


class Run:
    """Collects artifacts of one subcommand and writes the manifest."""

    def __init__(self, cfg: ExperimentConfig, subcommand: str, out_dir: str, fmt: str, seed: int):
        self.cfg, self.subcommand, self.out_dir, self.fmt, self.seed = cfg, subcommand, out_dir, fmt, seed
        self.files: list[str] = []
        os.makedirs(out_dir, exist_ok=True)

    def write_json(self, name: str, payload) -> None:
        path = os.path.join(self.out_dir, name)
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(round_sig(payload), fh, indent=2, sort_keys=True)
            fh.write("\n")
        self.files.append(name)

    def write_table(self, stem: str, header: list, rows: list) -> None:
        if self.fmt == "csv":
            buf = io.StringIO()
            w = csv.writer(buf, lineterminator="\n")
            w.writerow(header)
            for r in round_sig(rows):
                w.writerow(r)
            name = stem + ".csv"
            with open(os.path.join(self.out_dir, name), "w", encoding="utf-8") as fh:
                fh.write(buf.getvalue())
            self.files.append(name)
        else:
            self.write_json(stem + ".json", [dict(zip(header, r)) for r in rows])

    def manifest(self, status: str, detail: str = "") -> None:
        payload = {
            "subcommand": self.subcommand,
            "status": status,
            "detail": detail,
            "config_sha256": self.cfg.digest(),
            "config": self.cfg.to_dict(),
            "seed": self.seed,
            "versions": {
                "pekarlab": __version__,
                "numpy": np.__version__,
                "scipy": scipy.__version__,
                "python": platform.python_version(),
            },
            "files": sorted(self.files),
        }
        with open(os.path.join(self.out_dir, "manifest.json"), "w", encoding="utf-8") as fh:
            json.dump(round_sig(payload), fh, indent=2, sort_keys=True)
            fh.write("\n")


# ------------------------------------------------------------------ subcommands


def _problem(cfg: ExperimentConfig, **over):
    from .pekar import PekarProblem
    from .spectral import build_basis

    basis = build_basis(cfg.domain_spec, count=cfg.basis_modes)
    params = dict(
        B=cfg.B,
        M=cfg.M,
        g=cfg.g,
        tol_residual=cfg.tolerances["residual"],
        tol_energy=cfg.tolerances["energy"],
    )
    params.update(over)
    return PekarProblem(basis, **params)


def cmd_basis(run: Run, cfg: ExperimentConfig, args) -> None:
    from .spectral import build_basis, triple_overlap, weyl_count

    basis = build_basis(cfg.domain_spec, count=cfg.basis_modes)
    tensor = triple_overlap(basis, cfg.B, cfg.M)
    payload = basis.to_dict()
    payload.update(tensor.to_dict())
    run.write_json("basis.json", payload)
    rows = []
    for Lam in np.sqrt(basis.eigenvalues[:: max(1, len(basis) // 10)]):
        try:
            wc = weyl_count(basis, float(Lam))
        except PekarLabError:
            continue
        rows.append([float(Lam), wc.counted, wc.predicted, wc.predicted_without_ball_volume])
    run.write_table("weyl", ["Lambda", "counted", "predicted", "predicted_without_ball_volume"], rows)


def _solve(cfg, args):
    from .pekar import scf_solve

    problem = _problem(cfg)
    return problem, scf_solve(problem, seed=args.seed)


def cmd_pekar(run: Run, cfg: ExperimentConfig, args) -> None:
    from .pekar import electron_hessian, uniqueness_probe

    problem, sol = _solve(cfg, args)
    probe = uniqueness_probe(problem, cfg.n_starts if not args.quick else 2, seed=args.seed, threads=args.threads)
    Z, spec = electron_hessian(sol, problem)
    kernel = float(np.linalg.norm(Z @ sol.psi))
    run.write_json(
        "pekar.json",
        {
            "solution": sol.to_dict(problem),
            "uniqueness": probe.to_dict(),
            "Z_spectrum": spec,
            "Z_kernel_residual": kernel,
            "kappa_surrogate": float(spec[1]) if len(spec) > 1 else None,
        },
    )
    if kernel > 1e-8:
        raise PropertyFailure("electron Hessian kernel", f"|Z psi| = {kernel:.3e}")


def cmd_fluct(run: Run, cfg: ExperimentConfig, args) -> None:
    from .fluctuation import fluctuation_operators, global_bound_check, local_expansion_check

    problem, sol = _solve(cfg, args)
    ops = fluctuation_operators(sol, problem)
    rows = []
    for eps in sorted(cfg.eps_grid, reverse=True):
        rep = local_expansion_check(sol, problem, ops.K, ops.L, eps, cfg.samples, seed=args.seed)
        rows.append([eps, rep.max_ratio, rep.skipped])
    glob = global_bound_check(sol, problem, 0.1, samples=50 if args.quick else 500, seed=args.seed)
    run.write_json(
        "fluct.json",
        {
            **ops.to_dict(),
            "global_bound": {"largest_kappa": glob.largest_kappa, "violations_at_0.1": glob.violations},
        },
    )
    run.write_table("expansion", ["eps", "max_ratio", "skipped"], rows)
    if ops.k_spectrum[0] >= 1 or ops.k_spectrum[-1] < -1e-12:
        raise PropertyFailure("K spectrum in [0, 1)")


def cmd_spectrum(run: Run, cfg: ExperimentConfig, args) -> None:
    from .fock import TruncatedModel, ground_state

    problem, sol = _solve(cfg, args)
    model = TruncatedModel(problem, cfg.alphas[0], cfg.P[-1], shift=sol.lam)
    gs = ground_state(model, seed=args.seed)
    run.write_json(
        "spectrum.json",
        {
            "alpha": cfg.alphas[0],
            "P": cfg.P[-1],
            "frame": model.frame,
            "E0": gs.E0,
            "residual": gs.residual,
            "dimension": gs.dimension,
            "mean_occupation": gs.mean_occupation,
        },
    )


def cmd_fit(run: Run, cfg: ExperimentConfig, args) -> None:
    from .fluctuation import assemble_K, quantum_correction
    from .sweep import asymptotic_fit

    problem, sol = _solve(cfg, args)
    K = assemble_K(sol, problem)
    corr = quantum_correction(K)[0]
    alphas = cfg.alphas[:3] if args.quick and len(cfg.alphas) > 3 else cfg.alphas
    fit = asymptotic_fit(
        problem, sol, alphas, P_schedule=cfg.P, tol=cfg.tolerances["fock"], threads=args.threads, seed=args.seed
    )
    rel = fit.relative_error(corr)
    passed = rel <= cfg.tolerances["fit_relative"]
    run.write_table("sweep", ["alpha", "dimension", "P", "E0", "residual", "delta"], fit.rows)
    run.write_json(
        "fit.json",
        {**fit.to_dict(), "eP": sol.eP, "correction": corr, "relative_error": rel, "pass": passed},
    )
    if not passed:
        raise PropertyFailure("fitted c0 matches the quantum correction", f"relative error {rel:.3e}")


def cmd_bounds(run: Run, cfg: ExperimentConfig, args) -> None:
    from . import bounds
    from .spectral import DomainSpec

    rows, fits = [], []
    for K in (0.5, 1.0, 3.0):
        num, ref = bounds.gross_integrals(K), bounds.gross_constants(K)
        for name in ref:
            rows.append([f"bound_{name}", K, num[name], ref[name], abs(num[name] / ref[name] - 1)])
    box = DomainSpec.box(math.pi, math.pi, math.pi)
    lams = cfg.lambda_grid[:3] if args.quick else cfg.lambda_grid
    table = bounds.cutoff_norms(box, lams)
    fits.extend(table.fits)
    for L, a1, a2 in zip(table.Lams, table.A1, table.A2):
        rows.append(["A1", L, a1, float("nan"), float("nan")])
        rows.append(["A2", L, a2, bounds.flat_A2_constant(L), a2 / bounds.flat_A2_constant(L)])
    fit12, _ = bounds.derivative_growth_fit(box, (1, 0, 0), [10, 14, 20, 28, 40])
    fits.append(fit12)
    run.write_table("bounds", ["quantity", "parameter", "value", "reference", "ratio"], rows)
    run.write_json("bounds_summary.json", [f.to_dict() for f in fits])
    worst = max(r[4] for r in rows if r[0].startswith("bound_"))
    if worst > 1e-8:
        raise PropertyFailure("closed-form constants", f"relative error {worst:.3e}")
    failed = [f.quantity for f in fits if not f.passed]
    if failed:
        raise PropertyFailure("scaling exponents", ", ".join(failed))


def cmd_check(run: Run, cfg: ExperimentConfig, args) -> None:
    from .checks import run_checks

    results = run_checks(quick=args.quick, seed=args.seed)
    run.write_json("checks.json", [{"name": n, "pass": ok, "detail": d} for n, ok, d in results])
    failed = [n for n, ok, _ in results if not ok]
    if failed:
        raise PropertyFailure(failed[0], f"{len(failed)} check(s) failed")


COMMANDS = {
    "basis": cmd_basis,
    "pekar": cmd_pekar,
    "fluct": cmd_fluct,
    "spectrum": cmd_spectrum,
    "fit": cmd_fit,
    "bounds": cmd_bounds,
    "check": cmd_check,
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="pekarlab", description=__doc__.splitlines()[0])
    p.add_argument("subcommand", choices=sorted(COMMANDS))
    p.add_argument("--config", help="JSON experiment configuration")
    p.add_argument("--out", help="output directory (overrides the config)")
    p.add_argument("--format", choices=["csv", "json"], help="table format (overrides the config)")
    p.add_argument("--seed", type=int, help="random seed (overrides the config)")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--quick", action="store_true", help="reduced problem sizes")
    p.add_argument("--version", action="version", version=__version__)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config) if args.config else ExperimentConfig()
    except ConfigError as exc:
        print(f"pekarlab: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.seed is None:
        args.seed = cfg.seed
    cfg = replace(cfg, seed=args.seed)
    out = args.out or os.path.join(cfg.output_dir, args.subcommand)
    run = Run(cfg, args.subcommand, out, args.format or cfg.output_format, args.seed)
    try:
        COMMANDS[args.subcommand](run, cfg, args)
    except PropertyFailure as exc:
        run.manifest("check_failed", str(exc))
        print(f"pekarlab: property check failed: {exc}", file=sys.stderr)
        return EXIT_CHECK
    except NUMERIC_ERRORS as exc:
        run.manifest("numerical_failure", str(exc))
        print(f"pekarlab: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ConfigError, PekarLabError, ValueError) as exc:
        run.manifest("config_error", str(exc))
        print(f"pekarlab: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    run.manifest("ok")
    print(f"pekarlab {args.subcommand}: ok ({out})")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
