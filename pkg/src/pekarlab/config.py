"""Experiment configuration: JSON schema, validation with line numbers, hashing."""

from __future__ import annotations

import hashlib
import json
import math
import re
from dataclasses import asdict, dataclass, field, fields

from .errors import ConfigError
from .spectral import DomainSpec

_KINDS = {"interval": 1, "box2d": 2, "box3d": 3}


@dataclass
class ExperimentConfig:
    domain: dict = field(default_factory=lambda: {"kind": "interval", "lengths": [math.pi]})
    basis_modes: int = 40
    B: int = 10
    M: int = 2
    P: list = field(default_factory=lambda: [16, 32, 48, 64])
    g: float = 1.0
    alphas: list = field(default_factory=lambda: [4.0, 8.0, 16.0, 32.0])
    lambda_grid: list = field(default_factory=lambda: [5.0, 7.0, 10.0, 14.0, 20.0])
    eps_grid: list = field(default_factory=lambda: [1e-2, 3e-3, 1e-3])
    seed: int = 0
    n_starts: int = 8
    samples: int = 50
    tolerances: dict = field(
        default_factory=lambda: {"residual": 1e-12, "energy": 1e-13, "fock": 1e-9, "fit_relative": 0.05}
    )
    output_dir: str = "out"
    output_format: str = "json"

    @property
    def domain_spec(self) -> DomainSpec:
        return DomainSpec.from_dict(self.domain)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()


_TYPES = {
    "domain": dict,
    "basis_modes": int,
    "B": int,
    "M": int,
    "P": list,
    "g": (int, float),
    "alphas": list,
    "lambda_grid": list,
    "eps_grid": list,
    "seed": int,
    "n_starts": int,
    "samples": int,
    "tolerances": dict,
    "output_dir": str,
    "output_format": str,
}


def _line_of(text: str, key: str) -> int | None:
    m = re.search(r'"%s"\s*:' % re.escape(key), text)
    return text.count("\n", 0, m.start()) + 1 if m else None


def parse_config(text: str) -> ExperimentConfig:
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(exc.msg, exc.lineno) from exc
    if not isinstance(raw, dict):
        raise ConfigError("top level must be a JSON object", 1)
    known = {f.name for f in fields(ExperimentConfig)}
    for key, value in raw.items():
        if key not in known:
            raise ConfigError(f"unknown key {key!r}", _line_of(text, key))
        expected = _TYPES[key]
        if isinstance(value, bool) or not isinstance(value, expected):
            raise ConfigError(f"{key!r} has the wrong type", _line_of(text, key))
    cfg = ExperimentConfig(**raw)
    _validate(cfg, text)
    return cfg


def _strictly_increasing(vals) -> bool:
    return all(a < b for a, b in zip(vals[:-1], vals[1:]))


def _validate(cfg: ExperimentConfig, text: str = "") -> None:
    def fail(key, msg):
        raise ConfigError(msg, _line_of(text, key))

    kind = cfg.domain.get("kind")
    if kind not in _KINDS:
        fail("kind", f"domain kind must be one of {sorted(_KINDS)}")
    lengths = cfg.domain.get("lengths", [math.pi] * _KINDS[kind])
    if not isinstance(lengths, list) or len(lengths) != _KINDS[kind]:
        fail("lengths", f"{kind} needs {_KINDS[kind]} side lengths")
    if any(isinstance(v, bool) or not isinstance(v, (int, float)) or v <= 0 for v in lengths):
        fail("lengths", "side lengths must be positive numbers")
    cfg.domain = {"kind": kind, "lengths": [float(v) for v in lengths]}
    for key in ("basis_modes", "B", "M"):
        if getattr(cfg, key) < 1:
            fail(key, f"{key} must be at least 1")
    if cfg.B > cfg.basis_modes or cfg.M > cfg.basis_modes:
        fail("B" if cfg.B > cfg.basis_modes else "M", "B and M must not exceed basis_modes")
    if cfg.g < 0:
        fail("g", "g must be non-negative")
    for key in ("alphas", "lambda_grid", "eps_grid"):
        vals = getattr(cfg, key)
        if not vals or any(isinstance(v, bool) or not isinstance(v, (int, float)) or v <= 0 for v in vals):
            fail(key, f"{key} must be a non-empty list of positive numbers")
    P = cfg.P
    if not P or any(isinstance(p, bool) or not isinstance(p, int) or p < 0 for p in P) or not _strictly_increasing(P):
        fail("P", "P must be a strictly increasing list of non-negative integers")
    if not _strictly_increasing(cfg.alphas):
        fail("alphas", "alphas must be strictly increasing")
    if cfg.output_format not in ("json", "csv"):
        fail("output_format", "output_format must be 'json' or 'csv'")
    if cfg.n_starts < 2:
        fail("n_starts", "n_starts must be at least 2")
    for k, v in cfg.tolerances.items():
        if isinstance(v, bool) or not isinstance(v, (int, float)) or v <= 0:
            fail(k, f"tolerance {k!r} must be a positive number")
    tol = ExperimentConfig().tolerances
    tol.update(cfg.tolerances)
    cfg.tolerances = tol


def load_config(path) -> ExperimentConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    return parse_config(text)
