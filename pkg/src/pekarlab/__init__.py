"""Numerical laboratory for the strong-coupling expansion of a confined polaron."""

__version__ = "0.1.0"

from .errors import (  # noqa: F401
    AccuracyError,
    ConfigError,
    DegeneracyError,
    EmptyBasisError,
    InsufficientBasisError,
    MemoryBudgetError,
    NonConvergenceError,
    OutOfRegimeError,
    PekarLabError,
    PreconditionError,
)
from .spectral import DomainSpec, SpectralBasis, build_basis, triple_overlap  # noqa: F401
from .pekar import PekarProblem, PekarSolution, scf_solve  # noqa: F401
