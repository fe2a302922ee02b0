"""Exception hierarchy shared by all pekarlab modules."""


class PekarLabError(Exception):
    """Base class for every error raised by pekarlab."""


class EmptyBasisError(PekarLabError):
    pass


class BasisBoundsError(PekarLabError, IndexError):
    pass


class InsufficientBasisError(PekarLabError):
    """The spectral basis does not reach the energies a computation needs."""


class AccuracyError(PekarLabError):
    """A truncated series failed its tail estimate.

    The partial sum and the tail estimate are kept so that callers can decide
    whether the value is still usable.
    """

    def __init__(self, message, partial_sum=None, tail=None):
        super().__init__(message)
        self.partial_sum = partial_sum
        self.tail = tail


class NonConvergenceError(PekarLabError):
    def __init__(self, message, trajectory=None):
        super().__init__(message)
        self.trajectory = trajectory if trajectory is not None else []


class DegeneracyError(PekarLabError):
    """Electron ground state is (numerically) degenerate."""


class OutOfRegimeError(PekarLabError):
    """An eigenvalue of K reached 1, so the Hessian 1 - K is not positive."""


class MemoryBudgetError(PekarLabError, MemoryError):
    pass


class GridConvergenceError(PekarLabError):
    pass


class QuadratureError(PekarLabError):
    pass


class PreconditionError(PekarLabError, ValueError):
    pass


class ConfigError(PekarLabError, ValueError):
    """Invalid experiment configuration; carries a 1-based line number when known."""

    def __init__(self, message, line=None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line
