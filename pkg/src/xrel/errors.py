"""Exception types shared across the package."""


class XrelError(Exception):
    """Base class for package errors."""


class ShapeMismatchError(XrelError, ValueError):
    """Operands have incompatible shapes."""


class SingularMatrixError(XrelError, ValueError):
    """A matrix that must be inverted is singular within tolerance."""


class InvalidMError(XrelError, ValueError):
    """The reference operator M violates M L0 M <= M."""


class ContrastInfeasibleError(XrelError, ValueError):
    """No amplitude achieves the requested contrast."""


class ConvergenceError(XrelError, RuntimeError):
    """An iteration did not reach its tolerance.

    Attributes
    ----------
    best : ndarray or None
        Iterate with the smallest residual seen.
    residual : float
        Residual of ``best``.
    history : list of float
        Residual history of the failing stage.
    """

    def __init__(self, message, best=None, residual=float("nan"), history=None):
        super().__init__(message)
        self.best = best
        self.residual = residual
        self.history = list(history or [])


class DomainError(XrelError, ValueError):
    """A domain or boundary violates its preconditions."""


class PotentialClosureError(XrelError, RuntimeError):
    """Line integration of a field is path dependent beyond tolerance."""


class ConfigError(XrelError, ValueError):
    """An experiment configuration failed validation."""

    def __init__(self, message, line=None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line
