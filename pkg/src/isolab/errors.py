"""Exception types shared across isolab."""


class IsolabError(Exception):
    """Base class for all library errors."""


class ShapeError(IsolabError, ValueError):
    """Input arrays have incompatible or unsupported shapes."""


class SingularMatrixError(IsolabError, ValueError):
    """A matrix that must be invertible is (numerically) singular."""


class EigenFailure(IsolabError, RuntimeError):
    """The eigensolver failed or produced pairs with an unacceptable residual."""

    def __init__(self, message, residual=float("nan")):
        super().__init__(message)
        self.residual = residual


class StepUnderflow(IsolabError, RuntimeError):
    """Adaptive stepping collapsed; ``s`` is the path parameter where it happened.

    ``samples`` holds whatever was recorded before the collapse.
    """

    def __init__(self, message, s, samples=None):
        super().__init__(message)
        self.s = s
        self.samples = samples


class PoleProximityError(IsolabError, ValueError):
    """A point or path comes too close to a pole."""


class DiagonalApproachError(IsolabError, ValueError):
    """A configuration-space path comes too close to a diagonal a_i = a_j."""


class BlowUpError(IsolabError, RuntimeError):
    """Residue matrices blew up along a deformation (theta-divisor approach)."""


class DivergentCycleError(IsolabError, ValueError):
    """An endpoint exponent makes a segment integral divergent."""


class TriangularizationError(IsolabError, RuntimeError):
    """No constant gauge transformation achieving the requested block form was found."""
