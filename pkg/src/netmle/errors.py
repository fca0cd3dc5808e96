"""Exception types raised by the library."""


class NetmleError(Exception):
    """Base class for all library errors."""


class DisconnectedGraph(NetmleError):
    """Edge list does not describe a single connected component."""


class VertexOutOfRange(NetmleError):
    """An edge endpoint is outside 0..n-1."""


class GenerationFailed(NetmleError):
    """Random graph generation exhausted its retry budget."""


class NotSymmetric(NetmleError):
    """Matrix is not symmetric within tolerance."""


class NotPSD(NetmleError):
    """Matrix has an eigenvalue below the negative tolerance."""


class NotStochastic(NetmleError):
    """Matrix rows do not sum to one within tolerance."""


class DegenerateDenominator(NetmleError):
    """The fusion normalizer vanished; the combination is ill posed.

    Carries the offending vertex when raised from a process step.
    """

    def __init__(self, message, vertex=None):
        super().__init__(message)
        self.vertex = vertex


class NonMonotoneVariance(NetmleError):
    """A variance increased (or went negative) beyond numerical tolerance."""


class RecursionDiverged(NetmleError):
    """A closed-form recursion invariant exceeded its residual bound."""


class InsufficientData(NetmleError):
    """Not enough usable iterations to estimate a quantity."""


class FitFailed(NetmleError):
    """Nonlinear fit could not bracket a minimum."""


class Undetermined(NetmleError):
    """A run hit its iteration cap without meeting the convergence test."""
