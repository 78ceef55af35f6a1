"""
Exception types for replicacs.

Physics-level failures of the fixed-point solvers are reported through the
``status`` field of the solution objects; the exceptions below are raised for
caller errors and are caught by the solvers where they mark an invalid ansatz.
"""


class ReplicaError(Exception):
    """Base class for all errors raised by replicacs."""


class DomainError(ReplicaError, ValueError):
    """Argument outside the real-analytic domain of a transform."""


class ConvergenceError(ReplicaError):
    """An inner numerical solve did not converge within its budget."""


class NoMinimizerError(ReplicaError):
    """A scalar objective is unbounded below (penalty not lower-bounded)."""


class NonFiniteError(ReplicaError):
    """An integrand returned inf or nan at a quadrature node."""


class StateError(ReplicaError):
    """Operation requested on an object in the wrong state."""


class SizeError(ReplicaError, ValueError):
    """Problem too large for an exhaustive method."""


class ConfigError(ReplicaError, ValueError):
    """Invalid or unparsable configuration."""


class InvalidNegativeDiscriminant(ReplicaError):
    """Expression under an effective-noise square root is negative."""

    def __init__(self, name: str, value: float):
        super().__init__(f"negative discriminant for {name}: {value:.3e}")
        self.name = name
        self.value = value


class MuRootNotBracketed(ReplicaError):
    """No sign change of the Parisi-parameter equation on the search grid."""
