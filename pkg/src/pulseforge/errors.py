"""Exception hierarchy.

The CLI maps these onto exit codes: configuration problems exit 2,
numerical failures exit 3, strict-mode target misses exit 4.
"""

from __future__ import annotations


class PulseforgeError(Exception):
    """Base class for package errors."""


class ConfigError(PulseforgeError):
    """Bad configuration file, preset name, or parameter combination."""


class PulseIOError(PulseforgeError):
    """Malformed, non-finite, or wrong-schema pulse file."""


class NumericalError(PulseforgeError):
    """A numerical invariant was violated during simulation or training."""


class UnitarityError(NumericalError):
    """A propagator drifted away from unitarity beyond tolerance."""


class DegenerateSubspaceError(NumericalError):
    """Eigenvector-to-subspace assignment was ambiguous.

    Carries the indices and weights of the states at the crossing so the
    caller can see which assignment was unresolvable.
    """

    def __init__(self, message: str, weights=None):
        super().__init__(message)
        self.weights = weights


class QExplosionError(NumericalError):
    """Critic estimates exploded during training.

    Raised when |Q| exceeds the configured guard. Usual causes: reward scale
    far from O(1), learning rate too high, or a broken done/bootstrap flag.
    """


class StrictModeMiss(PulseforgeError):
    """A --strict run finished but missed its required target."""
