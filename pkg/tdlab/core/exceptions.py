# tdlab/core/exceptions.py
"""
Exception hierarchy.

Configuration problems and instance problems are both ``ValueError``
subclasses so callers that only care about bad input can catch the builtin.
The CLI maps each family to its own exit code.
"""

from typing import Optional


class TdLabError(Exception):
    """Base class for all tdlab errors."""


class ConfigError(TdLabError, ValueError):
    """An experiment configuration could not be read or validated."""


class InstanceError(TdLabError, ValueError):
    """An MDP instance, policy or feature map is unusable."""


class StationaryDistributionError(InstanceError):
    """The chain has no unique stationary distribution."""


class FeatureDegeneracyError(InstanceError):
    """Features are linearly dependent, or Sigma is singular under mu."""


class CoverageError(InstanceError):
    """The target policy puts mass where the behavior policy puts none."""


class NonIdentifiableError(InstanceError):
    """The off-policy fixed point is not unique."""


class SingularSystemError(InstanceError):
    """A linear system that should be nonsingular is not."""


class RateFitError(TdLabError, ValueError):
    """Too few usable checkpoints to fit a convergence rate."""


class ContractionViolationError(TdLabError, AssertionError):
    """The Psi norm exceeded its bound although the step conditions hold."""


class DivergenceError(TdLabError, ArithmeticError):
    """An iterate became non-finite or exceeded the divergence threshold."""

    def __init__(self, step: int, norm: Optional[float] = None):
        self.step = step
        self.norm = norm
        super().__init__(f"Iterate diverged at step {step} (norm={norm})")
