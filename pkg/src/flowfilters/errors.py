"""Exception types shared across the library."""


class FlowFilterError(Exception):
    """Base class for all library-specific failures."""


class NotPositiveDefinite(FlowFilterError):
    """Matrix could not be factorized even after the jitter ladder."""


class EmptyParticleSet(FlowFilterError):
    """An operation received a particle set with no particles."""


class AllWeightsDegenerate(FlowFilterError):
    """Every log-weight is -inf or NaN; normalization is undefined."""


class InvalidSchedule(FlowFilterError, ValueError):
    """Pseudo-time schedule parameters are out of range."""


class SingularFlowStep(FlowFilterError):
    """A flow step matrix (I + eps*A) is numerically singular."""


class MissingCapability(FlowFilterError):
    """A filter requires a model capability the scenario does not provide."""


class CardinalityMismatch(FlowFilterError, ValueError):
    """Compared point sets have different cardinalities."""


class ShapeMismatch(FlowFilterError, ValueError):
    """Array arguments have incompatible shapes."""


class RateOverflow(FlowFilterError, OverflowError):
    """A Poisson rate exponent is large enough to overflow."""


class DomainError(FlowFilterError, ValueError):
    """Argument outside the mathematical domain of the function."""


class ConfigError(FlowFilterError, ValueError):
    """Campaign configuration failed validation."""
