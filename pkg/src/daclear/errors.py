"""Exception hierarchy for the clearing engine."""


class ModelError(Exception):
    """Base class for all domain errors."""


class EmptyCurve(ModelError):
    """A net curve was built from an empty node list."""


class NonMonotoneCurve(ModelError):
    """Curve nodes are not monotone (price up, quantity down)."""


class ValidationError(ModelError):
    """An instance-level invariant is violated."""


class SchemaError(ModelError):
    """A document does not match the expected shape; carries the field path."""

    def __init__(self, path, message):
        super().__init__(f"{path}: {message}")
        self.path = path


class UnknownId(ModelError):
    """A solution references a bid or segment id not in the instance."""


class ClearingViolated(ModelError):
    """The clearing balance (executed net demand vs. net import) does not hold."""


class LinkViolation(ModelError):
    """A bid selection executes a linked block without its parent."""


class FlexMultiplicity(ModelError):
    """A flex bid is executed in more than one hour."""


class InfeasibleSelection(ModelError):
    """The fixed combinatorial volume cannot be cleared within curve and flow bounds."""


class PriceInfeasible(ModelError):
    """No loss-free linear price supports the given execution."""


class EmptyLossSets(ModelError):
    """A bid cut was requested for empty loss sets."""


class TooLarge(ModelError):
    """The instance exceeds the enumeration cap of the brute-force oracle."""


class IterationLimit(ModelError):
    """The cutting loop exceeded its iteration budget."""

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best
