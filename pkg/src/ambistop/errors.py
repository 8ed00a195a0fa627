"""Exception hierarchy.

Every error carries an ``exit_code`` used by the command line front end:
2 for configuration problems, 3 for numerical failures.
"""


class AmbistopError(Exception):
    exit_code = 3


class ParseError(AmbistopError):
    exit_code = 2


class ValidationError(AmbistopError):
    exit_code = 2


class DomainError(AmbistopError, ValueError):
    pass


class UnboundedValue(AmbistopError):
    """The value is infinite: no member of the majorant family dominates the reward."""


class BisectionFailure(AmbistopError):
    pass


class BracketError(AmbistopError):
    pass


class StructureError(AmbistopError):
    pass


class TruncationError(AmbistopError):
    pass


class StiffnessError(AmbistopError):
    pass


class SingularWronskian(AmbistopError):
    pass


class NonNaturalBoundary(AmbistopError):
    exit_code = 2


class HorizonWarning(UserWarning):
    """Discounted value left at the truncation horizon is not negligible."""
