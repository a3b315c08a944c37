"""Exception hierarchy shared by all modules."""


class AliasHmmError(Exception):
    """Base class for errors raised by aliashmm."""


class ValidationError(AliasHmmError, ValueError):
    """Input violates a structural requirement (stochasticity, dimensions, ...)."""


class ErgodicityError(ValidationError):
    """Transition matrix is reducible or periodic."""


class NotAliasedError(ValidationError):
    """An operation that needs an aliased pair got a model without one."""


class NonMinimalError(ValidationError):
    """Feasible-region analysis requires a minimal model."""


class SequenceTooShortError(ValidationError):
    pass


class DegenerateMomentError(AliasHmmError, ArithmeticError):
    """A moment matrix needed as a divisor vanished."""


class NumericalError(AliasHmmError, ArithmeticError):
    pass
