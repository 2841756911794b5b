"""Exception hierarchy shared by all ionwva modules."""


class WVAError(Exception):
    """Base class for every error raised by the package."""


class ConfigurationError(WVAError, ValueError):
    """Invalid construction parameters (truncation too small, bad config...)."""


class InvalidStateError(WVAError):
    """A motional state leaks into the top of the truncated Fock space."""


class ContractError(WVAError, ValueError):
    """An operation was called on input violating its precondition."""


class UndefinedWeakValueError(WVAError, ZeroDivisionError):
    """Pre- and postselected states are (numerically) orthogonal."""


class UndefinedShiftError(WVAError, ZeroDivisionError):
    """A closed-form shift or pointer state has a vanishing denominator."""


class ImpossibleOutcomeError(WVAError):
    """A projective outcome with (numerically) zero probability was requested."""


class EmptyPostselectionError(WVAError):
    """No shot survived the herald; carries the tallies for the caller."""

    def __init__(self, message, tallies=None):
        super().__init__(message)
        self.tallies = tallies


class FitError(WVAError):
    """A least-squares extraction could not be carried out."""


class InfeasibleBoundError(WVAError):
    """The kinetic-energy bound admits no distribution on the grid."""


class ConvergenceError(WVAError):
    """The solver hit its iteration cap; ``best`` holds the best iterate."""

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best
