"""Exceptions raised by the library and their command-line exit codes."""


class NTZoneError(Exception):
    """Base class of all errors raised by ntzone."""

    exit_code = 1


class ConfigError(NTZoneError):
    """A configuration file could not be parsed or misses a key."""

    exit_code = 2


class BadInput(NTZoneError):
    """An input violates a documented invariant."""

    exit_code = 3


class DimensionError(NTZoneError):
    """The operation is only defined for another number of risky assets."""

    exit_code = 3


class DegenerateRegion(NTZoneError):
    """The no-trade region collapses, e.g. a Merton weight is zero."""

    exit_code = 3


class InfiniteValue(NTZoneError):
    """A consumption rate is not positive, so the value is infinite."""

    exit_code = 3


class NoConvergence(NTZoneError):
    """An iterative solver did not converge."""

    exit_code = 4


class ResidualTooLarge(NTZoneError):
    """A computed solution fails its residual check."""

    exit_code = 4


class Insolvent(NTZoneError):
    """Wealth is too small to pay the fixed cost."""

    exit_code = 4
