"""Exception types shared across the package.

Each class carries the CLI exit code it maps to.
"""


class IcudoError(Exception):
    exit_code = 1


class InfeasibleError(IcudoError, ValueError):
    """Requested parameters cannot be realized (bad bounds, no design, ...)."""

    exit_code = 3


class CapacityError(IcudoError, OverflowError):
    """A computation would exceed its enumeration or integer budget."""

    exit_code = 3


class NotApplicableError(IcudoError, ValueError):
    exit_code = 3


class DataError(IcudoError, ValueError):
    """Malformed input data, or data that does not fit the design."""

    exit_code = 4


class FormatError(DataError):
    """A serialized file (OA text, CSV) failed to parse."""


class DomainError(IcudoError, ValueError):
    """An argument lies outside the mathematical domain of a formula."""

    exit_code = 3
