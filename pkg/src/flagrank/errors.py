"""Exception taxonomy shared across the package.

The CLI maps these onto exit codes: usage problems exit 1, data errors
(format/range/duplicate/conflict/precondition/state) exit 2, numeric
failures exit 3.
"""


class FlagrankError(Exception):
    """Base class for all errors raised by this package."""


class PreconditionError(FlagrankError, ValueError):
    """A documented precondition of an operation was violated."""


class ShapeError(PreconditionError):
    """Matrix or parameter shapes are inconsistent."""


class NumericError(FlagrankError):
    """A computation produced or received non-finite values."""


class StateError(FlagrankError):
    """An operation was invoked in a state that does not support it."""


class FormatError(FlagrankError):
    """An input file or stream is malformed; message names the line."""


class AttrRangeError(FormatError):
    """An attribute index lies outside the declared dictionary."""


class DuplicateError(FlagrankError):
    """A process id appeared more than once where ids must be unique."""


class ConflictError(FlagrankError):
    """An id was relabeled or collided with an existing pool entry."""


class MissingLabelError(FlagrankError):
    """A scripted oracle has no label for a queried id."""


class UndefinedMetricError(FlagrankError):
    """A metric is undefined for the given inputs (e.g. nDCG with no attacks)."""
