"""Exceptions raised by fairbarycenter."""


class FairBarycenterError(Exception):
    """Base class for all fairbarycenter errors."""
    exit_code = 1


class InputError(FairBarycenterError, ValueError):
    """Raised when inputs, schemas or arguments are invalid."""
    exit_code = 2


class DimensionMismatchError(InputError):
    """Raised when point clouds or vectors disagree on the output dimension k."""
    pass


class SchemaError(InputError):
    """Raised when a CSV file or model document does not follow the expected schema."""
    pass


class UnknownGroupError(InputError):
    """Raised when a group id was not seen at fit time."""
    pass


class NotInSampleError(InputError):
    """Raised when an in-sample transform is requested for an unseen output vector."""
    pass


class EmptyCellError(InputError):
    """Raised when a (group, label) cell has no records for an equalized fit."""
    pass


class NumericInfeasibilityError(FairBarycenterError):
    """Raised when a numeric problem cannot be solved to the required accuracy."""
    exit_code = 3


class InfeasibleMarginalsError(NumericInfeasibilityError):
    """Raised when transport marginals cannot be matched."""
    pass


class OracleCapExceededError(NumericInfeasibilityError):
    """Raised when the exact barycenter LP would exceed the configured size cap."""
    pass
