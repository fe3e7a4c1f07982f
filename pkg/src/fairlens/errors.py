"""Exception taxonomy shared across the package.

The CLI maps these onto exit codes: usage errors exit 1, data errors exit 2,
black-box errors exit 3.
"""


class FairLensError(Exception):
    """Base class for all errors raised by this package."""


class DataError(FairLensError):
    """Invalid input data: files, schemas, vocabularies, configs."""


class BlackBoxError(FairLensError):
    """The black-box adapter failed (transport exhausted, malformed reply)."""


class AuditError(FairLensError):
    """A pipeline stage could not produce a result (e.g. every group filtered)."""
