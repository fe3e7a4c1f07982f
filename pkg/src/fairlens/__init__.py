"""Black-box fairness auditing over coded event histories.

Pipeline: stratify patients into a condition-set lattice, score each group's
prediction/truth distribution gap, rank groups, inspect per-code systematic
errors, and explain them with local surrogate rules.
"""

from .errors import AuditError, BlackBoxError, DataError, FairLensError

__version__ = "0.1.0"

__all__ = [
    "AuditError",
    "BlackBoxError",
    "DataError",
    "FairLensError",
    "__version__",
]
