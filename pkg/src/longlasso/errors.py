"""Exception types shared across the package.

The CLI maps these onto exit codes: usage problems exit 1, data problems
exit 2, numerical failures exit 3.
"""


class DataError(ValueError):
    """Malformed or inconsistent input data (bad CSV, ragged series, ...)."""


class NumericalError(RuntimeError):
    """A numerical procedure failed (factorization, step search, ...)."""
