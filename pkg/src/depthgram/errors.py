class DataError(ValueError):
    """Input data is malformed, truncated, non-finite or inconsistently shaped."""


class InvariantError(RuntimeError):
    """An internal consistency check failed."""
