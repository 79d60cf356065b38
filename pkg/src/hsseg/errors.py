"""Exception types shared across the toolkit.

Two families, matching the CLI exit-code contract: bad inputs
(files, parameters, mismatched dimensions) and numerically
degenerate situations (undefined indices, singular fits).
"""


class InputError(ValueError):
    """Malformed or inconsistent input: files, parameters, dimensions."""


class DegeneracyError(RuntimeError):
    """A quantity is mathematically undefined for the given data."""
