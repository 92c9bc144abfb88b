"""Exception taxonomy shared across the package.

The CLI maps these onto distinct exit codes, so raise the most specific
class available.
"""


class SpecError(ValueError):
    """A configuration, library, optimizer, or method spec is invalid."""


class DataError(ValueError):
    """Measured data violates a shape, finiteness, or grid contract."""


class FitError(RuntimeError):
    """A fit could not be completed (infeasible constraints, solver failure)."""
