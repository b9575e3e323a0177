"""Exception types shared across the package."""


class DistylyError(Exception):
    """Base class for package errors."""


class ValidationError(DistylyError, ValueError):
    """Bad input: out-of-regime parameter, malformed state, missing data."""


class InvalidModelError(ValidationError):
    """A selection map produced a value outside (0, 1) or broke symmetry."""


class ConsistencyError(DistylyError, RuntimeError):
    """An internal invariant failed (monotonicity, convergence, coupling)."""
