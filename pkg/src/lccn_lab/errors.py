"""Exception types shared across the package.

ParameterError maps to CLI exit code 2 (bad usage or config), TrainingError
and InvariantError map to exit code 1 (runtime failure).
"""


class ParameterError(ValueError):
    """An argument or configuration value violates a documented precondition."""


class TrainingError(RuntimeError):
    """Optimization failed at runtime (non-finite loss or gradient, divergence)."""


class InvariantError(RuntimeError):
    """An internal bookkeeping invariant was violated; state is untrustworthy."""
