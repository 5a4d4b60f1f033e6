"""Exception types shared across the package.

The CLI maps these onto exit codes: configuration problems (including any
``ValueError`` raised by argument validation) exit with 1, numerical failures
with 2.
"""


class ConfigError(ValueError):
    """A configuration document or CLI argument is invalid."""


class NumericalError(RuntimeError):
    """A numerical procedure failed (non-convergence, degeneracy, ...)."""


class InstabilityError(NumericalError):
    """An operation requiring a stable matrix received an unstable one."""
