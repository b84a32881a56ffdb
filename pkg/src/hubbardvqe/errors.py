"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid model, circuit or run configuration."""


class NumericalConsistencyError(ArithmeticError):
    """A numerical self-check failed (imaginary energy, gradient mismatch, ...)."""


class CapabilityError(RuntimeError):
    """The request exceeds a documented size limit of a backend."""
