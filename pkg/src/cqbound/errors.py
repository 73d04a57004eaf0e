"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid scenario configuration."""


class NumericalError(ArithmeticError):
    """Base class for failures the CLI reports with exit code 3."""


class SingularMatrixError(NumericalError):
    """A matrix that must be inverted is singular or too badly conditioned."""


class FilterDivergence(NumericalError):
    """Every particle assigned (numerically) zero likelihood to the observations."""


class FusionError(NumericalError):
    """Fused information matrix is not positive definite."""


class DisconnectedGraphError(ValueError):
    """The processing-node communication graph is not connected."""
