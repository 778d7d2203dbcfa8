"""Exception taxonomy shared across the package.

The CLI maps these onto exit codes: ConfigError -> 2, ConvergenceFailure -> 3,
NumericalError (and subclasses) -> 4.
"""


class MltsError(Exception):
    """Base class for all package errors."""


class ConfigError(MltsError):
    """Invalid or inconsistent experiment configuration."""


class ContractViolation(MltsError):
    """A caller broke an API precondition (shape, ordering, missing input)."""


class UnsupportedModel(ConfigError):
    """Operation requires a model structure the given model does not have."""


class NumericalError(MltsError):
    """Non-finite values or a numerically singular computation."""


class DegenerateMap(NumericalError):
    """Monotone integrand vanished on every quadrature node; log-derivative undefined."""


class WeightCollapse(NumericalError):
    """All particle log-weights are -inf; the ensemble carries no information."""


class ConvergenceFailure(MltsError):
    """Optimizer hit its iteration cap before reaching the gradient tolerance."""

    def __init__(self, message, grad_norm=None, iterations=None, context=None):
        super().__init__(message)
        self.grad_norm = grad_norm
        self.iterations = iterations
        self.context = context


class ParseError(MltsError):
    """Malformed CSV input."""

    def __init__(self, message, row=None):
        super().__init__(message)
        self.row = row
