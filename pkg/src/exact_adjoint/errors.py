"""Exception types raised by the library."""


class ExactAdjointError(Exception):
    """Base class for all library errors."""


class ConfigError(ExactAdjointError):
    """Bad input: unknown names, malformed files, invalid parameters."""


class NumericalError(ExactAdjointError):
    """A computation failed numerically (solver divergence, domain violation)."""


class ZeroWeightError(ConfigError):
    """A quadrature weight vanishes, so the adjoint coefficients are undefined."""

    def __init__(self, index: int, value: float, partition: int | None = None):
        self.index = index
        self.value = value
        self.partition = partition
        where = f"b[{index}]" if partition is None else f"b^({partition})[{index}]"
        super().__init__(f"weight {where} = {value!r} is (numerically) zero")


class StageMismatchError(ConfigError):
    pass


class TableauMismatchError(ConfigError):
    pass


class DimensionMismatchError(ConfigError):
    pass


class LengthMismatchError(ConfigError):
    pass


class TableauParseError(ConfigError):
    pass


class UnknownMethodError(ConfigError):
    def __init__(self, name: str, known=()):
        self.name = name
        msg = f"unknown method {name!r}"
        if known:
            msg += f" (known: {', '.join(sorted(known))})"
        super().__init__(msg)


class UnknownProblemError(ConfigError):
    def __init__(self, name: str, known=()):
        self.name = name
        msg = f"unknown problem {name!r}"
        if known:
            msg += f" (known: {', '.join(sorted(known))})"
        super().__init__(msg)


class InvalidParamError(ConfigError):
    def __init__(self, param: str, reason: str = "invalid value"):
        self.param = param
        super().__init__(f"parameter {param!r}: {reason}")


class SeparabilityViolationError(ConfigError):
    pass


class NonConvergenceError(NumericalError):
    def __init__(self, step: int, iterations: int, residual: float, phase: str = "forward"):
        self.step = step
        self.iterations = iterations
        self.residual = residual
        self.phase = phase
        super().__init__(
            f"{phase} stage solver did not converge at step {step} "
            f"after {iterations} iterations (residual {residual:.3e})"
        )


class DomainError(NumericalError):
    """State left the domain on which the vector field is defined."""
