"""Exception types shared across the package."""


class RefFlowError(Exception):
    """Base class for all package errors."""


class InputError(RefFlowError, ValueError):
    """Invalid argument: bad shape, empty set, out-of-range parameter."""


class SingularityError(RefFlowError, ArithmeticError):
    """Evaluation too close to t = 1, where the bridge coefficients blow up."""


class SamplingError(RefFlowError):
    """A velocity-field evaluation failed during integration."""

    def __init__(self, step: int, t: float, cause: BaseException):
        self.step = step
        self.t = t
        super().__init__(f"field evaluation failed at step {step} (t={t:.6g}): {cause}")


class TrainingError(RefFlowError):
    """Training diverged (non-finite loss)."""

    def __init__(self, step: int, loss: float):
        self.step = step
        self.loss = loss
        super().__init__(f"loss became non-finite at step {step}: {loss}")


class ConfigError(RefFlowError, ValueError):
    """Experiment configuration failed validation; `field` names the offender."""

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}")
