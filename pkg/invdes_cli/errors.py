from typing import Union


class InvDesError(Exception):
    """Base class for every error raised by the toolkit."""


class ShapeError(InvDesError):
    """Operand shapes do not conform for a primitive operation."""


class TapeError(InvDesError):
    """Misuse of a tape: mixed tapes, reuse after backward, non-scalar root."""


class NonFiniteError(InvDesError):
    """A NaN or Inf showed up in a forward value or a gradient."""

    def __init__(self, kind: str, message: str = None, step: Union[int, None] = None):
        self.kind = kind
        self.step = step
        detail = message or "non-finite value"
        where = f" at step {step}" if step is not None else ""
        super().__init__(f"{detail} in '{kind}'{where}")


class NonDeterministicStepError(InvDesError):
    """Recomputing a rollout segment did not reproduce the stored checkpoint."""


class RolloutDivergenceError(InvDesError):
    """A simulated particle left the admissible scene region."""

    def __init__(self, step: int, message: str = None):
        self.step = step
        super().__init__(message or f"rollout diverged at step {step}")


class DatasetError(InvDesError):
    pass


class TrajectoryFormatError(InvDesError):
    pass


class WeightsFormatError(InvDesError):
    pass


class ConfigError(InvDesError):
    """Invalid configuration or incompatible command-line arguments."""


class OptimizationAborted(InvDesError):
    """An optimizer hit a numeric failure; the partial run record is kept."""

    def __init__(self, message: str, record=None):
        self.record = record
        super().__init__(message)
