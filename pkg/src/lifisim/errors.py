"""Exception hierarchy shared across the simulator."""


class LifiSimError(Exception):
    """Base class for all simulator errors."""


class ConfigurationError(LifiSimError, ValueError):
    """Invalid parameters, lengths or rates."""


class FramingError(LifiSimError, ValueError):
    """Bit counts or frame layouts that do not match the loading plan."""


class EqualizationError(LifiSimError, ValueError):
    """One-tap equalization on a loaded subcarrier with a vanishing response."""

    def __init__(self, subcarrier: int, message: str | None = None):
        self.subcarrier = subcarrier
        super().__init__(message or f"channel response too small on loaded subcarrier {subcarrier}")


class TrainingDivergedError(LifiSimError, ArithmeticError):
    """RLS recursion produced a non-finite weight."""

    def __init__(self, iteration: int):
        self.iteration = iteration
        super().__init__(f"RLS training diverged at iteration {iteration}")


class EstimationError(LifiSimError, ValueError):
    """Channel/SNR estimation could not be performed."""
