from typing import Optional, Sequence


class RMACError(Exception):
    """Base class for every error raised by the solver package"""


class GridError(RMACError):
    """Invalid grid construction (counts, lengths, spacings, ratios)"""


class LatticeError(RMACError):
    """An operator received a field living on the wrong lattice"""


class ForcingError(RMACError):
    """Forcing evaluation failed or returned unusable values"""


class ConfigurationError(RMACError):
    """Run configuration is inconsistent"""


class SolverError(RMACError):
    """Linear or nonlinear solve failed"""

    def __init__(
        self,
        message: str,
        residual_history: Optional[Sequence[float]] = None,
        step: Optional[int] = None,
    ):
        super().__init__(message)
        self.message = message
        self.residual_history = list(residual_history or [])
        self.step = step

    def at_step(self, step: int) -> "SolverError":
        """Copy of this error annotated with the time step index"""
        return type(self)(self.message, self.residual_history, step)

    def __str__(self) -> str:
        text = self.message
        if self.step is not None:
            text = f"step {self.step}: {text}"
        if self.residual_history:
            text += f" (last residual {self.residual_history[-1]:.3e})"
        return text


class NonconvergenceError(SolverError):
    """Picard iteration hit max_iters without meeting picard_tol"""
