"""Error taxonomy shared by every critnls module."""
from typing import List, Optional


class CritNLSError(RuntimeError):
    """Root of all errors raised deliberately by critnls."""


class GridTooSmallError(CritNLSError, ValueError):
    """The radial grid has fewer nodes than a stencil needs."""


class InvalidDilationError(CritNLSError, ValueError):
    """Dilation factor R must be strictly positive."""


class InvalidRadiusError(CritNLSError, ValueError):
    """Cutoff radius R must be strictly positive."""


class NotInNError(CritNLSError):
    """The pair lies outside the admissible cone N > 0."""

    def __init__(self, n_value: float):
        super().__init__(f"N(P,Q) = {n_value!r} is not positive; pair is outside the cone N > 0")
        self.n_value = n_value


class InitOutsideConeError(CritNLSError):
    """The initial pair of a minimization has N <= 0."""


class MaxIterExceededError(CritNLSError):
    """The descent did not meet its stopping rule within max_iter iterations."""

    def __init__(self, message: str, trace: Optional[List[float]] = None):
        super().__init__(message)
        self.trace = trace or []


class StepCollapseError(CritNLSError):
    """Backtracking could not find a step that decreases the objective."""

    def __init__(self, message: str, trace: Optional[List[float]] = None):
        super().__init__(message)
        self.trace = trace or []


class NonFiniteStateError(CritNLSError):
    """A time step produced NaN or Inf samples."""

    def __init__(self, message: str, last_state=None):
        super().__init__(message)
        self.last_state = last_state


class UncertifiedGroundStateError(CritNLSError):
    """Ground-state residuals exceed tolerance; thresholds cannot be derived."""


class CrossTermNotPositiveError(CritNLSError):
    """The seed pair has a non-positive quartic functional, so lambda-scaling cannot lower the energy."""


class ConfigError(CritNLSError):
    """A run configuration could not be parsed or validated."""


class CheckpointError(CritNLSError):
    """A checkpoint or result document could not be read."""
