"""Exception types shared across the package."""


class CtrlmapError(Exception):
    """Base class for all package-specific errors."""


class InvalidInputError(CtrlmapError, ValueError):
    """An argument violates a documented precondition (shape, symmetry, range)."""


class DefinitenessError(CtrlmapError):
    """A matrix that must be definite (or negative definite) is not.

    Attributes:
        min_eigenvalue: the offending extremal eigenvalue, when known.
        block: name of the offending block for structured matrices.
    """

    def __init__(self, message: str, min_eigenvalue: float | None = None,
                 block: str | None = None):
        super().__init__(message)
        self.min_eigenvalue = min_eigenvalue
        self.block = block


class ClosedLoopUnstableError(CtrlmapError):
    """A controller fails the closed-loop stability requirement."""


class DomainError(CtrlmapError, ValueError):
    """A scalar task parameter lies outside the closed-form validity domain.

    Attributes:
        coordinate: index of the first offending coordinate for vector tasks.
    """

    def __init__(self, message: str, coordinate: int | None = None):
        super().__init__(message)
        self.coordinate = coordinate


class GenerationError(CtrlmapError):
    """Random system generation could not satisfy its constraints."""


class InfeasibleTaskError(CtrlmapError):
    """No robustness level below the search cap admits a certified solution."""


class ExperimentDegenerateError(CtrlmapError):
    """An experiment cell has too few usable samples to form an estimate."""


class TrainingDivergedError(CtrlmapError):
    """Training produced a non-finite loss.

    Attributes:
        epoch: epoch index at which the divergence was detected.
    """

    def __init__(self, message: str, epoch: int | None = None):
        super().__init__(message)
        self.epoch = epoch
