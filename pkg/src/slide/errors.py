"""Exception hierarchy shared across the toolkit.

The CLI maps these onto process exit codes: configuration problems exit
with 2, data/format problems with 3, and numeric failures with 4.
"""


class SlideError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(SlideError):
    """Invalid or inconsistent configuration (bad key, bad value, mismatched widths)."""


class ShapeError(ConfigError):
    """Array width/shape does not match what a model or config declares."""


class FormatError(SlideError):
    """Corrupt or unreadable binary file. Carries the byte offset of the failure."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class WindowError(SlideError):
    """A trajectory or sequence is unusable for the requested window geometry."""


class KinematicsError(SlideError):
    """A kinematic evaluation left its admissible domain."""


class IntegrationDivergedError(SlideError):
    """Non-finite state encountered during time integration."""

    def __init__(self, step, detail=""):
        msg = f"integration diverged at step {step}"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)
        self.step = step


class ConstraintDegeneracyError(SlideError):
    """The constrained acceleration system became singular."""


class LinearizationError(SlideError):
    """Force evaluation failed while building tangent matrices."""


class EigenError(SlideError):
    """Eigenvalue extraction failed (typically a singular projected mass matrix)."""


class NoDampedModeError(SlideError):
    """Every eigenvalue of a sample was classified as a rigid-body mode."""


class TrainingDivergedError(SlideError):
    """Loss became non-finite during training."""

    def __init__(self, epoch, iteration):
        super().__init__(f"training diverged at epoch {epoch}, iteration {iteration}")
        self.epoch = epoch
        self.iteration = iteration
