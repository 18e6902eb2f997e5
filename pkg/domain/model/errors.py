"""
Error hierarchy for the UCapsNet colourisation system
"""


class ColorizationError(Exception):
    """Base class for every error raised by the colourisation services"""


class InvalidShape(ColorizationError):
    """A tensor or image does not have the shape an operation requires"""


class ShapeMismatch(ColorizationError):
    """Two inputs that must share a shape do not"""


class ConfigMismatch(ColorizationError):
    """Network configuration disagrees with the codebook or checkpoint"""


class NonFiniteInput(ColorizationError):
    """An input contains NaN or Inf"""


class NonFiniteLoss(ColorizationError):
    """Training produced a NaN/Inf loss; the last good checkpoint is kept"""

    def __init__(self, step: int, message: str = None):
        self.step = step
        super().__init__(message or f"Non-finite loss at step {step}")


class EmptyDataset(ColorizationError):
    """No usable image (or pixel) was found"""


class DegenerateGamut(ColorizationError):
    """Fewer than two in-gamut bins survived the gamut sweep"""


class DecodeError(ColorizationError):
    """An image file could not be decoded"""


class CheckpointError(ColorizationError):
    """Base class for checkpoint and codebook file failures"""


class CorruptCheckpoint(CheckpointError):
    """File is truncated, has a bad digest or an unreadable payload"""


class VersionMismatch(CheckpointError):
    """File was written by an incompatible format version"""


class LabelMismatch(ColorizationError):
    """Probe labels do not line up with the probe images"""
