"""
Image value types: 8-bit sRGB and CIELab
"""
from dataclasses import dataclass

import numpy as np

from domain.model.errors import InvalidShape, NonFiniteInput


@dataclass(frozen=True)
class RgbImage:
    """H×W×3 uint8 sRGB image"""

    pixels: np.ndarray

    def __post_init__(self):
        pixels = np.asarray(self.pixels)
        if pixels.ndim != 3 or pixels.shape[2] != 3:
            raise InvalidShape(f"RgbImage expects H×W×3, got {pixels.shape}")
        if pixels.shape[0] < 1 or pixels.shape[1] < 1:
            raise InvalidShape("RgbImage must be at least 1×1")
        if pixels.dtype != np.uint8:
            if np.any(pixels < 0) or np.any(pixels > 255):
                raise ValueError("RgbImage channel values must lie in [0, 255]")
            pixels = pixels.astype(np.uint8)
        object.__setattr__(self, 'pixels', pixels)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @classmethod
    def from_grey(cls, grey: np.ndarray) -> "RgbImage":
        grey = np.asarray(grey, dtype=np.uint8)
        return cls(np.repeat(grey[:, :, None], 3, axis=2))


@dataclass(frozen=True)
class LabImage:
    """
    CIELab image as three H×W float64 planes

    L lies in [0, 100]; a and b are finite and nominally in [-128, 127].
    """

    L: np.ndarray
    a: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        planes = [np.asarray(p, dtype=np.float64) for p in (self.L, self.a, self.b)]
        shape = planes[0].shape
        if len(shape) != 2:
            raise InvalidShape(f"LabImage planes must be H×W, got {shape}")
        if any(p.shape != shape for p in planes):
            raise InvalidShape(f"LabImage planes disagree: {[p.shape for p in planes]}")
        if not all(np.all(np.isfinite(p)) for p in planes):
            raise NonFiniteInput("LabImage contains non-finite values")
        for name, plane in zip(('L', 'a', 'b'), planes):
            object.__setattr__(self, name, plane)

    @property
    def shape(self):
        return self.L.shape

    @property
    def ab(self) -> np.ndarray:
        """H×W×2 chroma"""
        return np.stack([self.a, self.b], axis=-1)

    def to_array(self) -> np.ndarray:
        """H×W×3 array in (L, a, b) order"""
        return np.stack([self.L, self.a, self.b], axis=-1)

    @classmethod
    def from_array(cls, lab: np.ndarray) -> "LabImage":
        lab = np.asarray(lab, dtype=np.float64)
        if lab.ndim != 3 or lab.shape[2] != 3:
            raise InvalidShape(f"Expected H×W×3 Lab array, got {lab.shape}")
        return cls(lab[..., 0], lab[..., 1], lab[..., 2])
