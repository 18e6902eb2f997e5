"""
sRGB <-> CIELab conversion (D65, 2° observer) and network input scaling

The constants match scikit-image's conversion so results can be cross-checked
against it: sRGB companding with the 0.04045 linear segment, the sRGB->XYZ
matrix and the D65 reference white (0.95047, 1.0, 1.08883).
"""
import logging

import numpy as np

from domain.model.images import LabImage, RgbImage
from domain.model.errors import InvalidShape

logger = logging.getLogger(__name__)

XYZ_FROM_RGB = np.array([
    [0.412453, 0.357580, 0.180423],
    [0.212671, 0.715160, 0.072169],
    [0.019334, 0.119193, 0.950227],
])
RGB_FROM_XYZ = np.linalg.inv(XYZ_FROM_RGB)
D65_WHITE = np.array([0.95047, 1.0, 1.08883])

_EPSILON = 0.008856
_KAPPA_SLOPE = 7.787
_F_OFFSET = 16.0 / 116.0
_F_THRESHOLD = 0.2068966

L_CENTRE = 50.0
L_SCALE = 50.0


def _check_last_axis(arr: np.ndarray, name: str):
    if arr.ndim < 1 or arr.shape[-1] != 3:
        raise InvalidShape(f"{name} expects a trailing axis of 3, got {arr.shape}")


def srgb_to_linear(rgb: np.ndarray) -> np.ndarray:
    """Inverse sRGB companding on values in [0, 1]"""
    rgb = np.asarray(rgb, dtype=np.float64)
    return np.where(rgb > 0.04045, ((rgb + 0.055) / 1.055) ** 2.4, rgb / 12.92)


def linear_to_srgb(linear: np.ndarray) -> np.ndarray:
    """sRGB companding; caller is responsible for the [0, 1] range"""
    linear = np.asarray(linear, dtype=np.float64)
    return np.where(
        linear > 0.0031308,
        1.055 * np.power(np.maximum(linear, 0.0031308), 1 / 2.4) - 0.055,
        12.92 * linear,
    )


def srgb_to_lab_array(rgb: np.ndarray) -> np.ndarray:
    """
    Convert sRGB values to CIELab

    Args:
        rgb: (..., 3) array. uint8 input is scaled by 1/255, float input is
             taken to be in [0, 1] already.

    Returns:
        (..., 3) float64 array of (L, a, b)
    """
    rgb = np.asarray(rgb)
    _check_last_axis(rgb, "srgb_to_lab_array")
    if rgb.dtype == np.uint8:
        rgb = rgb.astype(np.float64) / 255.0
    linear = srgb_to_linear(rgb)
    xyz = linear @ XYZ_FROM_RGB.T
    xyz = xyz / D65_WHITE

    f = np.where(xyz > _EPSILON, np.cbrt(xyz), _KAPPA_SLOPE * xyz + _F_OFFSET)
    fx, fy, fz = f[..., 0], f[..., 1], f[..., 2]

    L = 116.0 * fy - 16.0
    a = 500.0 * (fx - fy)
    b = 200.0 * (fy - fz)
    # the linear segment leaves L a hair below zero for black
    L = np.maximum(L, 0.0)
    return np.stack([L, a, b], axis=-1)


def lab_to_linear_rgb(lab: np.ndarray) -> np.ndarray:
    """
    CIELab to linear RGB without clipping or companding

    Out-of-gamut colours come back with components outside [0, 1]; the
    quantizer's gamut sweep depends on seeing them unclipped.
    """
    lab = np.asarray(lab, dtype=np.float64)
    _check_last_axis(lab, "lab_to_linear_rgb")
    L, a, b = lab[..., 0], lab[..., 1], lab[..., 2]
    fy = (L + 16.0) / 116.0
    fx = fy + a / 500.0
    fz = fy - b / 200.0
    f = np.stack([fx, fy, fz], axis=-1)

    xyz = np.where(f > _F_THRESHOLD, f ** 3, (f - _F_OFFSET) / _KAPPA_SLOPE)
    xyz = xyz * D65_WHITE
    return xyz @ RGB_FROM_XYZ.T


def lab_to_srgb_array(lab: np.ndarray) -> np.ndarray:
    """
    Convert CIELab to 8-bit sRGB

    Out-of-gamut colours are clipped to [0, 1] in linear RGB before
    companding, so saturated colours saturate instead of wrapping hue.

    Returns:
        (..., 3) uint8 array
    """
    linear = np.clip(lab_to_linear_rgb(lab), 0.0, 1.0)
    rgb = linear_to_srgb(linear)
    return np.clip(np.rint(rgb * 255.0), 0, 255).astype(np.uint8)


def rgb_to_lab(img: RgbImage) -> LabImage:
    """Convert an 8-bit sRGB image to CIELab"""
    return LabImage.from_array(srgb_to_lab_array(img.pixels))


def lab_to_rgb(img: LabImage) -> RgbImage:
    """Convert a CIELab image to 8-bit sRGB, clipping out-of-gamut colours"""
    return RgbImage(lab_to_srgb_array(img.to_array()))


def normalize_L(L: np.ndarray) -> np.ndarray:
    """Map lightness in [0, 100] to the network input range [-1, 1]"""
    return (np.asarray(L, dtype=np.float64) - L_CENTRE) / L_SCALE


def denormalize_L(plane: np.ndarray) -> np.ndarray:
    """
    Inverse of normalize_L

    normalize_L rounds and is not injective on doubles, so the round trip
    L -> L is accurate to half an ulp of 50 (2**-48) rather than bit-exact;
    normalize_L(denormalize_L(x)) == x holds exactly for every normalised x.
    """
    return np.asarray(plane, dtype=np.float64) * L_SCALE + L_CENTRE


def combine_lab(L: np.ndarray, ab: np.ndarray) -> LabImage:
    """
    Recombine a lightness plane with an H×W×2 chroma array

    Args:
        L: H×W lightness in [0, 100]
        ab: H×W×2 chroma

    Returns:
        LabImage
    """
    ab = np.asarray(ab, dtype=np.float64)
    if ab.ndim != 3 or ab.shape[2] != 2 or ab.shape[:2] != np.shape(L):
        raise InvalidShape(f"Cannot combine L {np.shape(L)} with ab {ab.shape}")
    return LabImage(L, ab[..., 0], ab[..., 1])


if __name__ == "__main__":
    print("Testing colourspace conversion...")
    print("=" * 50)
    for value in (0, 128, 255):
        lab = srgb_to_lab_array(np.array([[value, value, value]], dtype=np.uint8))[0]
        print(f"  grey {value:3d} -> L={lab[0]:.4f} a={lab[1]:.4f} b={lab[2]:.4f}")
    rng = np.random.default_rng(0)
    pixels = rng.integers(0, 256, size=(10000, 3), dtype=np.uint8)
    back = lab_to_srgb_array(srgb_to_lab_array(pixels))
    err = np.abs(back.astype(int) - pixels.astype(int)).max()
    print(f"{'✓' if err <= 1 else '✗'} Round-trip max error over 10k pixels: {err}")
