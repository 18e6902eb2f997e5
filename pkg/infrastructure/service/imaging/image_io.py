"""
Image decoding, encoding and folder listing (Pillow)
"""
import io
import logging
from pathlib import Path
from typing import List, Tuple

import numpy as np
from PIL import Image, UnidentifiedImageError

from domain.model.errors import DecodeError
from domain.model.images import RgbImage

logger = logging.getLogger(__name__)

IMAGE_SUFFIXES = {'.png', '.jpg', '.jpeg', '.bmp', '.gif', '.tif', '.tiff', '.webp'}


def list_images(path: Path) -> List[Path]:
    """A single image file, or the image files of a directory in sorted order"""
    path = Path(path)
    if path.is_file():
        return [path]
    if not path.is_dir():
        return []
    return sorted(p for p in path.iterdir() if p.is_file() and p.suffix.lower() in IMAGE_SUFFIXES)


def _to_rgb(image: Image.Image) -> RgbImage:
    return RgbImage(np.asarray(image.convert('RGB'), dtype=np.uint8))


def read_rgb(path: Path) -> RgbImage:
    """
    Decode any Pillow-readable file to 8-bit RGB

    Raises:
        DecodeError: unreadable or non-image file
    """
    try:
        with Image.open(path) as image:
            return _to_rgb(image)
    except (UnidentifiedImageError, OSError, ValueError) as e:
        raise DecodeError(f"Failed to decode {path}: {e}")


def decode_bytes(data: bytes) -> RgbImage:
    try:
        with Image.open(io.BytesIO(data)) as image:
            return _to_rgb(image)
    except (UnidentifiedImageError, OSError, ValueError) as e:
        raise DecodeError(f"Failed to decode image bytes: {e}")


def resize_rgb(image: RgbImage, size: Tuple[int, int]) -> RgbImage:
    """Bilinear resize to (height, width)"""
    h, w = size
    if (image.height, image.width) == (h, w):
        return image
    resized = Image.fromarray(image.pixels).resize((w, h), Image.BILINEAR)
    return RgbImage(np.asarray(resized, dtype=np.uint8))


def write_png(image: RgbImage, path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(image.pixels).save(path, format='PNG')
    return path


def encode_png_bytes(image: RgbImage) -> bytes:
    buffer = io.BytesIO()
    Image.fromarray(image.pixels).save(buffer, format='PNG')
    return buffer.getvalue()
