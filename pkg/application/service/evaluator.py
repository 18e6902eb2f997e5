"""
PSNR evaluation of colourised images
"""
import logging
import math
from pathlib import Path

import numpy as np

from domain.model.errors import DecodeError, EmptyDataset, ShapeMismatch
from domain.model.images import RgbImage
from domain.model.reports import EvalReport
from application.service.colorizer import Colorizer
from infrastructure.service.imaging.image_io import list_images, read_rgb

logger = logging.getLogger(__name__)

MAX_PIXEL = 255.0


def psnr(pred: RgbImage, truth: RgbImage) -> float:
    """
    10·log10(255² / MSE) over all channels

    Returns:
        float: dB, or math.inf for identical images
    """
    if pred.pixels.shape != truth.pixels.shape:
        raise ShapeMismatch(f"PSNR needs equal shapes, got {pred.pixels.shape} and {truth.pixels.shape}")
    diff = pred.pixels.astype(np.float64) - truth.pixels.astype(np.float64)
    mse = float(np.mean(diff * diff))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(MAX_PIXEL ** 2 / mse)


def evaluate_folder(colorizer: Colorizer, data_dir: Path) -> EvalReport:
    """
    Colourise every image of a folder from its own L and score it

    Args:
        colorizer: trained network wrapper
        data_dir: folder of reference colour images

    Raises:
        EmptyDataset: no decodable images
    """
    values, names = [], []
    skipped = 0
    for path in list_images(data_dir):
        try:
            truth = read_rgb(path)
        except DecodeError as e:
            logger.warning(f"✗ {e}")
            skipped += 1
            continue
        values.append(psnr(colorizer.colorize_rgb(truth), truth))
        names.append(path.name)

    if not values:
        raise EmptyDataset(f"No decodable images to evaluate in {data_dir}")

    report = EvalReport.from_values(values, names, skipped)
    logger.info(f"✓ Evaluated {report.image_count} images: mean PSNR {report.mean_psnr:.2f} dB")
    return report
