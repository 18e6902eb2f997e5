"""
Build the colour codebook from a training folder
"""
import logging
from pathlib import Path
from typing import Optional

from domain.service.quantizer import DEFAULT_GAMUT_MODE, LAMBDA_MIX, SIGMA_PRIOR, QuantizerCodebook, build_codebook
from application.service.dataset_loader import ColorizationDataset, load_dataset
from infrastructure.persistence.codebook.codebook_store import save_codebook

logger = logging.getLogger(__name__)


def build_codebook_from_dataset(
    dataset: ColorizationDataset,
    lambda_mix: float = LAMBDA_MIX,
    sigma_prior: float = SIGMA_PRIOR,
    gamut_mode: str = DEFAULT_GAMUT_MODE,
) -> QuantizerCodebook:
    """Gamut sweep plus a prior estimated from the dataset's own chroma"""
    return build_codebook(
        dataset.ab_arrays(),
        lambda_mix=lambda_mix,
        sigma_prior=sigma_prior,
        gamut_mode=gamut_mode,
    )


def build_codebook_from_folder(
    data_dir: Path,
    image_size: int,
    out_path: Optional[Path] = None,
    lambda_mix: float = LAMBDA_MIX,
    sigma_prior: float = SIGMA_PRIOR,
    gamut_mode: str = DEFAULT_GAMUT_MODE,
) -> QuantizerCodebook:
    """
    Args:
        data_dir: training image folder
        image_size: resize applied before estimating the prior
        out_path: optional codebook file to write
    """
    dataset = load_dataset(data_dir, image_size)
    codebook = build_codebook_from_dataset(dataset, lambda_mix, sigma_prior, gamut_mode)
    if out_path is not None:
        save_codebook(codebook, out_path)
    return codebook
