"""
Inference: colourise greyscale (or colour) images with a trained UCapsNet
"""
import logging
from pathlib import Path
from typing import Dict, Optional

import numpy as np
import torch
import torch.nn.functional as F

from domain.model.errors import DecodeError, EmptyDataset
from domain.model.images import RgbImage
from domain.service.colorspace import combine_lab, lab_to_rgb, normalize_L, rgb_to_lab
from domain.service.network import UCapsNet, build_model
from domain.service.quantizer import QuantizerCodebook
from infrastructure.config.config import Config
from infrastructure.persistence.checkpoint.checkpoint_store import CheckpointBundle, CheckpointStore
from infrastructure.service.imaging.image_io import list_images, read_rgb, write_png

logger = logging.getLogger(__name__)


class Colorizer:
    """Wraps a network and its codebook for inference"""

    def __init__(self, model: UCapsNet, codebook: QuantizerCodebook, device: Optional[str] = None):
        model.check_codebook(codebook)
        self.device = Config.resolve_device(device)
        self.model = model.to(self.device).eval()
        self.codebook = codebook

    @classmethod
    def from_bundle(cls, bundle: CheckpointBundle, device: Optional[str] = None) -> "Colorizer":
        model = build_model(bundle.network_config, bundle.codebook)
        model.load_state_dict(bundle.state.model_state)
        return cls(model, bundle.codebook, device)

    @classmethod
    def from_checkpoint(cls, path: Path, device: Optional[str] = None) -> "Colorizer":
        return cls.from_bundle(CheckpointStore().load(path), device)

    @property
    def input_size(self):
        return tuple(self.model.config.input_size)

    @torch.no_grad()
    def predict_ab(self, L: np.ndarray) -> np.ndarray:
        """
        Predict chroma for a lightness plane of any size

        The plane is resized to the network input, and the prediction is
        resized back (bilinear) to the plane's own size.

        Args:
            L: H×W lightness in [0, 100]

        Returns:
            H×W×2 float64 chroma
        """
        h, w = L.shape
        x = torch.from_numpy(normalize_L(L)).float()[None, None].to(self.device)
        if (h, w) != self.input_size:
            x = F.interpolate(x, size=self.input_size, mode='bilinear', align_corners=False)

        self.model.eval()
        ab = self.model(x).ab_hat

        if (h, w) != self.input_size:
            ab = F.interpolate(ab, size=(h, w), mode='bilinear', align_corners=False)
        return ab[0].permute(1, 2, 0).double().cpu().numpy()

    def colorize_rgb(self, rgb: RgbImage) -> RgbImage:
        """Keep the source's full-resolution L, replace its chroma"""
        lab = rgb_to_lab(rgb)
        ab = self.predict_ab(lab.L)
        return lab_to_rgb(combine_lab(lab.L, ab))

    def colorize_file(self, source: Path, target: Path) -> Path:
        return write_png(self.colorize_rgb(read_rgb(source)), target)

    def colorize_path(self, source: Path, output_dir: Path) -> Dict:
        """
        Colourise a file or every image in a folder into output_dir/<stem>.png

        Returns:
            dict: written/failed counts and error messages

        Raises:
            EmptyDataset: no candidate image files
        """
        files = list_images(source)
        if not files:
            raise EmptyDataset(f"No images found at {source}")

        stats = {
            'written': 0,
            'failed': 0,
            'errors': []
        }
        output_dir = Path(output_dir)
        for path in files:
            try:
                target = self.colorize_file(path, output_dir / f"{path.stem}.png")
                logger.info(f"✓ {path.name} -> {target}")
                stats['written'] += 1
            except (DecodeError, OSError) as e:
                logger.error(f"✗ {path.name}: {e}")
                stats['failed'] += 1
                stats['errors'].append(f"{path.name}: {e}")
        return stats
