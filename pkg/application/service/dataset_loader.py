"""
Image-folder ingestion for self-supervised training

Every decodable image is resized (bilinear) to image_size², converted to
CIELab and split into the network input (normalised L) and the supervisory
chroma (raw ab). Undecodable files are logged, counted and skipped.
"""
import hashlib
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, List

import numpy as np
import torch
from torch.utils.data import DataLoader, Dataset

from domain.model.errors import DecodeError, EmptyDataset
from domain.service.colorspace import normalize_L, rgb_to_lab
from infrastructure.service.imaging.image_io import list_images, read_rgb, resize_rgb

logging.basicConfig(
    level=logging.INFO,
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
)
logger = logging.getLogger(__name__)

# mixes the epoch into the data-order seed
_EPOCH_STRIDE = 1_000_003


@dataclass
class LabSample:
    """One training pair, channels-first float32"""

    name: str
    L: torch.Tensor
    ab: torch.Tensor


def image_to_pair(image, image_size: int, name: str = "") -> LabSample:
    """Resize an RgbImage and split it into (normalised L, ab)"""
    resized = resize_rgb(image, (image_size, image_size))
    lab = rgb_to_lab(resized)
    L = torch.from_numpy(normalize_L(lab.L)).float().unsqueeze(0)
    ab = torch.from_numpy(lab.ab).float().permute(2, 0, 1).contiguous()
    return LabSample(name=name, L=L, ab=ab)


class ColorizationDataset(Dataset):
    """
    Decoded training pairs from one image folder

    Images are decoded once at construction; order is the sorted file order.
    """

    def __init__(self, data_dir: Path, image_size: int):
        """
        Args:
            data_dir: folder of colour images (or a single image file)
            image_size: side length after resizing, multiple of 32
        """
        self.data_dir = Path(data_dir)
        self.image_size = image_size
        self.samples: List[LabSample] = []
        self.stats = {
            'images': 0,
            'skipped': 0,
            'errors': []
        }
        self._load()

    def _load(self):
        files = list_images(self.data_dir)
        logger.info(f"Loading {len(files)} candidate images from {self.data_dir}")
        for path in files:
            try:
                sample = image_to_pair(read_rgb(path), self.image_size, path.name)
            except DecodeError as e:
                logger.warning(f"✗ {e}")
                self.stats['skipped'] += 1
                self.stats['errors'].append(str(e))
                continue
            self.samples.append(sample)
            self.stats['images'] += 1

        if not self.samples:
            raise EmptyDataset(f"No decodable images in {self.data_dir}")
        logger.info(f"✓ Loaded {len(self.samples)} images ({self.stats['skipped']} skipped)")

    def __len__(self) -> int:
        return len(self.samples)

    def __getitem__(self, index: int):
        sample = self.samples[index]
        return sample.L, sample.ab

    def ab_arrays(self) -> Iterator[np.ndarray]:
        """H×W×2 float64 chroma of every image, for the colour prior"""
        for sample in self.samples:
            yield sample.ab.permute(1, 2, 0).double().numpy()

    def fingerprint(self) -> str:
        """sha256 over file names and decoded tensors"""
        digest = hashlib.sha256()
        for sample in self.samples:
            digest.update(sample.name.encode('utf-8'))
            digest.update(sample.L.numpy().tobytes())
            digest.update(sample.ab.numpy().tobytes())
        return digest.hexdigest()

    def print_summary(self):
        """Print loading summary"""
        logger.info(f"\n{'='*60}")
        logger.info("DATASET SUMMARY")
        logger.info(f"{'='*60}")
        logger.info(f"Folder:  {self.data_dir}")
        logger.info(f"Images:  {self.stats['images']}")
        logger.info(f"Skipped: {self.stats['skipped']}")
        for error in self.stats['errors'][:10]:
            logger.info(f"  - {error}")
        logger.info(f"{'='*60}\n")


def load_dataset(data_dir: Path, image_size: int) -> ColorizationDataset:
    return ColorizationDataset(data_dir, image_size)


def epoch_order(n: int, seed: int, epoch: int) -> List[int]:
    """Permutation of range(n) that depends only on (seed, epoch)"""
    generator = torch.Generator()
    generator.manual_seed(seed * _EPOCH_STRIDE + epoch)
    return torch.randperm(n, generator=generator).tolist()


def batch_loader(dataset: Dataset, batch_size: int, seed: int, epoch: int,
                 skip_batches: int = 0, num_workers: int = 0) -> DataLoader:
    """
    DataLoader over one epoch in the (seed, epoch) order

    Args:
        skip_batches: leading batches already consumed (when resuming)
    """
    order = epoch_order(len(dataset), seed, epoch)[skip_batches * batch_size:]
    return DataLoader(dataset, batch_size=batch_size, sampler=order,
                      num_workers=num_workers, drop_last=False)

