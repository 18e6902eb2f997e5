"""
Codebook persistence

Text table:

    # ucapsnet-codebook v1
    Q grid_size sigma_soft k_soft lambda_mix sigma_prior
    a b prior weight        (Q rows)
"""
import logging
from pathlib import Path
from typing import Any, Dict

import numpy as np
import torch

from domain.model.errors import CorruptCheckpoint, VersionMismatch
from domain.service.quantizer import QuantizerCodebook

logger = logging.getLogger(__name__)

CODEBOOK_VERSION = 1
HEADER_PREFIX = "# ucapsnet-codebook v"


def save_codebook(codebook: QuantizerCodebook, path: Path) -> Path:
    """Write the codebook table; floats use repr precision so a reload is exact"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [
        f"{HEADER_PREFIX}{CODEBOOK_VERSION}",
        f"{codebook.Q} {codebook.grid_size!r} {codebook.sigma_soft!r} {codebook.k_soft} "
        f"{codebook.lambda_mix!r} {codebook.sigma_prior!r}",
    ]
    for (a, b), p, w in zip(codebook.bin_centres, codebook.prior, codebook.weights):
        lines.append(f"{float(a)!r} {float(b)!r} {float(p)!r} {float(w)!r}")
    tmp = path.with_suffix(path.suffix + '.tmp')
    tmp.write_text("\n".join(lines) + "\n", encoding='utf-8')
    tmp.replace(path)
    logger.info(f"✓ Codebook saved: {path} ({codebook.Q} bins)")
    return path


def load_codebook(path: Path) -> QuantizerCodebook:
    """
    Read a codebook table

    Raises:
        VersionMismatch: header names another format version
        CorruptCheckpoint: malformed or truncated table
    """
    path = Path(path)
    lines = [line.strip() for line in path.read_text(encoding='utf-8').splitlines() if line.strip()]
    if not lines or not lines[0].startswith(HEADER_PREFIX):
        raise CorruptCheckpoint(f"{path} is not a codebook file")
    try:
        version = int(lines[0][len(HEADER_PREFIX):])
    except ValueError:
        raise CorruptCheckpoint(f"{path}: unreadable codebook version line '{lines[0]}'")
    if version != CODEBOOK_VERSION:
        raise VersionMismatch(f"{path}: codebook version {version}, expected {CODEBOOK_VERSION}")

    try:
        q_str, grid, sigma_soft, k_soft, lambda_mix, sigma_prior = lines[1].split()
        q = int(q_str)
        rows = np.array([[float(x) for x in line.split()] for line in lines[2:]], dtype=np.float64)
    except (IndexError, ValueError) as e:
        logger.error(f"✗ Malformed codebook {path}: {e}")
        raise CorruptCheckpoint(f"{path}: malformed codebook ({e})")
    if rows.shape != (q, 4):
        raise CorruptCheckpoint(f"{path}: expected {q} rows of 4 values, got {rows.shape}")

    return QuantizerCodebook(
        bin_centres=rows[:, :2],
        grid_size=float(grid),
        prior=rows[:, 2],
        weights=rows[:, 3],
        sigma_soft=float(sigma_soft),
        k_soft=int(k_soft),
        lambda_mix=float(lambda_mix),
        sigma_prior=float(sigma_prior),
    )


def codebook_to_payload(codebook: QuantizerCodebook) -> Dict[str, Any]:
    """Tensor/primitive form for embedding in checkpoints"""
    return {
        'bin_centres': torch.from_numpy(codebook.bin_centres.copy()),
        'prior': torch.from_numpy(codebook.prior.copy()),
        'weights': torch.from_numpy(codebook.weights.copy()),
        'grid_size': float(codebook.grid_size),
        'sigma_soft': float(codebook.sigma_soft),
        'k_soft': int(codebook.k_soft),
        'lambda_mix': float(codebook.lambda_mix),
        'sigma_prior': float(codebook.sigma_prior),
        'fingerprint': codebook.fingerprint(),
    }


def codebook_from_payload(payload: Dict[str, Any]) -> QuantizerCodebook:
    """Inverse of codebook_to_payload; verifies the stored fingerprint"""
    codebook = QuantizerCodebook(
        bin_centres=payload['bin_centres'].numpy(),
        grid_size=payload['grid_size'],
        prior=payload['prior'].numpy(),
        weights=payload['weights'].numpy(),
        sigma_soft=payload['sigma_soft'],
        k_soft=payload['k_soft'],
        lambda_mix=payload['lambda_mix'],
        sigma_prior=payload['sigma_prior'],
    )
    if codebook.fingerprint() != payload.get('fingerprint'):
        raise CorruptCheckpoint("Embedded codebook does not match its fingerprint")
    return codebook
