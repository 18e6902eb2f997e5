"""
ab colour quantisation

Builds the in-gamut ab codebook (grid 10 over [-110, 110]), soft-encodes
ground-truth chroma into per-pixel distributions over the bins and derives
the rarity rebalancing weights v(·) used by the quantisation loss.
"""
import hashlib
import logging
from dataclasses import dataclass
from typing import Iterable, Optional, Tuple

import numpy as np
import torch
from scipy.ndimage import gaussian_filter

from domain.model.errors import DegenerateGamut, EmptyDataset, InvalidShape, NonFiniteInput
from domain.service.colorspace import lab_to_linear_rgb

logger = logging.getLogger(__name__)

GRID_SIZE = 10.0
AB_LIMIT = 110.0
SIGMA_SOFT = 5.0
K_SOFT = 5
LAMBDA_MIX = 0.5
SIGMA_PRIOR = 5.0
# slack on the linear-RGB cube; with 5×5 cell samples over integer L this keeps 313 bins
GAMUT_TOLERANCE = 0.027
DEFAULT_GAMUT_MODE = "cell"
GAMUT_MODES = ("centre", "cell")

# rows per chunk when soft-encoding; bounds the (rows, Q, 2) difference tensor
_ENCODE_CHUNK = 65536


@dataclass(frozen=True)
class QuantizerCodebook:
    """
    Immutable ab codebook

    Attributes:
        bin_centres: (Q, 2) bin centres in (a, b)
        grid_size: lattice spacing in chroma units
        prior: (Q,) empirical bin probabilities (sums to 1)
        weights: (Q,) rebalancing weights, E_prior[weights] = 1
        sigma_soft: soft-encoding kernel width
        k_soft: neighbours used by soft-encoding
        lambda_mix: uniform mixing used for the weights
        sigma_prior: prior smoothing width (chroma units)
    """

    bin_centres: np.ndarray
    grid_size: float
    prior: np.ndarray
    weights: np.ndarray
    sigma_soft: float = SIGMA_SOFT
    k_soft: int = K_SOFT
    lambda_mix: float = LAMBDA_MIX
    sigma_prior: float = SIGMA_PRIOR

    def __post_init__(self):
        centres = np.asarray(self.bin_centres, dtype=np.float64)
        if centres.ndim != 2 or centres.shape[1] != 2:
            raise InvalidShape(f"bin_centres must be Q×2, got {centres.shape}")
        q = centres.shape[0]
        prior = np.asarray(self.prior, dtype=np.float64)
        weights = np.asarray(self.weights, dtype=np.float64)
        if prior.shape != (q,) or weights.shape != (q,):
            raise InvalidShape(f"prior/weights must have shape ({q},)")
        object.__setattr__(self, 'bin_centres', centres)
        object.__setattr__(self, 'prior', prior)
        object.__setattr__(self, 'weights', weights)

    @property
    def Q(self) -> int:
        return self.bin_centres.shape[0]

    def fingerprint(self) -> str:
        """sha256 over the bin table and encoding parameters"""
        digest = hashlib.sha256()
        for arr in (self.bin_centres, self.prior, self.weights):
            digest.update(np.ascontiguousarray(arr, dtype=np.float64).tobytes())
        params = f"{self.grid_size}|{self.sigma_soft}|{self.k_soft}|{self.lambda_mix}|{self.sigma_prior}"
        digest.update(params.encode('utf-8'))
        return digest.hexdigest()

    def to_tensors(self, device=None, dtype=torch.float32) -> Tuple[torch.Tensor, torch.Tensor]:
        """(centres, weights) as tensors for the batched training path"""
        centres = torch.as_tensor(self.bin_centres, dtype=dtype, device=device)
        weights = torch.as_tensor(self.weights, dtype=dtype, device=device)
        return centres, weights


def ab_lattice(grid_size: float = GRID_SIZE, ab_limit: float = AB_LIMIT) -> np.ndarray:
    """All lattice points of [-ab_limit, ab_limit]² at grid_size, a-major order"""
    axis = np.arange(-ab_limit, ab_limit + grid_size / 2, grid_size)
    aa, bb = np.meshgrid(axis, axis, indexing='ij')
    return np.stack([aa.ravel(), bb.ravel()], axis=1)


def in_gamut_bins(
    grid_size: float = GRID_SIZE,
    ab_limit: float = AB_LIMIT,
    l_values: Optional[np.ndarray] = None,
    tolerance: float = GAMUT_TOLERANCE,
    mode: str = DEFAULT_GAMUT_MODE,
    cell_samples: int = 5,
) -> np.ndarray:
    """
    Sweep lightness to find which lattice bins are representable in sRGB

    Args:
        grid_size: lattice spacing
        ab_limit: half-width of the ab square
        l_values: lightness values to try (default 0, 1, ..., 100)
        tolerance: slack on the linear-RGB unit cube
        mode: "cell" keeps a bin if any sampled point of its cell is in
              gamut at some L; "centre" tests the bin centre alone
        cell_samples: samples per axis inside a cell for "cell" mode

    Returns:
        (Q, 2) in-gamut bin centres in lattice order
    """
    if mode not in GAMUT_MODES:
        raise ValueError(f"Unknown gamut mode '{mode}', expected one of {GAMUT_MODES}")
    if l_values is None:
        l_values = np.arange(0, 101, dtype=np.float64)
    l_values = np.asarray(l_values, dtype=np.float64)

    lattice = ab_lattice(grid_size, ab_limit)
    if mode == "centre":
        offsets = np.zeros((1, 2))
    else:
        ticks = np.linspace(-grid_size / 2, grid_size / 2, cell_samples)
        ta, tb = np.meshgrid(ticks, ticks, indexing='ij')
        offsets = np.stack([ta.ravel(), tb.ravel()], axis=1)

    # (bins, offsets, 2) sample points
    points = lattice[:, None, :] + offsets[None, :, :]
    keep = np.zeros(len(lattice), dtype=bool)
    for L in l_values:
        lab = np.concatenate([np.full(points.shape[:2] + (1,), L), points], axis=-1)
        rgb = lab_to_linear_rgb(lab)
        inside = np.all((rgb >= -tolerance) & (rgb <= 1.0 + tolerance), axis=-1)
        keep |= inside.any(axis=1)

    centres = lattice[keep]
    logger.info(f"Gamut sweep ({mode}): {len(centres)} of {len(lattice)} bins in gamut")
    if len(centres) < 2:
        raise DegenerateGamut(f"Only {len(centres)} in-gamut bins survived the sweep")
    return centres


def _soft_encode_flat(ab: torch.Tensor, centres: torch.Tensor, k: int, sigma: float) -> torch.Tensor:
    """Soft-encode (N, 2) chroma against (Q, 2) centres into (N, Q)"""
    q = centres.shape[0]
    k = min(k, q)
    out = torch.zeros(ab.shape[0], q, dtype=ab.dtype, device=ab.device)
    for start in range(0, ab.shape[0], _ENCODE_CHUNK):
        chunk = ab[start:start + _ENCODE_CHUNK]
        d2 = ((chunk[:, None, :] - centres[None, :, :]) ** 2).sum(dim=-1)
        # stable sort breaks distance ties by lowest bin index
        nearest = torch.argsort(d2, dim=1, stable=True)[:, :k]
        near_d2 = torch.gather(d2, 1, nearest)
        kernel = torch.exp(-(near_d2 - near_d2[:, :1]) / (2.0 * sigma ** 2))
        kernel = kernel / kernel.sum(dim=1, keepdim=True)
        out[start:start + _ENCODE_CHUNK].scatter_(1, nearest, kernel)
    return out


def soft_encode_tensor(ab: torch.Tensor, centres: torch.Tensor,
                       k: int = K_SOFT, sigma: float = SIGMA_SOFT) -> torch.Tensor:
    """
    Batched soft-encoding for training

    Args:
        ab: (B, 2, H, W) chroma
        centres: (Q, 2) bin centres on the same device/dtype

    Returns:
        (B, Q, H, W) distributions
    """
    if ab.dim() != 4 or ab.shape[1] != 2:
        raise InvalidShape(f"soft_encode_tensor expects (B, 2, H, W), got {tuple(ab.shape)}")
    b, _, h, w = ab.shape
    flat = ab.permute(0, 2, 3, 1).reshape(-1, 2)
    z = _soft_encode_flat(flat, centres.to(ab.dtype), k, sigma)
    return z.reshape(b, h, w, -1).permute(0, 3, 1, 2)


def soft_encode(ab: np.ndarray, cb: QuantizerCodebook) -> np.ndarray:
    """
    Soft-encode chroma into a per-pixel distribution over the codebook

    Each pixel puts Gaussian weight exp(-d²/(2·sigma_soft²)) on its k_soft
    nearest bin centres, normalised to sum to one.

    Args:
        ab: (..., 2) chroma
        cb: codebook

    Returns:
        (..., Q) float64 distributions
    """
    ab = np.asarray(ab, dtype=np.float64)
    if ab.shape[-1] != 2:
        raise InvalidShape(f"soft_encode expects a trailing axis of 2, got {ab.shape}")
    if not np.all(np.isfinite(ab)):
        raise NonFiniteInput("soft_encode received non-finite chroma")
    flat = torch.from_numpy(ab.reshape(-1, 2))
    centres = torch.from_numpy(cb.bin_centres)
    z = _soft_encode_flat(flat, centres, cb.k_soft, cb.sigma_soft)
    return z.numpy().reshape(ab.shape[:-1] + (cb.Q,))


def pixel_weight(z_pixel: np.ndarray, cb: QuantizerCodebook) -> float:
    """v(Z): weight of the pixel's most probable bin (ties -> lowest index)"""
    return float(cb.weights[int(np.argmax(z_pixel))])


def pixel_weights_tensor(z: torch.Tensor, weights: torch.Tensor) -> torch.Tensor:
    """(B, Q, H, W) distributions -> (B, H, W) rebalancing weights"""
    return weights.to(z.dtype)[torch.argmax(z, dim=1)]


def decode_argmax(z_hat: np.ndarray, cb: QuantizerCodebook) -> np.ndarray:
    """(..., Q) distributions -> (..., 2) centre of each pixel's argmax bin"""
    z_hat = np.asarray(z_hat)
    if z_hat.shape[-1] != cb.Q:
        raise InvalidShape(f"Expected trailing axis {cb.Q}, got {z_hat.shape}")
    return cb.bin_centres[np.argmax(z_hat, axis=-1)]


def smooth_prior(prior: np.ndarray, centres: np.ndarray, grid_size: float, sigma_prior: float) -> np.ndarray:
    """
    Gaussian-smooth a bin prior on the 2-D ab lattice

    Bins are scattered onto the lattice, filtered with width
    sigma_prior / grid_size cells, read back and renormalised.
    """
    prior = np.asarray(prior, dtype=np.float64)
    if sigma_prior <= 0:
        return prior / prior.sum()
    origin = centres.min(axis=0)
    idx = np.rint((centres - origin) / grid_size).astype(int)
    grid = np.zeros(idx.max(axis=0) + 1)
    grid[idx[:, 0], idx[:, 1]] = prior
    smoothed = gaussian_filter(grid, sigma=sigma_prior / grid_size, mode='constant')
    values = smoothed[idx[:, 0], idx[:, 1]]
    return values / values.sum()


def rebalancing_weights(prior: np.ndarray, lambda_mix: float = LAMBDA_MIX) -> np.ndarray:
    """
    v(·) table: w ∝ ((1 - λ)·prior + λ/Q)^-1, normalised so Σ prior·w = 1
    """
    if not 0.0 <= lambda_mix <= 1.0:
        raise ValueError(f"lambda_mix must lie in [0, 1], got {lambda_mix}")
    prior = np.asarray(prior, dtype=np.float64)
    q = prior.shape[0]
    mixed = (1.0 - lambda_mix) * prior + lambda_mix / q
    weights = 1.0 / np.maximum(mixed, 1e-12)
    return weights / np.sum(prior * weights)


def estimate_prior(ab_samples: Iterable[np.ndarray], centres: np.ndarray,
                   k_soft: int = K_SOFT, sigma_soft: float = SIGMA_SOFT) -> np.ndarray:
    """Average soft-encoding of every training pixel"""
    centres_t = torch.from_numpy(np.asarray(centres, dtype=np.float64))
    totals = torch.zeros(centres_t.shape[0], dtype=torch.float64)
    pixels = 0
    for ab in ab_samples:
        flat = np.asarray(ab, dtype=np.float64).reshape(-1, 2)
        if flat.size == 0:
            continue
        if not np.all(np.isfinite(flat)):
            raise NonFiniteInput("Training chroma contains non-finite values")
        totals += _soft_encode_flat(torch.from_numpy(flat), centres_t, k_soft, sigma_soft).sum(dim=0)
        pixels += flat.shape[0]
    if pixels == 0:
        raise EmptyDataset("No training pixels to estimate the colour prior from")
    logger.info(f"Colour prior estimated from {pixels} pixels")
    return (totals / pixels).numpy()


def build_codebook(
    training_images: Iterable[np.ndarray],
    gamut_samples: int = 101,
    lambda_mix: float = LAMBDA_MIX,
    sigma_prior: float = SIGMA_PRIOR,
    grid_size: float = GRID_SIZE,
    sigma_soft: float = SIGMA_SOFT,
    k_soft: int = K_SOFT,
    gamut_mode: str = DEFAULT_GAMUT_MODE,
    tolerance: float = GAMUT_TOLERANCE,
) -> QuantizerCodebook:
    """
    Build the codebook from a training image source

    Args:
        training_images: iterable of (H, W, 2) chroma arrays
        gamut_samples: number of evenly spaced L values in [0, 100] for the
            gamut sweep (101 gives the integer lattice)
        lambda_mix: uniform mixing for the rebalancing weights
        sigma_prior: prior smoothing width in chroma units
        grid_size: lattice spacing
        sigma_soft: soft-encoding kernel width
        k_soft: soft-encoding neighbour count
        gamut_mode: "cell" (default) or "centre", see in_gamut_bins
        tolerance: slack on the linear-RGB cube

    Returns:
        QuantizerCodebook
    """
    if not 0.0 <= lambda_mix <= 1.0:
        raise ValueError(f"lambda_mix must lie in [0, 1], got {lambda_mix}")

    l_values = np.linspace(0.0, 100.0, gamut_samples)
    centres = in_gamut_bins(grid_size, AB_LIMIT, l_values, tolerance, gamut_mode)
    raw_prior = estimate_prior(training_images, centres, k_soft, sigma_soft)
    prior = smooth_prior(raw_prior, centres, grid_size, sigma_prior)
    weights = rebalancing_weights(prior, lambda_mix)

    codebook = QuantizerCodebook(
        bin_centres=centres,
        grid_size=grid_size,
        prior=prior,
        weights=weights,
        sigma_soft=sigma_soft,
        k_soft=k_soft,
        lambda_mix=lambda_mix,
        sigma_prior=sigma_prior,
    )
    logger.info(f"✓ Codebook built: {codebook.Q} bins, weights in "
                f"[{weights.min():.3f}, {weights.max():.3f}]")
    return codebook
