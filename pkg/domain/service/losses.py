"""
Training objectives

quantisation loss: class-rebalanced cross-entropy between the soft-encoded
ground truth Z and the predicted distribution Ẑ, averaged per pixel.
colour error loss: squared chroma error, averaged per pixel.
"""
from dataclasses import dataclass
from typing import Tuple, Union

import torch

from domain.model.errors import NonFiniteInput, ShapeMismatch
from domain.model.train_config import LossMode
from domain.service.quantizer import QuantizerCodebook, pixel_weights_tensor, soft_encode_tensor

LOG_FLOOR = 1e-10


@dataclass
class LossBreakdown:
    """Both loss terms plus their sum, all scalar tensors"""

    l_q: torch.Tensor
    l_c: torch.Tensor
    total: torch.Tensor

    def objective(self, loss_mode: LossMode) -> torch.Tensor:
        """The term the optimiser should step on"""
        mode = LossMode(loss_mode)
        if mode is LossMode.LQ:
            return self.l_q
        if mode is LossMode.LC:
            return self.l_c
        return self.total

    def as_floats(self) -> Tuple[float, float, float]:
        return float(self.l_q.detach()), float(self.l_c.detach()), float(self.total.detach())


def _check_finite(name: str, t: torch.Tensor):
    if not torch.isfinite(t).all():
        raise NonFiniteInput(f"{name} contains NaN or Inf")


def _weight_table(weights: Union[QuantizerCodebook, torch.Tensor], like: torch.Tensor) -> torch.Tensor:
    if isinstance(weights, QuantizerCodebook):
        return torch.as_tensor(weights.weights, dtype=like.dtype, device=like.device)
    return weights.to(dtype=like.dtype, device=like.device)


def quantisation_loss(z_hat: torch.Tensor, z: torch.Tensor,
                      weights: Union[QuantizerCodebook, torch.Tensor]) -> torch.Tensor:
    """
    -Σ_pixels v(Z) · Σ_q Z_q log Ẑ_q  /  (B·H·W)

    Args:
        z_hat: (B, Q, H, W) predicted distribution
        z: (B, Q, H, W) soft-encoded target
        weights: codebook or its (Q,) rebalancing table; v(Z) uses the argmax
            bin of Z
    """
    if z_hat.shape != z.shape:
        raise ShapeMismatch(f"z_hat {tuple(z_hat.shape)} vs z {tuple(z.shape)}")
    if z.dim() != 4:
        raise ShapeMismatch(f"Expected (B, Q, H, W) distributions, got {tuple(z.shape)}")
    table = _weight_table(weights, z)
    if table.dim() != 1 or table.shape[0] != z.shape[1]:
        raise ShapeMismatch(f"weights {tuple(table.shape)} do not match {z.shape[1]} bins")
    _check_finite("z_hat", z_hat)
    _check_finite("z", z)

    b, _, h, w = z.shape
    v = pixel_weights_tensor(z, table)
    cross_entropy = -(z * torch.log(z_hat.clamp_min(LOG_FLOOR))).sum(dim=1)
    return (v * cross_entropy).sum() / (b * h * w)


def colour_error_loss(ab_hat: torch.Tensor, ab: torch.Tensor) -> torch.Tensor:
    """Σ ‖ab - âb‖² / (B·H·W)"""
    if ab_hat.shape != ab.shape:
        raise ShapeMismatch(f"ab_hat {tuple(ab_hat.shape)} vs ab {tuple(ab.shape)}")
    if ab.dim() != 4 or ab.shape[1] != 2:
        raise ShapeMismatch(f"Expected (B, 2, H, W) chroma, got {tuple(ab.shape)}")
    _check_finite("ab_hat", ab_hat)
    _check_finite("ab", ab)
    b, _, h, w = ab.shape
    return ((ab - ab_hat) ** 2).sum() / (b * h * w)


def loss_breakdown(z_hat: torch.Tensor, z: torch.Tensor, ab_hat: torch.Tensor, ab: torch.Tensor,
                   weights: Union[QuantizerCodebook, torch.Tensor]) -> LossBreakdown:
    """Both terms from precomputed targets, unit weighting"""
    l_q = quantisation_loss(z_hat, z, weights)
    l_c = colour_error_loss(ab_hat, ab)
    return LossBreakdown(l_q=l_q, l_c=l_c, total=l_q + l_c)


def combined_loss(output, target_ab: torch.Tensor, codebook: QuantizerCodebook) -> LossBreakdown:
    """
    Soft-encode the target chroma and evaluate both losses

    Args:
        output: ModelOutput with z_hat (B, Q, H, W) and ab_hat (B, 2, H, W)
        target_ab: (B, 2, H, W) ground-truth chroma
        codebook: quantiser used for the soft targets and weights
    """
    _check_finite("target_ab", target_ab)
    centres = torch.as_tensor(codebook.bin_centres, dtype=target_ab.dtype, device=target_ab.device)
    with torch.no_grad():
        z = soft_encode_tensor(target_ab, centres, codebook.k_soft, codebook.sigma_soft)
    return loss_breakdown(output.z_hat, z.to(output.z_hat.dtype), output.ab_hat, target_ab, codebook)
