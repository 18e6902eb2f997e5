"""
Capsule primitives: squash and routing by agreement

The routing loop is fully unrolled, so autograd differentiates through every
iteration, couplings included.
"""
import logging
from dataclasses import dataclass, field
from typing import List, Tuple

import torch

from domain.model.errors import InvalidShape

logger = logging.getLogger(__name__)

DEFAULT_ITERATIONS = 3


@dataclass
class CouplingState:
    """
    Routing state after the last iteration

    Attributes:
        logits: (..., N, J) agreement logits b, after the final update
        couplings: (..., N, J) coefficients c used for the final output
        history: couplings of every iteration when recorded
    """

    logits: torch.Tensor
    couplings: torch.Tensor
    history: List[torch.Tensor] = field(default_factory=list)


def squash(s: torch.Tensor, dim: int = -1) -> torch.Tensor:
    """
    v = (‖s‖² / (1 + ‖s‖²)) · s / ‖s‖, with squash(0) = 0

    The norm is floored at the dtype's smallest normal number, which leaves
    every non-zero input untouched and keeps the gradient finite at zero.
    """
    norm_sq = (s * s).sum(dim=dim, keepdim=True)
    norm = torch.sqrt(norm_sq.clamp_min(torch.finfo(s.dtype).tiny))
    return s * (norm_sq / ((1.0 + norm_sq) * norm))


def route(preds: torch.Tensor, iterations: int = DEFAULT_ITERATIONS,
          record_history: bool = False) -> Tuple[torch.Tensor, CouplingState]:
    """
    Routing by agreement

    Args:
        preds: (..., N, J, d̂) predictions û_{j|i} of output capsule j from
            input capsule i
        iterations: routing iterations (≥ 1)
        record_history: keep the coupling matrix of every iteration

    Returns:
        v: (..., J, d̂) output capsules
        state: final CouplingState
    """
    if iterations < 1:
        raise ValueError(f"Routing needs at least one iteration, got {iterations}")
    if preds.dim() < 3:
        raise InvalidShape(f"route expects (..., N, J, d̂), got {tuple(preds.shape)}")
    if any(size < 1 for size in preds.shape[-3:]):
        raise InvalidShape(f"route received an empty capsule axis: {tuple(preds.shape)}")

    logits = torch.zeros(preds.shape[:-1], dtype=preds.dtype, device=preds.device)
    history = []
    couplings = None
    v = None
    for _ in range(iterations):
        couplings = torch.softmax(logits, dim=-1)
        if record_history:
            history.append(couplings.detach().clone())
        s = (couplings.unsqueeze(-1) * preds).sum(dim=-3)
        v = squash(s)
        logits = logits + (preds * v.unsqueeze(-3)).sum(dim=-1)

    return v, CouplingState(logits=logits, couplings=couplings, history=history)


if __name__ == "__main__":
    print("Testing routing by agreement...")
    print("=" * 50)
    torch.manual_seed(0)
    u_hat = torch.randn(6, 3, 4, dtype=torch.float64)
    v, state = route(u_hat, iterations=3, record_history=True)
    print(f"✓ Output capsules: {tuple(v.shape)}, norms {v.norm(dim=-1).tolist()}")
    for t, c in enumerate(state.history, 1):
        print(f"  iteration {t}: coupling row sums {c.sum(dim=-1).tolist()}")
