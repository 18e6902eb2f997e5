"""
Training hyperparameters and run state
"""
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator

from domain.model.network_config import DOWNSAMPLE_FACTOR, AblationVariant


class LossMode(str, Enum):
    """Which term the optimiser minimises"""

    LQ = "lq"
    LC = "lc"
    COMBINED = "combined"


class TrainConfig(BaseModel):
    """
    Training-loop configuration

    The learning rate may be zero (a frozen run); Adam constants default to
    β = (0.9, 0.999), ε = 1e-8.
    """

    model_config = ConfigDict(extra='forbid')

    data_dir: Optional[Path] = None
    epochs: int = Field(default=50, ge=1)
    batch_size: int = Field(default=8, ge=1)
    learning_rate: float = Field(default=2e-4, ge=0.0)
    seed: int = 0
    image_size: int = 64
    loss_mode: LossMode = LossMode.COMBINED
    ablation: AblationVariant = AblationVariant.FULL
    checkpoint_every: int = Field(default=100, ge=1)
    max_steps: Optional[int] = Field(default=None, ge=1)
    log_every: int = Field(default=10, ge=1)
    num_workers: int = Field(default=0, ge=0)
    betas: Tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    device: str = "auto"

    @field_validator('image_size')
    @classmethod
    def _divisible(cls, value: int) -> int:
        if value < DOWNSAMPLE_FACTOR or value % DOWNSAMPLE_FACTOR:
            raise ValueError(f"image_size must be a positive multiple of {DOWNSAMPLE_FACTOR}")
        return value

    @field_validator('betas', mode='before')
    @classmethod
    def _parse_betas(cls, value):
        if isinstance(value, str):
            return tuple(float(part) for part in value.split(','))
        return value

    @classmethod
    def desk(cls) -> "TrainConfig":
        return cls()

    @classmethod
    def paper(cls) -> "TrainConfig":
        return cls(epochs=20, batch_size=32, learning_rate=2e-5, image_size=224, checkpoint_every=1000)

    @classmethod
    def preset(cls, name: str) -> "TrainConfig":
        presets = {'desk': cls.desk, 'paper': cls.paper}
        if name not in presets:
            raise ValueError(f"Unknown preset '{name}', expected one of {sorted(presets)}")
        return presets[name]()


@dataclass
class LossRecord:
    """One logged optimisation step"""

    step: int
    l_q: float
    l_c: float
    total: float
    wall_time: float

    def as_row(self) -> List[Any]:
        return [self.step, self.l_q, self.l_c, self.total, self.wall_time]


@dataclass
class TrainState:
    """
    Everything needed to resume a run

    model_state and optimizer_state are torch state dicts; rng_state holds the
    torch CPU generator state and the data-order generator state.
    """

    step: int = 0
    epoch: int = 0
    model_state: Dict[str, Any] = field(default_factory=dict)
    optimizer_state: Dict[str, Any] = field(default_factory=dict)
    history: List[LossRecord] = field(default_factory=list)
    rng_state: Dict[str, Any] = field(default_factory=dict)

    @property
    def last(self) -> Optional[LossRecord]:
        return self.history[-1] if self.history else None
