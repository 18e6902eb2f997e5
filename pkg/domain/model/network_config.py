"""
Architecture hyperparameters for UCapsNet
"""
from enum import Enum
from typing import Literal, Tuple

from pydantic import BaseModel, ConfigDict, field_validator, model_validator

# preprocessing pool + four stride-2 down blocks
DOWNSAMPLE_FACTOR = 32


class AblationVariant(str, Enum):
    """The four architecture variants: capsules and skips on/off"""

    FULL = "full"
    NO_CAPS = "no_caps"
    NO_SKIP = "no_skip"
    NO_CAPS_NO_SKIP = "no_caps_no_skip"

    @property
    def label(self) -> str:
        return {
            AblationVariant.FULL: "UCapsNet",
            AblationVariant.NO_CAPS: "UCapsNet No Capsules",
            AblationVariant.NO_SKIP: "UCapsNet No Skip",
            AblationVariant.NO_CAPS_NO_SKIP: "UCapsNet No Capsules No Skip",
        }[self]

    @property
    def flags(self) -> Tuple[bool, bool]:
        """(use_capsules, use_skips)"""
        return {
            AblationVariant.FULL: (True, True),
            AblationVariant.NO_CAPS: (False, True),
            AblationVariant.NO_SKIP: (True, False),
            AblationVariant.NO_CAPS_NO_SKIP: (False, False),
        }[self]


def _split_ints(value):
    if isinstance(value, str):
        return tuple(int(part) for part in value.replace('x', ',').split(',') if part.strip())
    if isinstance(value, int):
        return (value, value)
    return value


class NetworkConfig(BaseModel):
    """
    UCapsNet configuration

    Attributes:
        input_size: (H, W), both divisible by 32
        base_channels: preprocessing block output channels
        channel_schedule: output channels of the four down blocks
        primary_caps_dim: number of capsule convolutions, which is also the
            dimension of every primary capsule
        caps_channels: output channels of each capsule convolution
        caps_kernel: kernel size of the capsule convolutions
        entity_caps: number of routed (entity) capsules
        entity_caps_dim: dimension of each entity capsule
        routing_iterations: routing-by-agreement iterations
        num_bins: colour bins, must equal the codebook size
        use_capsules: include the capsule down/up path
        use_skips: include encoder-decoder skip connections
        upsample_mode: nearest or bilinear upsampling in the decoder
        detach_ab_input: stop gradients between the distribution and AB head
        ab_scale: bound of the AB head's tanh output
    """

    model_config = ConfigDict(frozen=True, extra='forbid')

    input_size: Tuple[int, int] = (64, 64)
    base_channels: int = 32
    channel_schedule: Tuple[int, int, int, int] = (64, 128, 256, 256)
    primary_caps_dim: int = 8
    caps_channels: int = 8
    caps_kernel: int = 3
    entity_caps: int = 32
    entity_caps_dim: int = 16
    routing_iterations: int = 3
    num_bins: int = 313
    use_capsules: bool = True
    use_skips: bool = True
    upsample_mode: Literal["nearest", "bilinear"] = "nearest"
    detach_ab_input: bool = False
    ab_scale: float = 110.0

    @field_validator('input_size', 'channel_schedule', mode='before')
    @classmethod
    def _parse_int_tuple(cls, value):
        return _split_ints(value)

    @field_validator('base_channels', 'primary_caps_dim', 'caps_channels', 'caps_kernel',
                     'entity_caps', 'entity_caps_dim', 'routing_iterations', 'num_bins')
    @classmethod
    def _positive(cls, value: int) -> int:
        if value < 1:
            raise ValueError("must be ≥ 1")
        return value

    @field_validator('channel_schedule')
    @classmethod
    def _positive_schedule(cls, value):
        if any(c < 1 for c in value):
            raise ValueError("channel_schedule entries must be strictly positive")
        return value

    @model_validator(mode='after')
    def _check_input_size(self):
        h, w = self.input_size
        if h < DOWNSAMPLE_FACTOR or w < DOWNSAMPLE_FACTOR or h % DOWNSAMPLE_FACTOR or w % DOWNSAMPLE_FACTOR:
            raise ValueError(f"input_size {self.input_size} must be positive multiples of {DOWNSAMPLE_FACTOR}")
        return self

    @property
    def bottleneck_size(self) -> Tuple[int, int]:
        """Spatial size of the deepest feature map"""
        return self.input_size[0] // DOWNSAMPLE_FACTOR, self.input_size[1] // DOWNSAMPLE_FACTOR

    @property
    def num_primary_caps(self) -> int:
        """Number of primary capsules N (flattened capsule-conv output size)"""
        h, w = self.bottleneck_size
        return self.caps_channels * h * w

    def for_ablation(self, variant) -> "NetworkConfig":
        use_capsules, use_skips = AblationVariant(variant).flags
        return self.model_copy(update={'use_capsules': use_capsules, 'use_skips': use_skips})

    def with_bins(self, num_bins: int) -> "NetworkConfig":
        return self.model_copy(update={'num_bins': num_bins})

    @classmethod
    def desk(cls) -> "NetworkConfig":
        return cls()

    @classmethod
    def paper(cls) -> "NetworkConfig":
        return cls(
            input_size=(224, 224),
            base_channels=64,
            channel_schedule=(128, 256, 512, 512),
        )

    @classmethod
    def preset(cls, name: str) -> "NetworkConfig":
        presets = {'desk': cls.desk, 'paper': cls.paper}
        if name not in presets:
            raise ValueError(f"Unknown preset '{name}', expected one of {sorted(presets)}")
        return presets[name]()
