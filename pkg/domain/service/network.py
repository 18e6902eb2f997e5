"""
UCapsNet: convolutional encoder, capsule bottleneck, skip-connected decoder

Layout of a forward pass (channels-first tensors):

    L (B,1,H,W) -> preprocess -> DBD1..DBD4 -> [PCD -> PCU] -> DBU4..DBU1
                -> Q head (distribution over colour bins) -> AB head (chroma)
"""
import logging
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np
import torch
import torch.nn as nn

from domain.model.errors import ConfigMismatch, InvalidShape
from domain.model.network_config import DOWNSAMPLE_FACTOR, NetworkConfig
from domain.service.quantizer import QuantizerCodebook
from domain.service.routing import CouplingState, route

logger = logging.getLogger(__name__)


@dataclass
class ModelOutput:
    """
    Attributes:
        z_hat: (B, Q, H, W) per-pixel colour distribution
        ab_hat: (B, 2, H, W) predicted chroma
    """

    z_hat: torch.Tensor
    ab_hat: torch.Tensor


@dataclass
class FeaturePyramid:
    """Outputs D1..D4 of the four down blocks"""

    d1: torch.Tensor
    d2: torch.Tensor
    d3: torch.Tensor
    d4: torch.Tensor

    def as_list(self) -> List[torch.Tensor]:
        return [self.d1, self.d2, self.d3, self.d4]

    def shapes(self) -> List[Tuple[int, int, int]]:
        """(channels, height, width) per stage"""
        return [tuple(t.shape[1:]) for t in self.as_list()]


@dataclass(frozen=True)
class CapsuleLayout:
    """Bookkeeping needed to re-expand routed capsules to a feature map"""

    primary_caps_dim: int
    caps_channels: int
    height: int
    width: int

    @property
    def num_capsules(self) -> int:
        return self.caps_channels * self.height * self.width


def _conv_bn_relu(in_channels: int, out_channels: int, stride: int = 1) -> List[nn.Module]:
    return [
        nn.Conv2d(in_channels, out_channels, kernel_size=3, stride=stride, padding=1, bias=False),
        nn.BatchNorm2d(out_channels),
        nn.ReLU(inplace=True),
    ]


def _upsample(mode: str) -> nn.Upsample:
    if mode == "bilinear":
        return nn.Upsample(scale_factor=2, mode="bilinear", align_corners=False)
    return nn.Upsample(scale_factor=2, mode="nearest")


def _check_feature_map(x: torch.Tensor, channels: int, name: str):
    if x.dim() != 4:
        raise InvalidShape(f"{name} expects (B, C, H, W), got {tuple(x.shape)}")
    if x.shape[1] != channels:
        raise InvalidShape(f"{name} expects {channels} channels, got {x.shape[1]}")


class PreprocessBlock(nn.Module):
    """Conv-BN-ReLU-MaxPool; halves the spatial size"""

    def __init__(self, in_channels: int, out_channels: int):
        super().__init__()
        self.in_channels = in_channels
        self.body = nn.Sequential(*_conv_bn_relu(in_channels, out_channels), nn.MaxPool2d(2))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        _check_feature_map(x, self.in_channels, "PreprocessBlock")
        if x.shape[2] < 2 or x.shape[3] < 2:
            raise InvalidShape(f"PreprocessBlock input too small: {tuple(x.shape)}")
        return self.body(x)


class DoubleBlockDown(nn.Module):
    """Two Conv-BN-ReLU sequences, the first with stride 2"""

    def __init__(self, in_channels: int, out_channels: int):
        super().__init__()
        self.in_channels = in_channels
        self.body = nn.Sequential(
            *_conv_bn_relu(in_channels, out_channels, stride=2),
            *_conv_bn_relu(out_channels, out_channels),
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        _check_feature_map(x, self.in_channels, "DoubleBlockDown")
        if x.shape[2] % 2 or x.shape[3] % 2:
            raise InvalidShape(f"DoubleBlockDown needs even spatial size, got {tuple(x.shape[2:])}")
        return self.body(x)


class DoubleBlockUp(nn.Module):
    """UpSample-Conv-BN-ReLU followed by Conv-BN-ReLU; doubles the spatial size"""

    def __init__(self, in_channels: int, out_channels: int, mode: str = "nearest"):
        super().__init__()
        self.in_channels = in_channels
        self.body = nn.Sequential(
            _upsample(mode),
            *_conv_bn_relu(in_channels, out_channels),
            *_conv_bn_relu(out_channels, out_channels),
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        _check_feature_map(x, self.in_channels, "DoubleBlockUp")
        return self.body(x)


class PrimaryCapsDown(nn.Module):
    """
    Capsule encoding of the deepest feature map

    k bias-free convolutions over D4 are flattened into the rows of U (k×N);
    each column is a primary capsule of dimension k. Every capsule i predicts
    every entity capsule j through its own matrix W_ij, and the predictions
    are routed by agreement.
    """

    def __init__(self, config: NetworkConfig):
        super().__init__()
        self.config = config
        k = config.primary_caps_dim
        self.capsule_convs = nn.ModuleList([
            nn.Conv2d(config.channel_schedule[3], config.caps_channels, config.caps_kernel,
                      padding=config.caps_kernel // 2, bias=False)
            for _ in range(k)
        ])
        n = config.num_primary_caps
        self.weights = nn.Parameter(
            torch.randn(n, config.entity_caps, config.entity_caps_dim, k) / np.sqrt(k)
        )
        self.last_state: Optional[CouplingState] = None

    def primary_capsules(self, d4: torch.Tensor) -> Tuple[torch.Tensor, CapsuleLayout]:
        """(B, k, N) matrix U and its layout"""
        _check_feature_map(d4, self.config.channel_schedule[3], "PrimaryCapsDown")
        if tuple(d4.shape[2:]) != self.config.bottleneck_size:
            raise InvalidShape(f"PrimaryCapsDown expects spatial {self.config.bottleneck_size}, "
                               f"got {tuple(d4.shape[2:])}")
        rows = [conv(d4).flatten(1) for conv in self.capsule_convs]
        layout = CapsuleLayout(self.config.primary_caps_dim, self.config.caps_channels,
                               d4.shape[2], d4.shape[3])
        return torch.stack(rows, dim=1), layout

    def forward(self, d4: torch.Tensor) -> Tuple[torch.Tensor, CapsuleLayout]:
        u_matrix, layout = self.primary_capsules(d4)
        u = u_matrix.transpose(1, 2)
        predictions = torch.einsum('njdk,bnk->bnjd', self.weights, u)
        v, state = route(predictions, self.config.routing_iterations)
        self.last_state = state
        return v, layout


class PrimaryCapsUp(nn.Module):
    """
    Re-expand routed capsules to a D4-shaped feature map

    u^r_i = Σ_j W^r_ji v_j gives U^r with the shape of U; each of its k rows is
    reshaped to the capsule-conv grid, passed through its own transposed
    convolution, and the concatenation is projected to D4's channels.
    """

    def __init__(self, config: NetworkConfig):
        super().__init__()
        self.config = config
        k = config.primary_caps_dim
        out_channels = config.channel_schedule[3]
        per_branch = max(1, out_channels // k)
        self.weights = nn.Parameter(
            torch.randn(config.entity_caps, config.num_primary_caps, k, config.entity_caps_dim)
            / np.sqrt(config.entity_caps_dim)
        )
        self.deconvs = nn.ModuleList([
            nn.ConvTranspose2d(config.caps_channels, per_branch, config.caps_kernel,
                               padding=config.caps_kernel // 2)
            for _ in range(k)
        ])
        self.project = nn.Conv2d(k * per_branch, out_channels, kernel_size=1)

    def reverse_capsules(self, v: torch.Tensor) -> torch.Tensor:
        """(B, J, k̂) entity capsules -> (B, k, N) matrix U^r"""
        expected = (self.config.entity_caps, self.config.entity_caps_dim)
        if v.dim() != 3 or tuple(v.shape[1:]) != expected:
            raise InvalidShape(f"PrimaryCapsUp expects (B, {expected[0]}, {expected[1]}), got {tuple(v.shape)}")
        u_r = torch.einsum('jnkd,bjd->bnk', self.weights, v)
        return u_r.transpose(1, 2)

    def forward(self, v: torch.Tensor, layout: CapsuleLayout) -> torch.Tensor:
        u_r = self.reverse_capsules(v)
        if u_r.shape[2] != layout.num_capsules:
            raise InvalidShape(f"Capsule layout holds {layout.num_capsules} capsules, U^r has {u_r.shape[2]}")
        grid = (u_r.shape[0], layout.caps_channels, layout.height, layout.width)
        branches = [deconv(u_r[:, i].reshape(grid)) for i, deconv in enumerate(self.deconvs)]
        return self.project(torch.cat(branches, dim=1))


class UCapsNet(nn.Module):
    """Full colourisation network, with capsule and skip paths switchable"""

    def __init__(self, config: NetworkConfig):
        super().__init__()
        self.config = config
        base = config.base_channels
        c1, c2, c3, c4 = config.channel_schedule
        skip = config.use_skips

        self.preprocess = PreprocessBlock(1, base)
        self.down = nn.ModuleList([
            DoubleBlockDown(base, c1),
            DoubleBlockDown(c1, c2),
            DoubleBlockDown(c2, c3),
            DoubleBlockDown(c3, c4),
        ])

        if config.use_capsules:
            self.pcd = PrimaryCapsDown(config)
            self.pcu = PrimaryCapsUp(config)
            up4_in = c4 + c4 if skip else c4
        else:
            self.pcd = None
            self.pcu = None
            up4_in = c4

        mode = config.upsample_mode
        # index 0 is DBU1, index 3 is DBU4; output channels mirror the encoder
        self.up = nn.ModuleList([
            DoubleBlockUp(c1 + c1 if skip else c1, base, mode),
            DoubleBlockUp(c2 + c2 if skip else c2, c1, mode),
            DoubleBlockUp(c3 + c3 if skip else c3, c2, mode),
            DoubleBlockUp(up4_in, c3, mode),
        ])

        self.q_head = nn.Sequential(_upsample(mode), nn.Conv2d(base, config.num_bins, kernel_size=1))
        self.ab_head = nn.Conv2d(config.num_bins, 2, kernel_size=1)

    def check_codebook(self, codebook: QuantizerCodebook):
        if codebook.Q != self.config.num_bins:
            raise ConfigMismatch(f"Network predicts {self.config.num_bins} bins, codebook has {codebook.Q}")

    @torch.no_grad()
    def init_ab_head(self, codebook: QuantizerCodebook):
        """
        Start the AB head as a soft decoder of the bin centres

        With a one-hot distribution on bin q the head then outputs centre q.
        """
        self.check_codebook(codebook)
        ratio = np.clip(codebook.bin_centres / self.config.ab_scale, -0.99, 0.99)
        weight = torch.as_tensor(np.arctanh(ratio).T, dtype=self.ab_head.weight.dtype)
        self.ab_head.weight.copy_(weight.reshape(self.ab_head.weight.shape))
        self.ab_head.bias.zero_()

    def _check_input(self, x: torch.Tensor):
        if x.dim() != 4 or x.shape[1] != 1:
            raise InvalidShape(f"UCapsNet expects (B, 1, H, W), got {tuple(x.shape)}")
        h, w = x.shape[2:]
        if h % DOWNSAMPLE_FACTOR or w % DOWNSAMPLE_FACTOR:
            raise InvalidShape(f"Input size {(h, w)} is not divisible by {DOWNSAMPLE_FACTOR}")
        if self.config.use_capsules and (h, w) != tuple(self.config.input_size):
            raise InvalidShape(f"Capsule path is sized for {self.config.input_size}, got {(h, w)}")

    def preprocess_block(self, x: torch.Tensor) -> torch.Tensor:
        return self.preprocess(x)

    def dbd_forward(self, x: torch.Tensor, stage: int) -> torch.Tensor:
        if not 1 <= stage <= 4:
            raise ValueError(f"Down stage must be 1..4, got {stage}")
        return self.down[stage - 1](x)

    def pcd_forward(self, d4: torch.Tensor) -> Tuple[torch.Tensor, CapsuleLayout]:
        if self.pcd is None:
            raise ConfigMismatch("Capsules are disabled in this configuration")
        return self.pcd(d4)

    def pcu_forward(self, v: torch.Tensor, layout: CapsuleLayout) -> torch.Tensor:
        if self.pcu is None:
            raise ConfigMismatch("Capsules are disabled in this configuration")
        return self.pcu(v, layout)

    def dbu_forward(self, x: torch.Tensor, stage: int) -> torch.Tensor:
        if not 1 <= stage <= 4:
            raise ValueError(f"Up stage must be 1..4, got {stage}")
        return self.up[stage - 1](x)

    def features(self, x: torch.Tensor) -> FeaturePyramid:
        """Encoder taps D1..D4"""
        h = self.preprocess_block(x)
        taps = []
        for stage in range(1, 5):
            h = self.dbd_forward(h, stage)
            taps.append(h)
        return FeaturePyramid(*taps)

    def forward(self, x: torch.Tensor) -> ModelOutput:
        self._check_input(x)
        pyramid = self.features(x)
        d = pyramid.as_list()

        if self.config.use_capsules:
            v, layout = self.pcd_forward(d[3])
            x_caps = self.pcu_forward(v, layout)
            y = torch.cat([x_caps, d[3]], dim=1) if self.config.use_skips else x_caps
        else:
            y = d[3]
        y = self.dbu_forward(y, 4)

        for stage in (3, 2, 1):
            if self.config.use_skips:
                y = torch.cat([d[stage - 1], y], dim=1)
            y = self.dbu_forward(y, stage)

        z_hat = torch.softmax(self.q_head(y), dim=1)
        ab_input = z_hat.detach() if self.config.detach_ab_input else z_hat
        ab_hat = torch.tanh(self.ab_head(ab_input)) * self.config.ab_scale
        return ModelOutput(z_hat=z_hat, ab_hat=ab_hat)


def build_model(config: NetworkConfig, codebook: Optional[QuantizerCodebook] = None) -> UCapsNet:
    """Construct a UCapsNet, checking and seeding it against the codebook"""
    model = UCapsNet(config)
    if codebook is not None:
        model.init_ab_head(codebook)
    n_params = sum(p.numel() for p in model.parameters())
    logger.info(f"UCapsNet built: capsules={config.use_capsules}, skips={config.use_skips}, "
                f"{n_params:,} parameters")
    return model
