import logging
from dataclasses import dataclass, field
from enum import Enum

import torch
import torch.nn.functional as F
from torch import Tensor, nn

from otsvad.audio.features import FeatureMatrix
from otsvad.audio.signal import EmptyInputError
from otsvad.nn.layers import ConformerEncoder, SinusoidalPositionalEncoding
from otsvad.nn.ops import ShapeError, check_finite, mean_std_pool
from otsvad.utils import EMBEDDING_SHIFT_S, SUBSAMPLING, ConfigError

logger = logging.getLogger(__name__)

GSP_EPS = 1e-5


class FrontendVariant(str, Enum):
    RESIDUAL = "residual-conv"
    CONFORMER = "conformer-mfa"


@dataclass
class FrontendConfig:
    variant: FrontendVariant = FrontendVariant.RESIDUAL
    num_mel_bins: int = 80
    embedding_dim: int = 64
    residual_widths: list[int] = field(default_factory=lambda: [16, 32, 64, 128])
    residual_blocks: list[int] = field(default_factory=lambda: [2, 2, 2, 2])
    conformer_dim: int = 64
    conformer_layers: int = 4
    conformer_heads: int = 4
    conformer_ff_dim: int = 256
    conformer_kernel: int = 15
    dropout: float = 0.1

    def __post_init__(self) -> None:
        if len(self.residual_widths) != 4 or len(self.residual_blocks) != 4:
            msg = "model.frontend.residual_widths and residual_blocks need one entry per stage (4)"
            raise ConfigError(msg)
        if self.embedding_dim < 1:
            msg = f"model.frontend.embedding_dim must be positive, got {self.embedding_dim}"
            raise ConfigError(msg)

    @classmethod
    def full(cls, variant: FrontendVariant = FrontendVariant.RESIDUAL) -> "FrontendConfig":
        return cls(
            variant=variant,
            embedding_dim=256,
            residual_widths=[64, 128, 256, 512],
            residual_blocks=[3, 4, 6, 3],
            conformer_dim=256,
            conformer_layers=6,
            conformer_heads=4,
            conformer_ff_dim=1024,
        )


class FrameEmbeddings:
    """``T x D`` frame-level speaker embeddings at 0.08 s resolution."""

    def __init__(self, values: Tensor, frame_resolution_s: float = EMBEDDING_SHIFT_S) -> None:
        if values.ndim != 2:
            msg = f"Frame embeddings must be T x D, got shape {tuple(values.shape)}"
            raise ShapeError(msg)
        self.values = values
        self.frame_resolution_s = frame_resolution_s

    @property
    def num_frames(self) -> int:
        return int(self.values.shape[0])

    @property
    def dim(self) -> int:
        return int(self.values.shape[1])


def frame_gsp(feature_map: Tensor) -> Tensor:
    """Mean and population std over the reduced feature axis, per frame and channel.

    ``(..., C, H', T)`` maps to ``(..., T, 2C)`` laid out ``[means | stds]``.
    """
    if feature_map.shape[-2] < 1:
        msg = "frame_gsp needs at least one feature row"
        raise ShapeError(msg)
    return mean_std_pool(feature_map.movedim(-1, -3), dim=-1, eps=GSP_EPS)


class BasicBlock(nn.Module):
    def __init__(self, in_channels: int, out_channels: int, stride: int) -> None:
        super().__init__()
        self.conv1 = nn.Conv2d(in_channels, out_channels, 3, stride=stride, padding=1, bias=False)
        self.bn1 = nn.BatchNorm2d(out_channels)
        self.conv2 = nn.Conv2d(out_channels, out_channels, 3, padding=1, bias=False)
        self.bn2 = nn.BatchNorm2d(out_channels)
        self.shortcut: nn.Module = nn.Identity()
        if stride != 1 or in_channels != out_channels:
            self.shortcut = nn.Sequential(
                nn.Conv2d(in_channels, out_channels, 1, stride=stride, bias=False),
                nn.BatchNorm2d(out_channels),
            )

    def forward(self, x: Tensor) -> Tensor:
        y = F.relu(self.bn1(self.conv1(x)))
        y = self.bn2(self.conv2(y))
        return F.relu(y + self.shortcut(x))


class Frontend(nn.Module):
    """Maps ``(B, H, L)`` log-Mel features to ``(B, ceil(L / 8), D)`` embeddings."""

    def __init__(self, config: FrontendConfig) -> None:
        super().__init__()
        self.config = config
        self.embedding_dim = config.embedding_dim

    def _check_input(self, features: Tensor) -> None:
        if features.ndim != 3 or features.shape[1] != self.config.num_mel_bins:
            msg = (
                f"Front-end expects (batch, {self.config.num_mel_bins}, frames) features, "
                f"got shape {tuple(features.shape)}"
            )
            raise ShapeError(msg)
        if features.shape[2] == 0:
            msg = "Front-end input has no frames"
            raise EmptyInputError(msg)


class ResidualFrontend(Frontend):
    def __init__(self, config: FrontendConfig) -> None:
        super().__init__(config)
        widths = config.residual_widths
        self.stem = nn.Sequential(
            nn.Conv2d(1, widths[0], 3, padding=1, bias=False),
            nn.BatchNorm2d(widths[0]),
            nn.ReLU(),
        )
        stages = []
        in_channels = widths[0]
        for i, (width, blocks) in enumerate(zip(widths, config.residual_blocks, strict=True)):
            stride = 1 if i == 0 else 2
            layers = [BasicBlock(in_channels, width, stride)]
            layers += [BasicBlock(width, width, 1) for _ in range(blocks - 1)]
            stages.append(nn.Sequential(*layers))
            in_channels = width
        self.stages = nn.Sequential(*stages)
        self.projection = nn.Linear(2 * widths[-1], config.embedding_dim)

    def forward(self, features: Tensor) -> Tensor:
        self._check_input(features)
        pad = -features.shape[2] % SUBSAMPLING
        x = F.pad(features, (0, pad))[:, None]
        feature_map = self.stages(self.stem(x))
        pooled = check_finite(frame_gsp(feature_map), "frontend.frame_gsp")
        return check_finite(self.projection(pooled), "frontend.projection")


class ConformerFrontend(Frontend):
    def __init__(self, config: FrontendConfig) -> None:
        super().__init__(config)
        dim = config.conformer_dim
        self.subsample = nn.Conv1d(config.num_mel_bins, dim, 3, stride=2, padding=1)
        self.positional = SinusoidalPositionalEncoding(dim)
        self.encoder = ConformerEncoder(
            dim,
            config.conformer_layers,
            config.conformer_heads,
            config.conformer_ff_dim,
            config.conformer_kernel,
            config.dropout,
        )
        aggregated = dim * config.conformer_layers
        self.aggregate_norm = nn.LayerNorm(aggregated)
        self.downsample = nn.Sequential(
            nn.Conv1d(aggregated, config.embedding_dim, 3, stride=2, padding=1),
            nn.ReLU(),
            nn.Conv1d(config.embedding_dim, config.embedding_dim, 3, stride=2, padding=1),
        )

    def forward(self, features: Tensor) -> Tensor:
        self._check_input(features)
        x = F.relu(self.subsample(features)).transpose(1, 2)
        outputs = self.encoder.forward_all(self.positional(x))
        # multi-scale aggregation of every block output
        aggregated = self.aggregate_norm(torch.cat(outputs, dim=-1))
        embeddings = self.downsample(aggregated.transpose(1, 2)).transpose(1, 2)
        return check_finite(embeddings, "frontend.downsample")


def build_frontend(config: FrontendConfig) -> Frontend:
    variant = FrontendVariant(config.variant)
    if variant is FrontendVariant.RESIDUAL:
        return ResidualFrontend(config)
    return ConformerFrontend(config)


def count_parameters(module: nn.Module) -> int:
    return sum(p.numel() for p in module.parameters())


def _as_batch(features: FeatureMatrix | Tensor) -> Tensor:
    if isinstance(features, FeatureMatrix):
        return torch.as_tensor(features.values, dtype=torch.float32)[None]
    return features[None] if features.ndim == 2 else features


def _frontend_forward(frontend: Frontend, features: FeatureMatrix | Tensor) -> FrameEmbeddings:
    batch = _as_batch(features)
    dtype = next(frontend.parameters()).dtype
    embeddings = frontend(batch.to(dtype))
    return FrameEmbeddings(embeddings[0])


def residual_frontend_forward(frontend: ResidualFrontend, features: FeatureMatrix | Tensor) -> FrameEmbeddings:
    return _frontend_forward(frontend, features)


def conformer_frontend_forward(frontend: ConformerFrontend, features: FeatureMatrix | Tensor) -> FrameEmbeddings:
    return _frontend_forward(frontend, features)
