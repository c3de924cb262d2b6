from dataclasses import dataclass

import torch
from torch import Tensor, nn

from otsvad.model.backend import Backend, concat_speaker_frames
from otsvad.nn.layers import FeedForward, MultiHeadAttention
from otsvad.nn.ops import ShapeError, check_finite
from otsvad.utils import ConfigError


@dataclass
class MultichannelConfig:
    enabled: bool = False
    layers: int = 3
    heads: int = 4
    ff_dim: int = 256
    dropout: float = 0.1
    init_scale: float = 1e-2

    def __post_init__(self) -> None:
        if self.init_scale < 0:
            msg = f"model.multichannel.init_scale must be >= 0, got {self.init_scale}"
            raise ConfigError(msg)


class CrossChannelAttention(nn.Module):
    """Self-attention across the channel axis at every (frame, speaker) position.

    Both sublayers update ``x + LayerNorm(sublayer(x))``; the LayerNorm gains
    start at ``init_scale`` so that ``init_scale = 0`` is the identity.
    """

    def __init__(self, dim: int, heads: int, ff_dim: int, dropout: float = 0.1, init_scale: float = 1e-2) -> None:
        super().__init__()
        self.attention = MultiHeadAttention(dim, heads, dropout)
        self.attention_norm = nn.LayerNorm(dim)
        self.feed_forward = FeedForward(dim, ff_dim, dropout, activation="relu")
        self.feed_forward_norm = nn.LayerNorm(dim)
        with torch.no_grad():
            self.attention_norm.weight.mul_(init_scale)
            self.feed_forward_norm.weight.mul_(init_scale)

    @property
    def weights(self) -> Tensor | None:
        return self.attention.weights

    def forward(self, x: Tensor) -> Tensor:
        # x: (..., C, 2D)
        attended = check_finite(self.attention(x), "multichannel.attention")
        x = x + self.attention_norm(attended)
        return x + self.feed_forward_norm(self.feed_forward(x))


def build_channel_stack(banks: Tensor, frames: Tensor) -> Tensor:
    """``(B, C, N, D)`` banks and ``(B, C, T, D)`` frames to ``(B, T, N, C, 2D)``."""
    if banks.ndim != 4 or frames.ndim != 4:
        msg = f"Expected (B, C, N, D) banks and (B, C, T, D) frames, got {tuple(banks.shape)} and {tuple(frames.shape)}"
        raise ShapeError(msg)
    if banks.shape[:2] != frames.shape[:2]:
        msg = f"Channel layout mismatch: banks {tuple(banks.shape[:2])} vs frames {tuple(frames.shape[:2])}"
        raise ShapeError(msg)
    blocks = concat_speaker_frames(banks, frames)  # (B, C, N, T, 2D)
    return blocks.permute(0, 3, 2, 1, 4)


def cross_channel_attention(stack: Tensor, layers: nn.ModuleList) -> Tensor:
    x = stack
    for layer in layers:
        x = layer(x)
    return x


def channel_average_pool(attended: Tensor) -> Tensor:
    return attended.mean(dim=-2)


class MultichannelEncoder(nn.Module):
    def __init__(self, config: MultichannelConfig, embedding_dim: int) -> None:
        super().__init__()
        self.config = config
        self.layers = nn.ModuleList(
            CrossChannelAttention(2 * embedding_dim, config.heads, config.ff_dim, config.dropout, config.init_scale)
            for _ in range(config.layers)
        )

    def forward(self, stack: Tensor) -> Tensor:
        """``(B, T, N, C, 2D)`` to the pooled ``(B, T, N, 2D)``."""
        return channel_average_pool(cross_channel_attention(stack, self.layers))


def mc_detect_forward(encoder: MultichannelEncoder, backend: Backend, banks: Tensor, frames: Tensor) -> Tensor:
    """Channel stack, cross-channel attention, channel pooling, then the back-end: ``(B, T, N)``."""
    pooled = encoder(build_channel_stack(banks, frames))
    return backend(pooled.permute(0, 2, 1, 3))  # type: ignore[no-any-return]
