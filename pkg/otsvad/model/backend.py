from dataclasses import dataclass
from enum import Enum

import torch
from torch import Tensor, nn

from otsvad.nn.layers import BiLSTM, ConformerEncoder, SinusoidalPositionalEncoding
from otsvad.nn.ops import ShapeError, check_finite
from otsvad.utils import ConfigError


class JointMode(str, Enum):
    SYMMETRIC = "symmetric"
    CONCAT = "concat"


@dataclass
class BackendConfig:
    num_speakers: int = 4
    model_dim: int = 64
    layers: int = 2
    heads: int = 4
    ff_dim: int = 256
    kernel_size: int = 15
    dropout: float = 0.1
    lstm_hidden: int = 64
    joint_mode: JointMode = JointMode.SYMMETRIC

    def __post_init__(self) -> None:
        if self.num_speakers < 1:
            msg = f"model.backend.num_speakers must be positive, got {self.num_speakers}"
            raise ConfigError(msg)
        if self.model_dim % self.heads:
            msg = f"model.backend.heads ({self.heads}) must divide model_dim ({self.model_dim})"
            raise ConfigError(msg)

    @classmethod
    def full(cls, num_speakers: int = 8) -> "BackendConfig":
        return cls(
            num_speakers=num_speakers,
            model_dim=256,
            layers=6,
            heads=8,
            ff_dim=512,
            lstm_hidden=256,
        )


class TargetSpeakerBank:
    """``N x D`` target embeddings; inactive rows are all zero."""

    def __init__(self, values: Tensor, active: Tensor | None = None) -> None:
        if values.ndim < 2:
            msg = f"Speaker bank must be N x D, got shape {tuple(values.shape)}"
            raise ShapeError(msg)
        if active is None:
            active = values.abs().sum(dim=-1) > 0
        if active.shape != values.shape[:-1]:
            msg = f"Active flags {tuple(active.shape)} do not match bank rows {tuple(values.shape[:-1])}"
            raise ShapeError(msg)
        self.values = values * active[..., None].to(values.dtype)
        self.active = active

    @classmethod
    def zeros(cls, num_speakers: int, dim: int, dtype: torch.dtype = torch.float32) -> "TargetSpeakerBank":
        return cls(torch.zeros(num_speakers, dim, dtype=dtype), torch.zeros(num_speakers, dtype=torch.bool))

    @property
    def num_speakers(self) -> int:
        return int(self.values.shape[-2])

    @property
    def active_count(self) -> int:
        return int(self.active.sum())

    def permuted(self, order: list[int]) -> "TargetSpeakerBank":
        return TargetSpeakerBank(self.values[..., order, :], self.active[..., order])


def concat_speaker_frames(bank: Tensor | TargetSpeakerBank, frames: Tensor) -> Tensor:
    """Pair every target embedding with every frame embedding.

    ``(..., N, D)`` and ``(..., T, D)`` give ``(..., N, T, 2D)`` with
    ``[..., n, t, :D]`` the bank row and ``[..., n, t, D:]`` the frame row.
    """
    values = bank.values if isinstance(bank, TargetSpeakerBank) else bank
    if values.shape[-1] != frames.shape[-1]:
        msg = f"Bank dim {values.shape[-1]} != frame embedding dim {frames.shape[-1]}"
        raise ShapeError(msg)
    if values.shape[:-2] != frames.shape[:-2]:
        msg = f"Bank batch {tuple(values.shape[:-2])} != frame batch {tuple(frames.shape[:-2])}"
        raise ShapeError(msg)
    n, t = values.shape[-2], frames.shape[-2]
    lead = values.shape[:-2]
    speakers = values[..., :, None, :].expand(*lead, n, t, values.shape[-1])
    frame_rows = frames[..., None, :, :].expand(*lead, n, t, frames.shape[-1])
    return torch.cat([speakers, frame_rows], dim=-1)


class Backend(nn.Module):
    """Per-speaker detection encoder followed by joint refinement across speakers."""

    def __init__(self, config: BackendConfig, embedding_dim: int) -> None:
        super().__init__()
        self.config = config
        self.embedding_dim = embedding_dim
        self.num_speakers = config.num_speakers
        self.input_projection = nn.Linear(2 * embedding_dim, config.model_dim)
        self.positional = SinusoidalPositionalEncoding(config.model_dim)
        self.encoder = ConformerEncoder(
            config.model_dim,
            config.layers,
            config.heads,
            config.ff_dim,
            config.kernel_size,
            config.dropout,
        )
        self.joint_mode = JointMode(config.joint_mode)
        if self.joint_mode is JointMode.SYMMETRIC:
            self.joint = BiLSTM(2 * config.model_dim, config.lstm_hidden)
            self.output = nn.Linear(2 * config.lstm_hidden, 1)
        else:
            self.joint = BiLSTM(config.num_speakers * config.model_dim, config.lstm_hidden)
            self.output = nn.Linear(2 * config.lstm_hidden, config.num_speakers)

    def speaker_scores(self, block: Tensor) -> Tensor:
        """Per-speaker encoder with weights shared over speakers: ``(B, N, T, 2D) -> (B, N, T, d)``."""
        batch, n, t, width = block.shape
        if width != 2 * self.embedding_dim:
            msg = f"Concat block width {width} != 2 x embedding dim {self.embedding_dim}"
            raise ShapeError(msg)
        x = self.input_projection(block.reshape(batch * n, t, width))
        x = self.encoder(self.positional(x))
        return check_finite(x, "backend.speaker_encoder").reshape(batch, n, t, -1)

    def joint_detect(self, scores: Tensor) -> Tensor:
        batch, n, t, dim = scores.shape
        if self.joint_mode is JointMode.SYMMETRIC:
            context = scores.mean(dim=1, keepdim=True).expand_as(scores)
            x = torch.cat([scores, context], dim=-1).reshape(batch * n, t, 2 * dim)
            hidden = check_finite(self.joint(x), "backend.joint_bilstm")
            logits = self.output(hidden).reshape(batch, n, t).transpose(1, 2)
        else:
            if n != self.num_speakers:
                msg = f"Concat joint mode is built for {self.num_speakers} speakers, got {n}"
                raise ShapeError(msg)
            x = scores.permute(0, 2, 1, 3).reshape(batch, t, n * dim)
            hidden = check_finite(self.joint(x), "backend.joint_bilstm")
            logits = self.output(hidden)
        return check_finite(torch.sigmoid(logits), "backend.output")

    def forward(self, block: Tensor) -> Tensor:
        return self.joint_detect(self.speaker_scores(block))


def detect_forward(backend: Backend, block: Tensor) -> Tensor:
    """``(N, T, 2D)`` or ``(B, N, T, 2D)`` concat blocks to ``T x N`` (or ``B x T x N``) probabilities."""
    if block.ndim == 3:
        return backend(block[None])[0]  # type: ignore[no-any-return]
    return backend(block)  # type: ignore[no-any-return]
