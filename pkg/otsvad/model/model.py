import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

from torch import Tensor, nn

from otsvad.model.backend import Backend, BackendConfig, concat_speaker_frames
from otsvad.model.frontend import Frontend, FrontendConfig, build_frontend
from otsvad.model.multichannel import MultichannelConfig, MultichannelEncoder, mc_detect_forward
from otsvad.nn.checkpoint import Checkpoint, CheckpointError, CheckpointMetadata, load_checkpoint, save_checkpoint
from otsvad.nn.ops import ShapeError

logger = logging.getLogger(__name__)


@dataclass
class ModelConfig:
    frontend: FrontendConfig = field(default_factory=FrontendConfig)
    backend: BackendConfig = field(default_factory=BackendConfig)
    multichannel: MultichannelConfig = field(default_factory=MultichannelConfig)


class OtsVadModel(nn.Module):
    """Front-end, target-speaker back-end and optional cross-channel encoder.

    Features are ``(B, C, H, L)``; embeddings ``(B, C, T, D)``; banks
    ``(B, C, N, D)``; probabilities ``(B, T, N)``.
    """

    def __init__(self, config: ModelConfig) -> None:
        super().__init__()
        self.config = config
        self.frontend: Frontend = build_frontend(config.frontend)
        dim = config.frontend.embedding_dim
        self.backend = Backend(config.backend, dim)
        self.multichannel = MultichannelEncoder(config.multichannel, dim) if config.multichannel.enabled else None

    @property
    def num_speakers(self) -> int:
        return self.config.backend.num_speakers

    @property
    def embedding_dim(self) -> int:
        return self.config.frontend.embedding_dim

    def embed(self, features: Tensor) -> Tensor:
        batch, channels, bins, frames = features.shape
        embeddings = self.frontend(features.reshape(batch * channels, bins, frames))
        return embeddings.reshape(batch, channels, embeddings.shape[1], embeddings.shape[2])

    def detect(self, banks: Tensor, frames: Tensor) -> Tensor:
        if self.multichannel is not None:
            return mc_detect_forward(self.multichannel, self.backend, banks, frames)
        if banks.shape[1] != 1 or frames.shape[1] != 1:
            msg = f"Single-channel model got {frames.shape[1]} channels; enable model.multichannel"
            raise ShapeError(msg)
        return self.backend(concat_speaker_frames(banks[:, 0], frames[:, 0]))  # type: ignore[no-any-return]

    def forward(self, features: Tensor, banks: Tensor) -> Tensor:
        return self.detect(banks, self.embed(features))

    def checkpoint_tensors(self) -> dict[str, Tensor]:
        tensors = {}
        for prefix, module in self.named_children():
            for name, tensor in module.state_dict().items():
                tensors[f"{prefix}/{name}"] = tensor
        return tensors

    def save(self, path: str | Path, metadata: CheckpointMetadata | None = None) -> None:
        meta: CheckpointMetadata = {"model": _plain(asdict(self.config))}
        if metadata:
            meta.update(metadata)
        save_checkpoint(path, self.checkpoint_tensors(), meta)

    def load_tensors(self, checkpoint: Checkpoint) -> None:
        expected = {prefix for prefix, _ in self.named_children()}
        found = checkpoint.namespaces()
        if expected != found:
            msg = f"Checkpoint namespaces {sorted(found)} do not match the model {sorted(expected)}"
            raise CheckpointError(msg)
        for prefix, module in self.named_children():
            try:
                module.load_state_dict(checkpoint.namespace(prefix))
            except RuntimeError as e:
                msg = f"Checkpoint {prefix}/ tensors do not match the model config: {e}"
                raise CheckpointError(msg) from e

    @classmethod
    def from_checkpoint(cls, path: str | Path, config: ModelConfig) -> "OtsVadModel":
        model = cls(config)
        model.load_tensors(load_checkpoint(path))
        logger.info("checkpoint_loaded path=%s", path)
        return model


def _plain(value: Any) -> Any:
    if isinstance(value, dict):
        return {k: _plain(v) for k, v in value.items()}
    if isinstance(value, list):
        return [_plain(v) for v in value]
    if hasattr(value, "value"):
        return value.value
    return value
