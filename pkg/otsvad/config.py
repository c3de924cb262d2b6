"""Run configuration: one typed, sectioned document shared by every command.

The schema is the dataclass tree under :class:`RunConfig`; YAML files and
dotted overrides are merged onto it with omegaconf, so unknown keys and type
mismatches fail before anything runs.
"""

import logging
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field
from pathlib import Path

from omegaconf import OmegaConf
from omegaconf.errors import OmegaConfBaseException

from otsvad.audio.features import FeatureConfig
from otsvad.model.backend import BackendConfig
from otsvad.model.frontend import FrontendConfig
from otsvad.model.model import ModelConfig
from otsvad.model.multichannel import MultichannelConfig
from otsvad.scoring.metrics import ScoringConfig
from otsvad.streaming.state import BLOCK_LENGTHS_S, BLOCK_SHIFTS_S, StreamConfig
from otsvad.training.trainer import TrainingConfig, TrainingStage
from otsvad.utils import ConfigError

logger = logging.getLogger(__name__)

CONFIG_FILE_NAME = "config.yaml"


@dataclass
class SimulationConfig:
    num_conversations: int = 30
    dev_conversations: int = 5
    conversation_s: float = 60.0
    num_pool_speakers: int = 4
    segments_per_speaker: int = 8
    segment_s: float = 4.0
    mean_turn_frames: float = 40.0
    overlap_prob: float = 0.15
    snr_low_db: float = 5.0
    snr_high_db: float = 20.0

    def __post_init__(self) -> None:
        if self.num_conversations < 1 or not 0 <= self.dev_conversations < self.num_conversations:
            msg = (
                "simulation.num_conversations must be positive and simulation.dev_conversations "
                f"in [0, num_conversations), got {self.num_conversations} and {self.dev_conversations}"
            )
            raise ConfigError(msg)
        if not 0.0 <= self.overlap_prob <= 1.0:
            msg = f"simulation.overlap_prob must lie in [0, 1], got {self.overlap_prob}"
            raise ConfigError(msg)


@dataclass
class TuningConfig:
    thres_upper: list[float] = field(default_factory=lambda: [0.55, 0.6, 0.7, 0.8, 0.9])
    thres_lower: list[float] = field(default_factory=lambda: [0.1, 0.2, 0.3, 0.4, 0.5])
    block_lengths_s: list[float] = field(default_factory=lambda: list(BLOCK_LENGTHS_S))
    block_shifts_s: list[float] = field(default_factory=lambda: list(BLOCK_SHIFTS_S))


@dataclass
class PathsConfig:
    # "" means unset
    train_corpus: str = ""
    dev_corpus: str = ""
    noise_dir: str = ""
    rir_dir: str = ""
    checkpoint: str = ""
    out: str = "runs/otsvad"


@dataclass
class RunConfig:
    seed: int = 7
    features: FeatureConfig = field(default_factory=FeatureConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    stream: StreamConfig = field(default_factory=StreamConfig)
    training: TrainingConfig = field(default_factory=TrainingConfig)
    simulation: SimulationConfig = field(default_factory=SimulationConfig)
    scoring: ScoringConfig = field(default_factory=ScoringConfig)
    tuning: TuningConfig = field(default_factory=TuningConfig)
    paths: PathsConfig = field(default_factory=PathsConfig)

    def __post_init__(self) -> None:
        if self.stream.num_speakers != self.model.backend.num_speakers:
            msg = (
                f"stream.num_speakers={self.stream.num_speakers} differs from "
                f"model.backend.num_speakers={self.model.backend.num_speakers}"
            )
            raise ConfigError(msg)
        if self.model.frontend.num_mel_bins != self.features.num_mel_bins:
            msg = (
                f"model.frontend.num_mel_bins={self.model.frontend.num_mel_bins} differs from "
                f"features.num_mel_bins={self.features.num_mel_bins}"
            )
            raise ConfigError(msg)


def desk_preset() -> RunConfig:
    return RunConfig()


def dihard_preset() -> RunConfig:
    return RunConfig(
        model=ModelConfig(backend=BackendConfig(num_speakers=8)),
        stream=StreamConfig(num_speakers=8),
        scoring=ScoringConfig(collar_s=0.0),
    )


def alimeeting_preset() -> RunConfig:
    return RunConfig(
        model=ModelConfig(
            backend=BackendConfig(num_speakers=4),
            multichannel=MultichannelConfig(enabled=True, layers=3, heads=4),
        ),
        stream=StreamConfig(num_speakers=4),
        scoring=ScoringConfig(collar_s=0.25),
    )


def full_preset() -> RunConfig:
    stages = [
        TrainingStage(steps=100_000, frozen_frontend=True, real_fraction=0.0, max_lr=1e-4, warmup_steps=2000),
        TrainingStage(steps=50_000, frozen_frontend=False, real_fraction=0.2, max_lr=1e-5, warmup_steps=2000),
        TrainingStage(steps=50_000, frozen_frontend=False, real_fraction=1.0, max_lr=5e-6, warmup_steps=2000),
    ]
    return RunConfig(
        model=ModelConfig(frontend=FrontendConfig.full(), backend=BackendConfig.full(num_speakers=8)),
        stream=StreamConfig(num_speakers=8),
        training=TrainingConfig(
            stages=stages, block_frames=3200, batch_size=32, validation_period=5000, pretrain_steps=0
        ),
    )


PRESETS: dict[str, Callable[[], RunConfig]] = {
    "alimeeting": alimeeting_preset,
    "desk": desk_preset,
    "dihard": dihard_preset,
    "full": full_preset,
}


def _key_of(exc: OmegaConfBaseException) -> str:
    key = getattr(exc, "full_key", None)
    return str(key) if key else "<root>"


def load_config(
    path: str | Path | None = None,
    overrides: Sequence[str] = (),
    preset: str = "desk",
) -> RunConfig:
    """Merge ``path`` and dotted ``overrides`` onto a preset and validate the result."""
    if preset not in PRESETS:
        msg = f"Unknown preset {preset!r}; choose one of {', '.join(sorted(PRESETS))}"
        raise ConfigError(msg)
    try:
        merged = OmegaConf.structured(PRESETS[preset]())
        if path is not None:
            if not Path(path).is_file():
                msg = f"Config file {path} does not exist"
                raise ConfigError(msg)
            merged = OmegaConf.merge(merged, OmegaConf.load(path))
        if overrides:
            merged = OmegaConf.merge(merged, OmegaConf.from_dotlist(list(overrides)))
        config = OmegaConf.to_object(merged)
    except OmegaConfBaseException as exc:
        if isinstance(exc.__cause__, ConfigError):
            raise exc.__cause__ from None
        msg = f"Invalid configuration at key {_key_of(exc)}: {str(exc).splitlines()[0]}"
        raise ConfigError(msg) from exc
    assert isinstance(config, RunConfig)
    return config


def config_to_yaml(config: RunConfig) -> str:
    return OmegaConf.to_yaml(OmegaConf.structured(config))


def save_effective_config(config: RunConfig, directory: str | Path) -> Path:
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    path = out / CONFIG_FILE_NAME
    path.write_text(config_to_yaml(config))
    logger.info("config_saved path=%s", path)
    return path
