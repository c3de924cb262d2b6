from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from otsvad.utils import EMBEDDING_SHIFT_S, BoolArray, ConfigError, DataError, FloatArray, seconds_to_frames

BLOCK_LENGTHS_S = (2.0, 4.0, 8.0, 16.0)
BLOCK_SHIFTS_S = (0.4, 0.8, 1.6)


class StreamError(DataError):
    pass


class Strategy(str, Enum):
    BUFFER = "buffer"
    ACCUMULATE = "accumulate"


@dataclass
class StreamConfig:
    block_length_s: float = 16.0
    block_shift_s: float = 0.8
    thres_upper: float = 0.6
    thres_lower: float = 0.3
    num_speakers: int = 4
    strategy: Strategy = Strategy.BUFFER
    buffer_prune_k: int = 512
    output_threshold: float = 0.5
    record_blocks: bool = False

    def __post_init__(self) -> None:
        if self.block_shift_s <= 0 or self.block_length_s <= 0:
            msg = "stream.block_length_s and stream.block_shift_s must be positive"
            raise ConfigError(msg)
        if self.shift_frames < 1:
            msg = f"stream.block_shift_s={self.block_shift_s} is shorter than one embedding frame"
            raise ConfigError(msg)
        if self.shift_frames > self.length_frames:
            msg = f"stream.block_shift_s ({self.block_shift_s}) must not exceed block_length_s ({self.block_length_s})"
            raise ConfigError(msg)
        if not 0 < self.thres_lower <= 0.5 < self.thres_upper < 1:
            msg = (
                "stream thresholds need 0 < thres_lower <= 0.5 < thres_upper < 1, "
                f"got thres_lower={self.thres_lower} thres_upper={self.thres_upper}"
            )
            raise ConfigError(msg)
        if self.num_speakers < 1:
            msg = f"stream.num_speakers must be positive, got {self.num_speakers}"
            raise ConfigError(msg)
        if self.buffer_prune_k < 0:
            msg = f"stream.buffer_prune_k must be >= 0, got {self.buffer_prune_k}"
            raise ConfigError(msg)
        self.strategy = Strategy(self.strategy)

    @property
    def length_frames(self) -> int:
        return seconds_to_frames(self.block_length_s)

    @property
    def shift_frames(self) -> int:
        return seconds_to_frames(self.block_shift_s)


def _grow(array: np.ndarray, axis: int, size: int) -> np.ndarray:
    if array.shape[axis] >= size:
        return array
    capacity = max(size, 2 * array.shape[axis], 64)
    shape = list(array.shape)
    shape[axis] = capacity - array.shape[axis]
    return np.concatenate([array, np.zeros(shape, dtype=array.dtype)], axis=axis)


class OutputBuffer:
    """Running sums of block predictions and the number of blocks covering each frame."""

    def __init__(self, num_speakers: int) -> None:
        self.num_speakers = num_speakers
        self.prob_sums = np.zeros((0, num_speakers))
        self.coverage = np.zeros(0, dtype=np.int64)
        self.cursor = 0

    def reserve(self, frames: int) -> None:
        self.prob_sums = _grow(self.prob_sums, 0, frames)
        self.coverage = _grow(self.coverage, 0, frames)

    def add_outputs(self, start: int, probs: FloatArray) -> None:
        end = start + probs.shape[0]
        self.reserve(end)
        self.prob_sums[start:end] += probs
        self.coverage[start:end] += 1

    def averaged(self, start: int = 0, end: int | None = None) -> FloatArray:
        end = self.cursor if end is None else end
        coverage = np.maximum(self.coverage[start:end], 1)
        return self.prob_sums[start:end] / coverage[:, None]  # type: ignore[no-any-return]


class BufferState(OutputBuffer):
    """Output buffer plus per-channel running-mean frame embeddings and the pruning mask."""

    def __init__(self, num_speakers: int, channels: int, dim: int) -> None:
        super().__init__(num_speakers)
        self.channels = channels
        self.dim = dim
        self.embedding_sums = np.zeros((channels, 0, dim))
        self.eligible: BoolArray = np.zeros((0, num_speakers), dtype=bool)

    def reserve(self, frames: int) -> None:
        super().reserve(frames)
        self.embedding_sums = _grow(self.embedding_sums, 1, frames)
        self.eligible = _grow(self.eligible, 0, frames)

    def add_embeddings(self, start: int, frames: FloatArray) -> None:
        end = start + frames.shape[1]
        self.reserve(end)
        self.embedding_sums[:, start:end] += frames

    def embeddings(self, end: int | None = None) -> FloatArray:
        end = self.cursor if end is None else end
        coverage = np.maximum(self.coverage[:end], 1)
        return self.embedding_sums[:, :end] / coverage[None, :, None]  # type: ignore[no-any-return]


class AccumulatorState(OutputBuffer):
    """Output buffer plus per-speaker accumulated embeddings and frame counts."""

    def __init__(self, num_speakers: int, channels: int, dim: int) -> None:
        super().__init__(num_speakers)
        self.channels = channels
        self.dim = dim
        self.sums = np.zeros((channels, num_speakers, dim))
        self.counts = np.zeros(num_speakers)

    def targets(self) -> tuple[FloatArray, FloatArray]:
        banks = np.zeros_like(self.sums)
        nonzero = self.counts > 0
        banks[:, nonzero] = self.sums[:, nonzero] / self.counts[nonzero, None]
        return banks, self.counts.copy()


@dataclass
class Increment:
    """Averaged probabilities of newly arrived frames, emitted once per block."""

    start_frame: int
    probabilities: FloatArray
    stream_time_s: float
    emitted_at: float = 0.0

    @property
    def end_frame(self) -> int:
        return self.start_frame + int(self.probabilities.shape[0])

    def to_lines(self, frame_shift_s: float = EMBEDDING_SHIFT_S) -> list[str]:
        lines = []
        for i, row in enumerate(self.probabilities):
            time = (self.start_frame + i) * frame_shift_s
            lines.extend(f"{time:.2f} {slot} {p:.4f}" for slot, p in enumerate(row))
        return lines


@dataclass
class StreamState:
    config: StreamConfig
    memory: BufferState | AccumulatorState
    active_count: int = 0
    block_index: int = 0
    feature_frames: int = 0
    closed: bool = False
    emitted: list[Increment] = field(default_factory=list)
    block_log: list[tuple[int, FloatArray]] = field(default_factory=list)

    @classmethod
    def new(cls, config: StreamConfig, channels: int, dim: int) -> "StreamState":
        memory: BufferState | AccumulatorState
        if config.strategy is Strategy.BUFFER:
            memory = BufferState(config.num_speakers, channels, dim)
        else:
            memory = AccumulatorState(config.num_speakers, channels, dim)
        return cls(config=config, memory=memory)

    @property
    def cursor(self) -> int:
        return self.memory.cursor

    @property
    def channels(self) -> int:
        return self.memory.channels

    def averaged_outputs(self) -> FloatArray:
        return self.memory.averaged()
