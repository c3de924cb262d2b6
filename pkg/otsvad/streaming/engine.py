import logging
import math
from dataclasses import dataclass

import numpy as np

from otsvad.audio.vad import TimelineMap
from otsvad.scoring.rttm import RttmSegment, segments_from_activity
from otsvad.streaming.detector import Detector
from otsvad.streaming.state import (
    AccumulatorState,
    BufferState,
    Increment,
    StreamError,
    StreamState,
)
from otsvad.utils import (
    EMBEDDING_SHIFT_S,
    FEATURE_SHIFT_S,
    SUBSAMPLING,
    BoolArray,
    FloatArray,
    masked_mean,
)

logger = logging.getLogger(__name__)


@dataclass
class FeatureBlock:
    """Features of one block window starting at embedding frame ``start_frame``."""

    start_frame: int
    features: FloatArray

    def __post_init__(self) -> None:
        if self.features.ndim == 2:
            self.features = self.features[None]

    @property
    def num_frames(self) -> int:
        return math.ceil(self.features.shape[-1] / SUBSAMPLING)

    @property
    def end_frame(self) -> int:
        return self.start_frame + self.num_frames


class FinalLabels:
    """Binary ``L x N`` activity on the original 10 ms feature timeline."""

    def __init__(self, values: BoolArray, frame_shift_s: float = FEATURE_SHIFT_S) -> None:
        self.values = values
        self.frame_shift_s = frame_shift_s

    @property
    def num_speakers(self) -> int:
        return int(self.values.shape[1])

    def to_segments(self, recording_id: str, speaker_names: list[str] | None = None) -> list[RttmSegment]:
        return segments_from_activity(self.values, self.frame_shift_s, recording_id, speaker_names)


def _as_channels(frames: FloatArray) -> FloatArray:
    return frames[None] if frames.ndim == 2 else frames


def init_first_block(state: StreamState, frames: FloatArray) -> StreamState:
    """Bind slot 0 to every frame of the first block; other slots stay 0."""
    if state.block_index or state.cursor:
        msg = "init_first_block called on a stream that already holds a block"
        raise StreamError(msg)
    frames = _as_channels(frames)
    t0 = frames.shape[1]
    outputs = np.zeros((t0, state.config.num_speakers))
    outputs[:, 0] = 1.0
    _write_block(state, 0, frames, outputs, new_from=0)
    state.active_count = 1
    logger.info("speaker_activated slot=0 frame=0")
    return state


def targets_from_buffer(state: BufferState, thres_upper: float) -> tuple[FloatArray, FloatArray]:
    """Per-channel masked means of buffered embeddings over frames at or above ``thres_upper``.

    Returns ``C x N x D`` banks and the ``N`` selected-frame counts; speakers
    with no selected frame get zero rows.
    """
    end = state.cursor
    selected = (state.averaged(0, end) >= thres_upper) & state.eligible[:end]
    weights = selected.astype(np.float64)
    embeddings = state.embeddings(end)
    banks = np.zeros((state.channels, state.num_speakers, state.dim))
    counts = weights.sum(axis=0)
    for c in range(state.channels):
        banks[c], _ = masked_mean(weights, embeddings[c])
    return banks, counts


def accumulate_update(state: AccumulatorState, frames: FloatArray, binarized: FloatArray) -> AccumulatorState:
    frames = _as_channels(frames)
    weights = np.asarray(binarized, dtype=np.float64)
    if frames.shape[1] != weights.shape[0]:
        msg = f"accumulate_update: {frames.shape[1]} frames but {weights.shape[0]} label rows"
        raise StreamError(msg)
    state.sums += np.einsum("tn,ctd->cnd", weights, frames)
    state.counts += weights.sum(axis=0)
    return state


def detect_new_speaker(state: StreamState, outputs: FloatArray, tail: int) -> tuple[StreamState, FloatArray]:
    """Activate the next slot when every active speaker is below ``thres_lower`` over the tail."""
    config = state.config
    active = state.active_count
    if active >= config.num_speakers or tail <= 0:
        return state, outputs
    if np.all(outputs[-tail:, :active] < config.thres_lower):
        outputs = outputs.copy()
        outputs[-tail:, active] = config.thres_upper
        state.active_count = active + 1
        logger.info(
            "speaker_activated slot=%d frame=%d time_s=%.2f",
            active,
            state.cursor,
            state.cursor * EMBEDDING_SHIFT_S,
        )
    return state, outputs


def prune_buffer(state: BufferState, k: int, finalized_until: int | None = None) -> BufferState:
    """Keep, per speaker, the ``k`` finalized frames with the highest buffered probability."""
    if k <= 0:
        return state
    end = state.cursor if finalized_until is None else min(finalized_until, state.cursor)
    if end <= 0:
        return state
    probs = state.averaged(0, end)
    for n in range(state.num_speakers):
        candidates = np.flatnonzero(state.eligible[:end, n])
        if candidates.size <= k:
            continue
        order = np.argsort(-probs[candidates, n], kind="stable")
        state.eligible[candidates[order[k:]], n] = False
    return state


def _write_block(
    state: StreamState,
    start: int,
    frames: FloatArray,
    outputs: FloatArray,
    new_from: int,
) -> None:
    memory = state.memory
    end = start + outputs.shape[0]
    memory.add_outputs(start, outputs)
    if isinstance(memory, BufferState):
        memory.add_embeddings(start, frames)
        memory.eligible[new_from:end] = True
    else:
        offset = new_from - start
        binarized = outputs[offset:] >= state.config.thres_upper
        accumulate_update(memory, frames[:, offset:], binarized)
    memory.cursor = end
    if state.config.record_blocks:
        state.block_log.append((start, outputs.copy()))


def _check_block(state: StreamState, block: FeatureBlock) -> None:
    config = state.config
    if state.closed:
        msg = "Stream already received its final partial block"
        raise StreamError(msg)
    end = block.end_frame
    if end <= state.cursor:
        msg = f"Block ending at frame {end} repeats frames already processed (cursor {state.cursor})"
        raise StreamError(msg)
    if block.start_frame != max(0, end - config.length_frames):
        msg = (
            f"Block window [{block.start_frame}, {end}) is out of order; "
            f"expected start {max(0, end - config.length_frames)}"
        )
        raise StreamError(msg)
    if end - state.cursor > config.shift_frames:
        msg = f"Block adds {end - state.cursor} frames, more than the shift of {config.shift_frames}"
        raise StreamError(msg)


def current_targets(state: StreamState) -> tuple[FloatArray, FloatArray]:
    memory = state.memory
    if isinstance(memory, BufferState):
        return targets_from_buffer(memory, state.config.thres_upper)
    return memory.targets()


def process_block(state: StreamState, detector: Detector, block: FeatureBlock) -> tuple[StreamState, Increment]:
    _check_block(state, block)
    config = state.config
    frames = _as_channels(detector.embed(block.features))
    start, end = block.start_frame, block.end_frame
    if frames.shape[1] != end - start:
        msg = f"Detector returned {frames.shape[1]} frames for a {end - start}-frame window"
        raise StreamError(msg)
    new_from = state.cursor
    state.feature_frames = max(state.feature_frames, start * SUBSAMPLING + block.features.shape[-1])
    if end - new_from < config.shift_frames:
        state.closed = True

    if state.block_index == 0:
        init_first_block(state, frames)
    else:
        banks, counts = current_targets(state)
        outputs = np.asarray(detector.detect(banks, frames), dtype=np.float64)
        live = np.zeros(config.num_speakers, dtype=bool)
        live[: state.active_count] = True
        outputs[:, ~(live & (counts > 0))] = 0.0
        state, outputs = detect_new_speaker(state, outputs, min(config.shift_frames, outputs.shape[0]))
        _write_block(state, start, frames, outputs, new_from)
        memory = state.memory
        if isinstance(memory, BufferState) and config.buffer_prune_k:
            prune_buffer(memory, config.buffer_prune_k, end + config.shift_frames - config.length_frames)

    state.block_index += 1
    increment = Increment(
        start_frame=new_from,
        probabilities=state.memory.averaged(new_from, end),
        stream_time_s=end * EMBEDDING_SHIFT_S,
    )
    state.emitted.append(increment)
    return state, increment


def finalize(
    state: StreamState,
    timeline: TimelineMap | None = None,
    num_original_frames: int | None = None,
) -> FinalLabels:
    """Binarize the averaged buffer and place it on the original 10 ms timeline."""
    binary = state.averaged_outputs() >= state.config.output_threshold
    expanded = np.repeat(binary, SUBSAMPLING, axis=0)
    if state.feature_frames:
        expanded = expanded[: state.feature_frames]
    if timeline is None:
        timeline = TimelineMap.identity(expanded.shape[0])
    if len(timeline) < expanded.shape[0]:
        msg = f"Timeline covers {len(timeline)} frames but the stream produced {expanded.shape[0]}"
        raise StreamError(msg)
    positions = timeline.project_many(np.arange(expanded.shape[0]))
    if num_original_frames is not None:
        total = num_original_frames
    else:
        total = int(positions[-1]) + 1 if positions.size else 0
    labels = np.zeros((total, state.config.num_speakers), dtype=bool)
    labels[positions] = expanded
    return FinalLabels(labels)


def block_windows(num_frames: int, length_frames: int, shift_frames: int) -> list[tuple[int, int]]:
    """``(start, end)`` embedding-frame windows: growth by ``shift`` up to ``length``, then sliding."""
    windows = []
    end = 0
    while end < num_frames:
        end = min(end + shift_frames, num_frames)
        windows.append((max(0, end - length_frames), end))
    return windows


def run_stream(
    detector: Detector,
    features: FloatArray,
    state: StreamState,
) -> StreamState:
    """Feed a complete ``C x H x L`` feature matrix through the engine block by block."""
    features = features[None] if features.ndim == 2 else features
    total = math.ceil(features.shape[-1] / SUBSAMPLING)
    config = state.config
    for start, end in block_windows(total, config.length_frames, config.shift_frames):
        block = FeatureBlock(start, features[..., start * SUBSAMPLING : end * SUBSAMPLING])
        state, _ = process_block(state, detector, block)
    return state

