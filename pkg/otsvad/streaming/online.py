import logging
import math
import time
from collections.abc import Callable
from dataclasses import dataclass, field

import numpy as np

from otsvad.audio.vad import TimelineMap
from otsvad.streaming.detector import Detector
from otsvad.streaming.engine import FeatureBlock, FinalLabels, finalize, process_block
from otsvad.streaming.state import Increment, StreamConfig, StreamState
from otsvad.utils import FEATURE_SHIFT_S, SUBSAMPLING, FloatArray

logger = logging.getLogger(__name__)

Clock = Callable[[], float]


@dataclass
class StreamReport:
    increments: list[Increment]
    block_times_s: list[float]
    latencies_s: list[float] = field(default_factory=list)

    @property
    def mean_block_time_s(self) -> float:
        return float(np.mean(self.block_times_s)) if self.block_times_s else 0.0

    def rtf(self, block_shift_s: float) -> float:
        return real_time_factor(self.mean_block_time_s, block_shift_s)


def real_time_factor(block_time_s: float, block_shift_s: float) -> float:
    return block_time_s / block_shift_s


class OnlineDiarizer:
    """Push features as they arrive; a block runs whenever ``m`` seconds of new frames are ready.

    ``clock`` returns seconds and defaults to ``time.perf_counter``; the
    stream starts on the first push.
    """

    def __init__(
        self,
        detector: Detector,
        config: StreamConfig,
        channels: int = 1,
        clock: Clock | None = None,
    ) -> None:
        self.detector = detector
        self.config = config
        self.state = StreamState.new(config, channels, detector.embedding_dim)
        self.clock = clock or time.perf_counter
        self.features = np.zeros((channels, 0, 0))
        self.received = 0
        self.started_at: float | None = None
        self.block_times_s: list[float] = []
        self.latencies_s: list[float] = []

    def start(self, at: float | None = None) -> None:
        self.started_at = self.clock() if at is None else at

    def push(self, chunk: FloatArray) -> list[Increment]:
        chunk = chunk[None] if chunk.ndim == 2 else chunk
        if self.started_at is None:
            self.start()
        if not self.received:
            self.features = np.zeros((chunk.shape[0], chunk.shape[1], 0))
        self.features = np.concatenate([self.features, chunk], axis=-1)
        self.received += chunk.shape[-1]
        out = []
        shift = self.config.shift_frames
        while self.received // SUBSAMPLING - self.state.cursor >= shift:
            out.append(self._run(self.state.cursor + shift))
        return out

    def close(self) -> list[Increment]:
        total = math.ceil(self.received / SUBSAMPLING)
        if total > self.state.cursor and not self.state.closed:
            return [self._run(total)]
        return []

    def _run(self, end: int) -> Increment:
        start = max(0, end - self.config.length_frames)
        # self.features starts at absolute feature frame `offset` after trimming
        offset = self.received - self.features.shape[-1]
        block = FeatureBlock(start, self.features[..., start * SUBSAMPLING - offset : end * SUBSAMPLING - offset])
        began = self.clock()
        self.state, increment = process_block(self.state, self.detector, block)
        now = self.clock()
        self.block_times_s.append(now - began)
        increment.emitted_at = now
        assert self.started_at is not None
        self.latencies_s.append(now - self.started_at - increment.stream_time_s)
        logger.debug(
            "block index=%d start=%d end=%d compute_s=%.4f active=%d",
            self.state.block_index - 1,
            start,
            end,
            now - began,
            self.state.active_count,
        )
        self._trim(end)
        return increment

    def _trim(self, end: int) -> None:
        # keep only what the next window can reach
        keep_from = max(0, end + self.config.shift_frames - self.config.length_frames) * SUBSAMPLING
        offset = self.received - self.features.shape[-1]
        if keep_from > offset:
            self.features = self.features[..., keep_from - offset :]

    def finalize(self, timeline: TimelineMap | None = None, num_original_frames: int | None = None) -> FinalLabels:
        return finalize(self.state, timeline, num_original_frames)

    def report(self) -> StreamReport:
        return StreamReport(list(self.state.emitted), list(self.block_times_s), list(self.latencies_s))


def play(
    diarizer: OnlineDiarizer,
    features: FloatArray,
    realtime: bool = False,
    chunk_frames: int | None = None,
) -> StreamReport:
    """Push ``features`` in chunks; with ``realtime`` each chunk waits until its stream time."""
    features = features[None] if features.ndim == 2 else features
    chunk = chunk_frames or diarizer.config.shift_frames * SUBSAMPLING
    started = diarizer.clock()
    diarizer.start(started)
    for offset in range(0, features.shape[-1], chunk):
        piece = features[..., offset : offset + chunk]
        if realtime:
            due = started + (offset + piece.shape[-1]) * FEATURE_SHIFT_S
            delay = due - diarizer.clock()
            if delay > 0:
                time.sleep(delay)
        diarizer.push(piece)
    diarizer.close()
    report = diarizer.report()
    if report.block_times_s:
        logger.info(
            "stream_done blocks=%d mean_block_s=%.4f rtf=%.3f max_latency_s=%.3f",
            len(report.block_times_s),
            report.mean_block_time_s,
            report.rtf(diarizer.config.block_shift_s),
            max(report.latencies_s),
        )
    return report

