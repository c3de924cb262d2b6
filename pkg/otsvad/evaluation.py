"""Streaming inference over prepared recordings, and the scoring loops built on it."""

import itertools
import logging
from collections.abc import Sequence
from dataclasses import dataclass, replace

from otsvad.model.model import OtsVadModel
from otsvad.scoring.metrics import DiarizationScore, ScoringConfig, score_recordings
from otsvad.scoring.rttm import RttmSegment
from otsvad.streaming.detector import Detector, ModelDetector
from otsvad.streaming.online import OnlineDiarizer, StreamReport, play
from otsvad.streaming.state import BLOCK_LENGTHS_S, BLOCK_SHIFTS_S, StreamConfig
from otsvad.training.corpus import PreparedRecording
from otsvad.utils import ConfigError, FloatArray

logger = logging.getLogger(__name__)

TUNING_UPPER = (0.55, 0.6, 0.7, 0.8, 0.9)
TUNING_LOWER = (0.1, 0.2, 0.3, 0.4, 0.5)


@dataclass
class Diarization:
    recording_id: str
    segments: list[RttmSegment]
    report: StreamReport


@dataclass
class TuningResult:
    thres_upper: float
    thres_lower: float
    score: DiarizationScore


@dataclass
class SweepRow:
    block_length_s: float
    block_shift_s: float
    score: DiarizationScore


def format_sweep(rows: Sequence[SweepRow]) -> str:
    lines = [f"{'l_s':>6} {'m_s':>6} {'DER':>8} {'JER':>8}"]
    lines += [f"{r.block_length_s:6.1f} {r.block_shift_s:6.1f} {r.score.der:8.2f} {r.score.jer:8.2f}" for r in rows]
    return "\n".join(lines) + "\n"


def as_detector(model: OtsVadModel | Detector) -> Detector:
    return ModelDetector(model) if isinstance(model, OtsVadModel) else model


def select_channels(features: FloatArray, detector: Detector) -> FloatArray:
    """Features a single-channel model can take: channel 0 of a multichannel recording."""
    model = getattr(detector, "model", None)
    if isinstance(model, OtsVadModel) and model.multichannel is None and features.shape[0] > 1:
        logger.warning("mono_model_multichannel_input channels=%d using=0", features.shape[0])
        return features[:1]
    return features


def diarize(
    detector: Detector,
    recording: PreparedRecording,
    config: StreamConfig,
    realtime: bool = False,
) -> Diarization:
    if config.num_speakers != detector.num_speakers:
        msg = f"stream.num_speakers={config.num_speakers} but the model detects {detector.num_speakers} speakers"
        raise ConfigError(msg)
    features = select_channels(recording.features, detector)
    diarizer = OnlineDiarizer(detector, config, channels=features.shape[0])
    report = play(diarizer, features, realtime=realtime)
    labels = diarizer.finalize(recording.timeline, recording.num_original_frames)
    return Diarization(recording.recording_id, labels.to_segments(recording.recording_id), report)


def evaluate(
    model: OtsVadModel | Detector,
    recordings: Sequence[PreparedRecording],
    stream: StreamConfig,
    scoring: ScoringConfig | None = None,
) -> tuple[DiarizationScore, dict[str, list[RttmSegment]]]:
    detector = as_detector(model)
    hypothesis = {r.recording_id: diarize(detector, r, stream).segments for r in recordings}
    reference = {r.recording_id: r.reference for r in recordings}
    return score_recordings(reference, hypothesis, scoring), hypothesis


def validation_der(
    model: OtsVadModel,
    recordings: Sequence[PreparedRecording],
    stream: StreamConfig,
    scoring: ScoringConfig | None = None,
) -> float:
    score, _ = evaluate(model, recordings, stream, scoring)
    return score.der


def tune_thresholds(
    model: OtsVadModel | Detector,
    recordings: Sequence[PreparedRecording],
    stream: StreamConfig,
    scoring: ScoringConfig | None = None,
    uppers: Sequence[float] = TUNING_UPPER,
    lowers: Sequence[float] = TUNING_LOWER,
) -> list[TuningResult]:
    """Grid search over ``(thres_upper, thres_lower)`` at 16 s blocks and 0.8 s shift, best first."""
    detector = as_detector(model)
    base = replace(stream, block_length_s=16.0, block_shift_s=0.8)
    results = []
    for upper, lower in itertools.product(uppers, lowers):
        try:
            config = replace(base, thres_upper=upper, thres_lower=lower)
        except ConfigError:
            logger.debug("tune_skip thres_upper=%.2f thres_lower=%.2f", upper, lower)
            continue
        score, _ = evaluate(detector, recordings, config, scoring)
        logger.info("tune thres_upper=%.2f thres_lower=%.2f der=%.2f", upper, lower, score.der)
        results.append(TuningResult(upper, lower, score))
    if not results:
        msg = "No valid (thres_upper, thres_lower) pair in the tuning grid"
        raise ConfigError(msg)
    return sorted(results, key=lambda r: r.score.der)


def sweep(
    model: OtsVadModel | Detector,
    recordings: Sequence[PreparedRecording],
    stream: StreamConfig,
    scoring: ScoringConfig | None = None,
    lengths: Sequence[float] = BLOCK_LENGTHS_S,
    shifts: Sequence[float] = BLOCK_SHIFTS_S,
) -> list[SweepRow]:
    detector = as_detector(model)
    rows = []
    for length, shift in itertools.product(lengths, shifts):
        if shift > length:
            continue
        score, _ = evaluate(detector, recordings, replace(stream, block_length_s=length, block_shift_s=shift), scoring)
        logger.info(
            "sweep block_length_s=%.1f block_shift_s=%.1f der=%.2f jer=%.2f", length, shift, score.der, score.jer
        )
        rows.append(SweepRow(length, shift, score))
    return rows
