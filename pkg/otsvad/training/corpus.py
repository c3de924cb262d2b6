import logging
from collections.abc import Sequence
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from otsvad.audio.features import FeatureConfig, FeatureMatrix, compute_fbank
from otsvad.audio.signal import AudioSignal, read_wav, write_wav
from otsvad.audio.vad import TimelineMap, VadSegments, read_vad, remove_silence, vad_from_segments
from otsvad.scoring.rttm import RttmSegment, read_rttm, segments_from_activity, write_rttm
from otsvad.training.blocks import Chunk
from otsvad.training.simulate import SpeakerPool
from otsvad.utils import EMBEDDING_SHIFT_S, SUBSAMPLING, DataError, FloatArray, runs

logger = logging.getLogger(__name__)

MIN_POOL_SEGMENT_S = 0.5


@dataclass
class CorpusRecording:
    recording_id: str
    audio_path: Path
    rttm_path: Path
    vad_path: Path | None = None

    def segments(self) -> list[RttmSegment]:
        return [s for s in read_rttm(self.rttm_path) if s.recording_id == self.recording_id]

    def vad(self) -> VadSegments:
        if self.vad_path is not None:
            return read_vad(self.vad_path)
        return vad_from_segments(self.segments())


@dataclass
class PreparedRecording:
    """Speech-only features of every channel with 0.08 s labels on the same timeline."""

    recording_id: str
    features: FloatArray
    timeline: TimelineMap
    labels: FloatArray
    speaker_names: list[str]
    num_original_frames: int
    reference: list[RttmSegment]

    @property
    def channels(self) -> int:
        return int(self.features.shape[0])

    @property
    def num_frames(self) -> int:
        return int(self.features.shape[-1])


def load_corpus(directory: str | Path) -> list[CorpusRecording]:
    root = Path(directory)
    if not root.is_dir():
        msg = f"Corpus directory {root} does not exist"
        raise DataError(msg)
    recordings = []
    for wav in sorted(root.glob("*.wav")):
        rttm = wav.with_suffix(".rttm")
        if not rttm.exists():
            logger.warning("corpus_skip recording=%s reason=no_rttm", wav.stem)
            continue
        vad = wav.with_suffix(".vad")
        recordings.append(CorpusRecording(wav.stem, wav, rttm, vad if vad.exists() else None))
    if not recordings:
        msg = f"Corpus directory {root} holds no <id>.wav + <id>.rttm pairs"
        raise DataError(msg)
    return recordings


def frame_activity(
    segments: Sequence[RttmSegment],
    names: list[str],
    num_frames: int,
    features: FeatureMatrix,
) -> FloatArray:
    """Per-speaker activity of every 10 ms feature frame, by frame centre."""
    centers = features.frame_centers()[:num_frames]
    index = {name: i for i, name in enumerate(names)}
    activity = np.zeros((num_frames, len(names)), dtype=np.float32)
    for s in segments:
        activity[(centers >= s.onset_s) & (centers < s.offset_s), index[s.speaker_name]] = 1
    return activity


def downsample_labels(activity: FloatArray, factor: int = SUBSAMPLING) -> FloatArray:
    """A coarse frame is active when at least half of its ``factor`` fine frames are."""
    pad = -activity.shape[0] % factor
    padded = np.pad(activity, ((0, pad), (0, 0)))
    grouped = padded.reshape(-1, factor, activity.shape[1]).sum(axis=1)
    return (grouped * 2 >= factor).astype(np.float32)  # type: ignore[no-any-return]


def prepare_recording(recording: CorpusRecording, config: FeatureConfig | None = None) -> PreparedRecording:
    signal = read_wav(recording.audio_path)
    return prepare_signal(recording.recording_id, signal, recording.segments(), recording.vad(), config)


def prepare_signal(
    recording_id: str,
    signal: AudioSignal,
    reference: list[RttmSegment],
    vad: VadSegments,
    config: FeatureConfig | None = None,
) -> PreparedRecording:
    channels = []
    timeline = TimelineMap.empty
    full: FeatureMatrix | None = None
    for c in range(signal.channels):
        full = compute_fbank(signal.channel(c), config)
        speech, timeline = remove_silence(full, vad)
        channels.append(speech.values.astype(np.float32))
    assert full is not None
    names = sorted({s.speaker_name for s in reference})
    activity = frame_activity(reference, names, full.num_frames, full)[timeline.image]
    return PreparedRecording(
        recording_id=recording_id,
        features=np.stack(channels),
        timeline=timeline,
        labels=downsample_labels(activity),
        speaker_names=names,
        num_original_frames=full.num_frames,
        reference=reference,
    )


def pool_from_recordings(
    recordings: Sequence[tuple[AudioSignal, list[RttmSegment]]],
    min_segment_s: float = MIN_POOL_SEGMENT_S,
) -> SpeakerPool:
    """Regions where exactly one speaker talks, grouped by speaker (first channel)."""
    segments: dict[str, list[FloatArray]] = {}
    sample_rate = recordings[0][0].sample_rate if recordings else 16000
    for signal, reference in recordings:
        rate = signal.sample_rate
        names = sorted({s.speaker_name for s in reference})
        activity = np.zeros((signal.num_samples, len(names)), dtype=bool)
        for s in reference:
            activity[round(s.onset_s * rate) : round(s.offset_s * rate), names.index(s.speaker_name)] = True
        solo = activity.sum(axis=1) == 1
        for n, name in enumerate(names):
            for start, stop in runs(solo & activity[:, n]):
                if stop - start >= min_segment_s * rate:
                    segments.setdefault(name, []).append(signal.samples[0, start:stop])
    return SpeakerPool(segments, sample_rate)


def pool_from_corpus(recordings: Sequence[CorpusRecording]) -> SpeakerPool:
    return pool_from_recordings([(read_wav(r.audio_path), r.segments()) for r in recordings])


def real_chunk(
    recording: PreparedRecording,
    num_frames: int,
    num_speakers: int,
    rng: np.random.Generator,
) -> Chunk:
    """A random ``num_frames``-long window (multiple of 8) with its most active speakers."""
    total = recording.num_frames - recording.num_frames % SUBSAMPLING
    if total < num_frames:
        pad = ((0, 0), (0, 0), (0, num_frames - recording.num_frames))
        features = np.pad(recording.features, pad)[..., :num_frames]
        labels = np.pad(recording.labels, ((0, num_frames // SUBSAMPLING - recording.labels.shape[0]), (0, 0)))
        start = 0
    else:
        start = int(rng.integers((total - num_frames) // SUBSAMPLING + 1)) * SUBSAMPLING
        features = recording.features[..., start : start + num_frames]
        labels = recording.labels[start // SUBSAMPLING : (start + num_frames) // SUBSAMPLING]
    labels = labels[: num_frames // SUBSAMPLING]
    activity = labels.sum(axis=0)
    columns = [int(n) for n in np.argsort(-activity, kind="stable") if activity[n] > 0][:num_speakers]
    out = np.zeros((labels.shape[0], num_speakers), dtype=np.float32)
    out[:, : len(columns)] = labels[:, columns]
    speakers: list[str | None] = [recording.speaker_names[n] for n in columns]
    speakers += [None] * (num_speakers - len(speakers))
    return Chunk(features.astype(np.float32), out, speakers)


def write_recording(
    directory: str | Path,
    recording_id: str,
    signal: AudioSignal,
    labels: FloatArray,
    speakers: Sequence[str | None],
) -> CorpusRecording:
    """Write ``<id>.wav`` and ``<id>.rttm`` from 0.08 s labels; unnamed columns are skipped."""
    root = Path(directory)
    root.mkdir(parents=True, exist_ok=True)
    columns = [n for n, s in enumerate(speakers) if s is not None]
    segments = segments_from_activity(
        labels[:, columns] > 0,
        EMBEDDING_SHIFT_S,
        recording_id,
        [str(speakers[n]) for n in columns],
    )
    audio_path = root / f"{recording_id}.wav"
    rttm_path = root / f"{recording_id}.rttm"
    write_wav(audio_path, signal)
    rttm_path.write_text(write_rttm(segments))
    return CorpusRecording(recording_id, audio_path, rttm_path)
