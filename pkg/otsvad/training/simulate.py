import logging
from collections.abc import Collection, Sequence
from dataclasses import dataclass, field
from typing import Protocol

import numpy as np
from scipy.signal import butter, fftconvolve, lfilter

from otsvad.audio.signal import AudioSignal
from otsvad.utils import (
    EMBEDDING_SHIFT_S,
    SAMPLE_RATE,
    ConfigError,
    DataError,
    FloatArray,
    runs,
)

logger = logging.getLogger(__name__)


class Augmentation(Protocol):
    def __call__(self, samples: FloatArray, rng: np.random.Generator) -> FloatArray: ...


class AdditiveNoise:
    """Add a random excerpt of one of ``noises`` at an SNR drawn from ``snr_db``."""

    def __init__(self, noises: Sequence[FloatArray], snr_db: tuple[float, float] = (5.0, 20.0)) -> None:
        if not noises:
            msg = "AdditiveNoise needs at least one noise signal"
            raise ConfigError(msg)
        self.noises = [np.asarray(n, dtype=np.float64) for n in noises]
        self.snr_db = snr_db

    def __call__(self, samples: FloatArray, rng: np.random.Generator) -> FloatArray:
        noise = self.noises[rng.integers(len(self.noises))]
        noise = _tile(noise, samples.shape[-1], int(rng.integers(noise.shape[-1])))
        signal_power = float(np.mean(samples**2))
        noise_power = float(np.mean(noise**2))
        if signal_power == 0 or noise_power == 0:
            return samples
        snr = rng.uniform(*self.snr_db)
        scale = np.sqrt(signal_power / (noise_power * 10 ** (snr / 10)))
        return samples + scale * noise  # type: ignore[no-any-return]


class Reverberation:
    """Convolve with one of ``impulse_responses``, keeping the input length."""

    def __init__(self, impulse_responses: Sequence[FloatArray]) -> None:
        if not impulse_responses:
            msg = "Reverberation needs at least one impulse response"
            raise ConfigError(msg)
        self.impulse_responses = [np.asarray(r, dtype=np.float64) for r in impulse_responses]

    def __call__(self, samples: FloatArray, rng: np.random.Generator) -> FloatArray:
        rir = self.impulse_responses[rng.integers(len(self.impulse_responses))]
        rir = rir / (np.max(np.abs(rir)) or 1.0)
        return fftconvolve(samples, rir, axes=-1)[..., : samples.shape[-1]]  # type: ignore[no-any-return]


def _tile(samples: FloatArray, length: int, offset: int = 0) -> FloatArray:
    """``length`` samples read cyclically from ``samples`` starting at ``offset``."""
    index = (offset + np.arange(length)) % samples.shape[-1]
    return samples[..., index]  # type: ignore[no-any-return]


class SpeakerPool:
    """Single-speaker, non-overlapped speech grouped by speaker."""

    def __init__(self, segments: dict[str, list[FloatArray]], sample_rate: int = SAMPLE_RATE) -> None:
        self.segments = {
            name: [np.asarray(s, dtype=np.float64) for s in parts] for name, parts in segments.items() if parts
        }
        self.sample_rate = sample_rate

    @property
    def speakers(self) -> list[str]:
        return sorted(self.segments)

    def __len__(self) -> int:
        return len(self.segments)

    def stream(self, speaker: str, num_samples: int, rng: np.random.Generator) -> FloatArray:
        """Contiguous audio of ``speaker``, tiled through the pool when it runs short."""
        if speaker not in self.segments:
            msg = f"Speaker {speaker!r} is not in the simulation pool"
            raise DataError(msg)
        parts = self.segments[speaker]
        first = int(rng.integers(len(parts)))
        ordered = np.concatenate(parts[first:] + parts[:first])
        return _tile(ordered, num_samples, int(rng.integers(parts[first].shape[-1])))


@dataclass
class SimulationRecipe:
    label_sources: list[FloatArray]
    pool: SpeakerPool
    num_speakers: int = 4
    augmentations: list[Augmentation] = field(default_factory=list)
    frame_shift_s: float = EMBEDDING_SHIFT_S

    def __post_init__(self) -> None:
        if not len(self.pool):
            msg = "Simulation pool is empty"
            raise DataError(msg)
        if not self.label_sources:
            msg = "Simulation has no label sources"
            raise DataError(msg)

    @property
    def samples_per_frame(self) -> int:
        return round(self.frame_shift_s * self.pool.sample_rate)


@dataclass
class SimulatedMixture:
    audio: AudioSignal
    labels: FloatArray
    speakers: list[str | None]


def choose_label_segment(recipe: SimulationRecipe, num_frames: int, rng: np.random.Generator) -> FloatArray:
    """A random ``num_frames``-long slice of a label source, padded to ``num_speakers`` columns."""
    source = recipe.label_sources[rng.integers(len(recipe.label_sources))]
    if source.shape[0] > num_frames:
        start = int(rng.integers(source.shape[0] - num_frames + 1))
        segment = source[start : start + num_frames]
    else:
        segment = np.pad(source, ((0, num_frames - source.shape[0]), (0, 0)))
    active = [n for n in range(segment.shape[1]) if segment[:, n].any()]
    silent = [n for n in range(segment.shape[1]) if not segment[:, n].any()]
    columns = (active + silent)[: recipe.num_speakers]
    labels = np.zeros((num_frames, recipe.num_speakers), dtype=np.float32)
    labels[:, : len(columns)] = segment[:, columns]
    return labels


def simulate_mixture(
    recipe: SimulationRecipe,
    num_frames: int,
    rng: np.random.Generator,
    labels: FloatArray | None = None,
    speakers: Sequence[str | None] | None = None,
    exclude: Collection[str] = (),
) -> SimulatedMixture:
    """Fill every active run of each label column with audio of one pool speaker and sum.

    ``labels`` overrides the randomly chosen label slice; ``speakers`` pins
    pool speakers to columns (``None`` entries draw a fresh speaker).
    Fresh draws skip ``exclude`` until the pool runs out.
    """
    if labels is None:
        labels = choose_label_segment(recipe, num_frames, rng)
    hop = recipe.samples_per_frame
    mixture = np.zeros(labels.shape[0] * hop)
    pinned = list(speakers or [])
    pinned += [None] * (labels.shape[1] - len(pinned))
    taken = {s for s in pinned if s is not None} | set(exclude)
    free = [s for s in recipe.pool.speakers if s not in taken]
    order = rng.permutation(len(free))
    fresh = iter([free[i] for i in order])

    assigned: list[str | None] = []
    for n in range(labels.shape[1]):
        spans = runs(labels[:, n] > 0)
        name = pinned[n]
        if spans and name is None:
            name = next(fresh, None)
            if name is None:
                spare = [s for s in recipe.pool.speakers if s not in exclude] or recipe.pool.speakers
                name = spare[rng.integers(len(spare))]
                logger.debug("pool_reuse speaker=%s column=%d", name, n)
        assigned.append(name if spans else pinned[n])
        if not spans or name is None:
            continue
        total = sum(stop - start for start, stop in spans) * hop
        audio = recipe.pool.stream(name, total, rng)
        used = 0
        for start, stop in spans:
            length = (stop - start) * hop
            mixture[start * hop : stop * hop] += audio[used : used + length]
            used += length

    for augment in recipe.augmentations:
        mixture = augment(mixture, rng)
    return SimulatedMixture(AudioSignal(mixture, recipe.pool.sample_rate), labels.astype(np.float32), assigned)


def random_conversation_labels(
    num_frames: int,
    num_speakers: int,
    rng: np.random.Generator,
    mean_turn_frames: float = 40.0,
    overlap_prob: float = 0.15,
) -> FloatArray:
    """Turn-taking labels: one speaker per turn, occasionally a second one talking over."""
    labels = np.zeros((num_frames, num_speakers), dtype=np.float32)
    t = 0
    current = int(rng.integers(num_speakers))
    while t < num_frames:
        length = 1 + int(rng.geometric(1.0 / mean_turn_frames))
        labels[t : t + length, current] = 1
        if num_speakers > 1 and rng.random() < overlap_prob:
            other = int((current + rng.integers(1, num_speakers)) % num_speakers)
            span = max(1, length // 3)
            offset = int(rng.integers(max(1, length - span + 1)))
            labels[t + offset : t + offset + span, other] = 1
        t += length
        if num_speakers > 1:
            current = int((current + rng.integers(1, num_speakers)) % num_speakers)
    return labels


def synthetic_speaker_pool(
    num_speakers: int,
    rng: np.random.Generator,
    segments_per_speaker: int = 8,
    segment_s: float = 4.0,
    sample_rate: int = SAMPLE_RATE,
) -> SpeakerPool:
    """Band-limited noise "speakers": each has its own fixed pass band and syllable-rate envelope."""
    edges = np.geomspace(150.0, 0.9 * sample_rate / 2, num_speakers + 1)
    length = round(segment_s * sample_rate)
    time = np.arange(length) / sample_rate
    segments: dict[str, list[FloatArray]] = {}
    for n in range(num_speakers):
        b, a = butter(4, [edges[n], edges[n + 1]], btype="bandpass", fs=sample_rate)
        rate = 3.0 + n
        parts = []
        for _ in range(segments_per_speaker):
            noise = lfilter(b, a, rng.standard_normal(length))
            envelope = 0.6 + 0.4 * np.sin(2 * np.pi * rate * time + rng.uniform(0, 2 * np.pi))
            part = noise * envelope
            parts.append(0.1 * part / (np.std(part) or 1.0))
        segments[f"synth{n}"] = parts
    return SpeakerPool(segments, sample_rate)


def simulate_conversations(
    pool: SpeakerPool,
    count: int,
    num_frames: int,
    num_speakers: int,
    rng: np.random.Generator,
    augmentations: Sequence[Augmentation] = (),
    mean_turn_frames: float = 40.0,
    overlap_prob: float = 0.15,
) -> list[SimulatedMixture]:
    """``count`` turn-taking conversations voiced by pool speakers, peak-limited to 0.9."""
    talkers = min(num_speakers, len(pool))
    out = []
    for _ in range(count):
        labels = np.zeros((num_frames, num_speakers), dtype=np.float32)
        labels[:, :talkers] = random_conversation_labels(num_frames, talkers, rng, mean_turn_frames, overlap_prob)
        recipe = SimulationRecipe([labels], pool, num_speakers, list(augmentations))
        mixture = simulate_mixture(recipe, num_frames, rng, labels=labels)
        peak = float(np.max(np.abs(mixture.audio.samples)))
        if peak > 0.9:
            mixture.audio = AudioSignal(mixture.audio.samples * (0.9 / peak), mixture.audio.sample_rate)
        out.append(mixture)
    return out
