import logging
import math
from pathlib import Path

import numpy as np
import soundfile as sf
from scipy.signal import resample_poly

from otsvad.utils import SAMPLE_RATE, DataError, FloatArray

logger = logging.getLogger(__name__)


class EmptyInputError(DataError):
    pass


class InvalidInputError(DataError):
    pass


class SampleRateError(DataError):
    pass


class AudioSignal:
    """PCM samples laid out channel-major (``C x num_samples``) in [-1, 1]."""

    def __init__(self, samples: FloatArray, sample_rate: int) -> None:
        samples = np.asarray(samples, dtype=np.float64)
        if samples.ndim == 1:
            samples = samples[None, :]
        if samples.ndim != 2 or samples.shape[0] < 1:
            msg = f"Expected C x num_samples audio, got shape {samples.shape}"
            raise InvalidInputError(msg)
        if sample_rate <= 0:
            msg = f"Sample rate must be positive, got {sample_rate}"
            raise InvalidInputError(msg)
        if not np.all(np.isfinite(samples)):
            msg = "Audio contains NaN or infinite samples"
            raise InvalidInputError(msg)
        self.samples = samples
        self.sample_rate = sample_rate

    @property
    def channels(self) -> int:
        return int(self.samples.shape[0])

    @property
    def num_samples(self) -> int:
        return int(self.samples.shape[1])

    @property
    def duration_s(self) -> float:
        return self.num_samples / self.sample_rate

    def channel(self, index: int) -> "AudioSignal":
        return AudioSignal(self.samples[index], self.sample_rate)

    def duplicate(self, channels: int) -> "AudioSignal":
        return AudioSignal(np.repeat(self.samples[:1], channels, axis=0), self.sample_rate)

    def __repr__(self) -> str:
        return (
            f"AudioSignal(channels={self.channels}, samples={self.num_samples}, "
            f"sample_rate={self.sample_rate})"
        )


def read_wav(path: str | Path) -> AudioSignal:
    try:
        data, sample_rate = sf.read(str(path), dtype="float64", always_2d=True)
    except (RuntimeError, sf.LibsndfileError) as e:
        msg = f"Cannot read audio file {path}: {e}"
        raise DataError(msg) from e
    return AudioSignal(data.T, int(sample_rate))


def write_wav(path: str | Path, signal: AudioSignal, subtype: str = "PCM_16") -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    clipped = np.clip(signal.samples.T, -1.0, 1.0)
    sf.write(str(path), clipped, signal.sample_rate, subtype=subtype)


def ensure_sample_rate(
    signal: AudioSignal,
    target: int = SAMPLE_RATE,
    allow_resample: bool = True,
) -> AudioSignal:
    if signal.sample_rate == target:
        return signal
    if not allow_resample:
        msg = f"Expected {target} Hz audio, got {signal.sample_rate} Hz"
        raise SampleRateError(msg)
    g = math.gcd(signal.sample_rate, target)
    up, down = target // g, signal.sample_rate // g
    logger.info("resample from_hz=%d to_hz=%d", signal.sample_rate, target)
    samples = resample_poly(signal.samples, up, down, axis=1)
    return AudioSignal(samples, target)
