from dataclasses import dataclass
from functools import lru_cache

import librosa
import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.signal import get_window

from otsvad.audio.signal import (
    AudioSignal,
    EmptyInputError,
    InvalidInputError,
    ensure_sample_rate,
)
from otsvad.utils import SAMPLE_RATE, ConfigError, FloatArray


@dataclass
class FeatureConfig:
    sample_rate: int = SAMPLE_RATE
    num_mel_bins: int = 80
    frame_length_s: float = 0.025
    frame_shift_s: float = 0.01
    n_fft: int = 512
    window: str = "hamming"
    low_freq_hz: float = 20.0
    high_freq_hz: float = 8000.0
    log_floor: float = 1e-10
    allow_resample: bool = True

    def __post_init__(self) -> None:
        if self.frame_samples > self.n_fft:
            msg = f"features.n_fft={self.n_fft} is shorter than a frame"
            raise ConfigError(msg)
        if self.frame_shift_s <= 0 or self.frame_length_s <= 0:
            msg = "features.frame_length_s and features.frame_shift_s must be positive"
            raise ConfigError(msg)

    @property
    def frame_samples(self) -> int:
        return round(self.sample_rate * self.frame_length_s)

    @property
    def shift_samples(self) -> int:
        return round(self.sample_rate * self.frame_shift_s)


class FeatureMatrix:
    """Log-Mel energies stored ``H x L`` (mel bins by frames)."""

    def __init__(
        self,
        values: FloatArray,
        frame_shift_s: float = 0.01,
        frame_length_s: float = 0.025,
    ) -> None:
        self.values = values
        self.frame_shift_s = frame_shift_s
        self.frame_length_s = frame_length_s

    @property
    def num_bins(self) -> int:
        return int(self.values.shape[0])

    @property
    def num_frames(self) -> int:
        return int(self.values.shape[1])

    @property
    def duration_s(self) -> float:
        if not self.num_frames:
            return 0.0
        return (self.num_frames - 1) * self.frame_shift_s + self.frame_length_s

    def frame_centers(self) -> FloatArray:
        return np.arange(self.num_frames) * self.frame_shift_s + self.frame_length_s / 2

    def take(self, indices: np.ndarray) -> "FeatureMatrix":
        return FeatureMatrix(self.values[:, indices], self.frame_shift_s, self.frame_length_s)


_FilterKey = tuple[int, int, int, float, float]


@lru_cache(maxsize=8)
def mel_filterbank(key: _FilterKey) -> FloatArray:
    sample_rate, n_fft, n_mels, fmin, fmax = key
    filters: FloatArray = librosa.filters.mel(
        sr=sample_rate,
        n_fft=n_fft,
        n_mels=n_mels,
        fmin=fmin,
        fmax=fmax,
        htk=True,
        norm=None,
        dtype=np.float64,
    )
    return filters


def compute_fbank(signal: AudioSignal, config: FeatureConfig | None = None) -> FeatureMatrix:
    config = config or FeatureConfig()
    if signal.channels != 1:
        msg = f"compute_fbank expects a single channel, got {signal.channels}"
        raise InvalidInputError(msg)
    signal = ensure_sample_rate(signal, config.sample_rate, config.allow_resample)
    samples = signal.samples[0]
    if samples.shape[0] < config.frame_samples:
        msg = f"Signal of {samples.shape[0]} samples is shorter than one frame"
        raise EmptyInputError(msg)

    frames = sliding_window_view(samples, config.frame_samples)[:: config.shift_samples]
    window = get_window(config.window, config.frame_samples, fftbins=True)
    spectrum = np.fft.rfft(frames * window, n=config.n_fft, axis=1)
    power = spectrum.real**2 + spectrum.imag**2
    key = (
        config.sample_rate,
        config.n_fft,
        config.num_mel_bins,
        config.low_freq_hz,
        config.high_freq_hz,
    )
    energies = power @ mel_filterbank(key).T
    values = np.log(np.maximum(energies, config.log_floor)).T
    return FeatureMatrix(values, config.frame_shift_s, config.frame_length_s)


def compute_multichannel_fbank(
    signal: AudioSignal,
    config: FeatureConfig | None = None,
) -> list[FeatureMatrix]:
    return [compute_fbank(signal.channel(c), config) for c in range(signal.channels)]
