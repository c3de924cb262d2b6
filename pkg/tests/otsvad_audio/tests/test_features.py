import numpy as np
import pytest

from otsvad.audio import (
    AudioSignal,
    EmptyInputError,
    FeatureConfig,
    InvalidInputError,
    SampleRateError,
    compute_fbank,
    compute_multichannel_fbank,
    ensure_sample_rate,
)


def tone(freq, seconds=1.0, rate=16000):
    t = np.arange(round(seconds * rate)) / rate
    return AudioSignal(0.5 * np.sin(2 * np.pi * freq * t), rate)


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + f / 700.0)


@pytest.mark.parametrize(
    ("num_samples", "frames"),
    [
        (16000, 98),
        (400, 1),
        (559, 1),
        (560, 2),
        (32000, 198),
    ],
)
def test_frame_count(num_samples, frames):
    signal = AudioSignal(np.zeros(num_samples), 16000)
    assert compute_fbank(signal).values.shape == (80, frames)


def test_silence_is_log_floor():
    values = compute_fbank(AudioSignal(np.zeros(16000), 16000)).values
    assert np.all(values == np.log(1e-10))


def test_tone_peaks_in_its_mel_bin():
    config = FeatureConfig()
    # independent htk mel centres between 20 Hz and 8 kHz
    points = np.linspace(hz_to_mel(config.low_freq_hz), hz_to_mel(config.high_freq_hz), config.num_mel_bins + 2)
    centres = points[1:-1]
    expected = int(np.argmin(np.abs(centres - hz_to_mel(1000.0))))
    values = compute_fbank(tone(1000.0), config).values
    assert np.all(values.argmax(axis=0) == expected)


def test_deterministic():
    signal = tone(440.0)
    assert np.array_equal(compute_fbank(signal).values, compute_fbank(signal).values)


def test_shorter_than_one_frame():
    with pytest.raises(EmptyInputError):
        compute_fbank(AudioSignal(np.zeros(399), 16000))


def test_nan_samples_rejected():
    samples = np.zeros(16000)
    samples[10] = np.nan
    with pytest.raises(InvalidInputError):
        AudioSignal(samples, 16000)


def test_multichannel_input_needs_per_channel_call():
    signal = AudioSignal(np.zeros((2, 16000)), 16000)
    with pytest.raises(InvalidInputError):
        compute_fbank(signal)
    assert [m.values.shape for m in compute_multichannel_fbank(signal)] == [(80, 98), (80, 98)]


def test_resampled_to_16k():
    signal = AudioSignal(np.zeros(8000), 8000)
    assert ensure_sample_rate(signal).sample_rate == 16000
    assert ensure_sample_rate(signal).num_samples == 16000
    assert compute_fbank(signal).num_frames == 98


def test_resampling_disabled():
    with pytest.raises(SampleRateError):
        compute_fbank(AudioSignal(np.zeros(8000), 8000), FeatureConfig(allow_resample=False))


def test_frame_centres():
    matrix = compute_fbank(AudioSignal(np.zeros(1600), 16000))
    assert matrix.frame_centers()[:3] == pytest.approx([0.0125, 0.0225, 0.0325])
