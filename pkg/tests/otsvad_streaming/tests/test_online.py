import itertools
import time

import numpy as np
import pytest

from otsvad.streaming import (
    OnlineDiarizer,
    StreamConfig,
    StreamState,
    finalize,
    play,
    real_time_factor,
    run_stream,
)
from otsvad.testing import OneHotDetector, speaker_features, turns

CONFIG = StreamConfig(num_speakers=3, block_length_s=2.0, block_shift_s=0.4)


def features():
    # ends on a partial embedding frame
    return speaker_features(turns((0, 40), (1, 30), (2, 23)))[..., :-3]


def ticking_clock(step=0.01):
    ticks = itertools.count(0.0, step)
    return lambda: next(ticks)


@pytest.mark.parametrize("chunk", [1, 13, 40, 1000])
def test_pushes_match_batch_stream(chunk):
    offline = run_stream(OneHotDetector(3), features(), StreamState.new(CONFIG, 1, 8))
    diarizer = OnlineDiarizer(OneHotDetector(3), CONFIG, clock=ticking_clock())
    data = features()
    for offset in range(0, data.shape[-1], chunk):
        diarizer.push(data[..., offset : offset + chunk])
    diarizer.close()
    online = diarizer.state
    assert [i.start_frame for i in online.emitted] == [i.start_frame for i in offline.emitted]
    assert np.allclose(online.averaged_outputs(), offline.averaged_outputs())
    assert online.active_count == offline.active_count == 3
    assert np.array_equal(diarizer.finalize().values, finalize(offline).values)


def test_push_emits_once_per_shift():
    diarizer = OnlineDiarizer(OneHotDetector(3), CONFIG, clock=ticking_clock())
    assert diarizer.push(speaker_features([0] * 4)) == []
    increments = diarizer.push(speaker_features([0] * 7))
    assert [(i.start_frame, i.end_frame) for i in increments] == [(0, 5), (5, 10)]
    (last,) = diarizer.close()
    assert (last.start_frame, last.end_frame) == (10, 11)
    assert diarizer.state.closed
    assert diarizer.close() == []


def test_features_are_trimmed_to_the_window():
    diarizer = OnlineDiarizer(OneHotDetector(3), CONFIG, clock=ticking_clock())
    diarizer.push(speaker_features([0] * 100))
    assert diarizer.features.shape[-1] <= CONFIG.length_frames * 8


def test_report_timings():
    diarizer = OnlineDiarizer(OneHotDetector(3), CONFIG, clock=ticking_clock(0.01))
    report = play(diarizer, features())
    assert len(report.increments) == len(report.block_times_s) == 19
    assert report.mean_block_time_s == pytest.approx(0.01)
    assert report.rtf(CONFIG.block_shift_s) == pytest.approx(0.025)
    assert all(i.emitted_at > 0 for i in report.increments)


@pytest.mark.parametrize(("block_time", "rtf"), [(0.064, 0.16), (0.186, 0.465), (0.4, 1.0)])
def test_real_time_factor(block_time, rtf):
    assert real_time_factor(block_time, 0.4) == pytest.approx(rtf)


@pytest.mark.slow
def test_realtime_latency_below_shift():
    data = speaker_features(turns((0, 50), (1, 50)))
    diarizer = OnlineDiarizer(OneHotDetector(3), CONFIG, clock=time.perf_counter)
    report = play(diarizer, data, realtime=True)
    assert len(report.latencies_s) == 20
    assert max(report.latencies_s) < CONFIG.block_shift_s
    assert report.rtf(CONFIG.block_shift_s) < 1.0


@pytest.mark.slow
def test_five_minute_playback_meets_latency_contract():
    config = StreamConfig(num_speakers=3, block_length_s=16.0, block_shift_s=0.4)
    data = speaker_features(turns((0, 1250), (1, 1250), (2, 1250)))
    diarizer = OnlineDiarizer(OneHotDetector(3), config, clock=time.perf_counter)
    report = play(diarizer, data, realtime=True)
    assert len(report.latencies_s) == 750
    assert report.increments[-1].stream_time_s == pytest.approx(300.0)
    for latency, compute in zip(report.latencies_s, report.block_times_s, strict=True):
        assert latency <= config.block_shift_s + compute
