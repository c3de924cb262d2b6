import logging

import numpy as np
import pytest

from otsvad.audio import TimelineMap
from otsvad.model import OtsVadModel
from otsvad.streaming import (
    FeatureBlock,
    ModelDetector,
    StreamConfig,
    StreamError,
    StreamState,
    Strategy,
    block_windows,
    finalize,
    init_first_block,
    process_block,
    run_stream,
)
from otsvad.testing import (
    OneHotDetector,
    ScriptedDetector,
    index_features,
    speaker_features,
    tiny_model_config,
    turns,
)


def stream(detector, features, **config):
    config = StreamConfig(**{"num_speakers": 4, **config})
    state = StreamState.new(config, features.shape[0], detector.embedding_dim)
    return run_stream(detector, features, state)


def test_block_windows():
    assert block_windows(12, 10, 5) == [(0, 5), (0, 10), (2, 12)]
    assert block_windows(0, 10, 5) == []
    assert block_windows(3, 10, 5) == [(0, 3)]


def test_first_block_binds_slot_zero():
    detector = OneHotDetector()
    state = stream(detector, speaker_features(turns((0, 5))), block_length_s=2.0, block_shift_s=0.4)
    assert state.active_count == 1
    assert state.averaged_outputs().tolist() == [[1.0, 0.0, 0.0, 0.0]] * 5
    assert detector.banks == []
    assert state.emitted[0].start_frame == 0
    assert state.emitted[0].to_lines()[:2] == ["0.00 0 1.0000", "0.00 1 0.0000"]


def test_second_speaker_activates_when_they_start(caplog):
    features = speaker_features(turns((0, 375), (1, 200)))
    with caplog.at_level(logging.INFO):
        state = stream(OneHotDetector(), features, block_length_s=16.0, block_shift_s=0.4)
    assert state.active_count == 2
    assert "speaker_activated slot=1 frame=375 time_s=30.00" in caplog.text
    activation = next(i for i in state.emitted if i.start_frame == 375)
    assert activation.probabilities[:, 1].tolist() == pytest.approx([0.6] * 5)
    assert activation.probabilities[:, 0].tolist() == pytest.approx([0.05] * 5)

    labels = finalize(state).values
    assert labels.shape == (4600, 4)
    assert labels[:3000, 0].all() and not labels[3000:, 0].any()
    assert labels[3000:, 1].all() and not labels[:3000, 1].any()
    assert not labels[:, 2:].any()
    segments = finalize(state).to_segments("rec", ["a", "b", "c", "d"])
    assert [(s.speaker_name, s.onset_s, s.duration_s) for s in segments] == [
        ("a", 0.0, pytest.approx(30.0)),
        ("b", pytest.approx(30.0), pytest.approx(16.0)),
    ]


def test_no_more_slots_than_configured():
    features = speaker_features(turns((0, 10), (1, 10), (2, 10)))
    state = stream(OneHotDetector(num_speakers=2), features, num_speakers=2, block_length_s=2.0, block_shift_s=0.4)
    assert state.active_count == 2


def test_strategies_agree_without_overlap():
    features = speaker_features(turns((0, 30), (1, 20), (0, 10), (2, 15)))
    runs = {}
    for strategy in Strategy:
        detector = OneHotDetector()
        state = stream(
            detector,
            features,
            block_length_s=0.4,
            block_shift_s=0.4,
            strategy=strategy,
            buffer_prune_k=0,
        )
        runs[strategy] = (state.averaged_outputs(), detector.banks, state.active_count)
    buffer, accumulate = runs[Strategy.BUFFER], runs[Strategy.ACCUMULATE]
    assert np.allclose(buffer[0], accumulate[0], atol=1e-12)
    assert all(np.allclose(a, b, atol=1e-12) for a, b in zip(buffer[1], accumulate[1], strict=True))
    assert buffer[2] == accumulate[2] == 3


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_strategies_agree_over_random_stream(seed):
    rng = np.random.default_rng(seed)
    speakers = []
    while len(speakers) < 500:
        speakers += [int(rng.integers(4))] * int(rng.integers(3, 40))
    features = speaker_features(speakers[:500])
    rows = features[:, :8]
    features[:, :8] = rows * rng.uniform(0.5, 1.5, rows.shape) + 0.1 * rng.random(rows.shape)
    runs = {}
    for strategy in Strategy:
        detector = OneHotDetector()
        state = stream(
            detector,
            features,
            block_length_s=0.4,
            block_shift_s=0.4,
            strategy=strategy,
            buffer_prune_k=0,
        )
        runs[strategy] = (state.averaged_outputs(), detector.banks, state.active_count, state.block_index)
    buffer, accumulate = runs[Strategy.BUFFER], runs[Strategy.ACCUMULATE]
    assert buffer[3] == accumulate[3] == 100
    assert buffer[2] == accumulate[2]
    assert np.allclose(buffer[0], accumulate[0], atol=1e-6)
    assert len(buffer[1]) == len(accumulate[1])
    assert all(np.allclose(a, b, atol=1e-6) for a, b in zip(buffer[1], accumulate[1], strict=True))


def test_overlapping_blocks_are_averaged():
    num_frames = 60

    def value(call):
        return 0.7 + 0.01 * call

    def script(call, indices, banks):
        out = np.zeros((len(indices), 2))
        out[:, 0] = value(call)
        return out

    detector = ScriptedDetector(2, np.eye(num_frames, 4), script)
    state = stream(detector, index_features(num_frames), num_speakers=2, block_length_s=2.0, block_shift_s=0.4)

    covering = [[] for _ in range(num_frames)]
    for k, (start, end) in enumerate(block_windows(num_frames, 25, 5)):
        for f in range(start, end):
            covering[f].append(1.0 if k == 0 else value(k - 1))
    expected = [np.mean(v) for v in covering]
    assert np.allclose(state.averaged_outputs()[:, 0], expected, atol=1e-12)
    assert not state.averaged_outputs()[:, 1].any()
    assert len(detector.calls) == len(block_windows(num_frames, 25, 5)) - 1


def test_targets_use_confident_frames_only():
    probabilities = np.zeros((20, 2))
    probabilities[:, 0] = np.where(np.arange(20) % 2, 0.9, 0.4)
    table = np.zeros((20, 3))
    table[:, 0] = np.arange(20)
    detector = ScriptedDetector(2, table, lambda call, indices, banks: probabilities[indices])
    stream(detector, index_features(20), num_speakers=2, block_length_s=2.0, block_shift_s=0.4)
    # second block: buffered frames 0-4 hold the first-block value 1.0
    assert detector.calls[0][1][0, 0, 0] == pytest.approx(2.0)
    # third block: frames 0-4 hold (1.0 + p) / 2, frames 5-9 only p
    averaged = np.concatenate([(1.0 + probabilities[:5, 0]) / 2, probabilities[5:10, 0]])
    selected = np.flatnonzero(averaged >= 0.6)
    assert detector.calls[1][1][0, 0, 0] == pytest.approx(np.mean(selected))


def new_state(**config):
    config = StreamConfig(**{"num_speakers": 2, "block_length_s": 2.0, "block_shift_s": 0.4, **config})
    return StreamState.new(config, 1, 8)


def block(start, end):
    return FeatureBlock(start, speaker_features([0] * (end - start)))


class TestBlockOrder:
    def test_repeated_block(self):
        state, _ = process_block(new_state(), OneHotDetector(2), block(0, 5))
        with pytest.raises(StreamError, match="repeats"):
            process_block(state, OneHotDetector(2), block(0, 5))

    def test_out_of_order_start(self):
        state, _ = process_block(new_state(), OneHotDetector(2), block(0, 5))
        with pytest.raises(StreamError, match="out of order"):
            process_block(state, OneHotDetector(2), block(2, 10))

    def test_too_many_new_frames(self):
        state, _ = process_block(new_state(), OneHotDetector(2), block(0, 5))
        with pytest.raises(StreamError, match="more than the shift"):
            process_block(state, OneHotDetector(2), block(0, 15))

    def test_nothing_after_partial_block(self):
        state, _ = process_block(new_state(), OneHotDetector(2), block(0, 5))
        state, increment = process_block(state, OneHotDetector(2), block(0, 8))
        assert state.closed
        assert (increment.start_frame, increment.end_frame) == (5, 8)
        with pytest.raises(StreamError, match="already received"):
            process_block(state, OneHotDetector(2), block(0, 13))

    def test_init_twice(self):
        state, _ = process_block(new_state(), OneHotDetector(2), block(0, 5))
        with pytest.raises(StreamError):
            init_first_block(state, np.zeros((1, 5, 8)))


def test_finalize_projects_to_original_timeline():
    state = stream(OneHotDetector(2), speaker_features([0, 0]), num_speakers=2, block_length_s=0.4, block_shift_s=0.4)
    timeline = TimelineMap([*range(8), *range(20, 28)])
    labels = finalize(state, timeline, num_original_frames=30).values
    assert labels.shape == (30, 2)
    assert np.flatnonzero(labels[:, 0]).tolist() == [*range(8), *range(20, 28)]
    assert not labels[:, 1].any()


def test_finalize_needs_whole_timeline():
    state = stream(OneHotDetector(2), speaker_features([0, 0]), num_speakers=2, block_length_s=0.4, block_shift_s=0.4)
    with pytest.raises(StreamError, match="Timeline"):
        finalize(state, TimelineMap.identity(8))


def test_finalize_trims_padding():
    features = speaker_features([0, 0])[..., :13]
    state = stream(OneHotDetector(2), features, num_speakers=2, block_length_s=0.4, block_shift_s=0.4)
    assert finalize(state).values.shape == (13, 2)


def test_model_detector_runs_stream():
    detector = ModelDetector(OtsVadModel(tiny_model_config()))
    features = np.random.default_rng(0).standard_normal((1, 80, 8 * 30)).astype(np.float32)
    state = stream(detector, features, num_speakers=2, block_length_s=2.0, block_shift_s=0.4)
    assert len(state.emitted) == 6
    outputs = state.averaged_outputs()
    assert outputs.shape == (30, 2)
    assert ((outputs >= 0) & (outputs <= 1)).all()
