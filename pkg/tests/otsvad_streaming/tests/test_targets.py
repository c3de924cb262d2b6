import logging

import numpy as np
import pytest

from otsvad.streaming import (
    AccumulatorState,
    BufferState,
    StreamConfig,
    StreamError,
    StreamState,
    accumulate_update,
    detect_new_speaker,
    targets_from_buffer,
)

PROBS = np.array([[0.9, 0.1], [0.8, 0.2], [0.1, 0.95], [0.5, 0.5]])
EMBEDDINGS = np.array([[[1.0, 0.0], [3.0, 0.0], [0.0, 2.0], [5.0, 5.0]]])


def filled_buffer():
    buffer = BufferState(2, 1, 2)
    buffer.add_outputs(0, PROBS)
    buffer.add_embeddings(0, EMBEDDINGS)
    buffer.eligible[:4] = True
    buffer.cursor = 4
    return buffer


class TestTargetsFromBuffer:
    def test_means_of_confident_frames(self):
        banks, counts = targets_from_buffer(filled_buffer(), 0.6)
        assert banks.tolist() == [[[2.0, 0.0], [0.0, 2.0]]]
        assert counts.tolist() == [2.0, 1.0]

    def test_pruned_frames_are_ignored(self):
        buffer = filled_buffer()
        buffer.eligible[1, 0] = False
        banks, counts = targets_from_buffer(buffer, 0.6)
        assert banks[0, 0].tolist() == [1.0, 0.0]
        assert counts.tolist() == [1.0, 1.0]

    def test_speaker_without_confident_frames(self):
        banks, counts = targets_from_buffer(filled_buffer(), 0.96)
        assert not banks.any()
        assert counts.tolist() == [0.0, 0.0]

    def test_only_frames_before_cursor(self):
        buffer = filled_buffer()
        buffer.cursor = 2
        banks, counts = targets_from_buffer(buffer, 0.6)
        assert counts.tolist() == [2.0, 0.0]
        assert banks[0, 1].tolist() == [0.0, 0.0]


class TestAccumulateUpdate:
    def test_sums_and_counts(self):
        state = AccumulatorState(2, 1, 2)
        frames = np.array([[[1.0, 1.0], [3.0, 3.0], [2.0, 0.0]]])
        accumulate_update(state, frames, np.array([[1, 0], [1, 0], [0, 1]]))
        assert state.counts.tolist() == [2.0, 1.0]
        banks, counts = state.targets()
        assert banks.tolist() == [[[2.0, 2.0], [2.0, 0.0]]]
        assert counts.tolist() == [2.0, 1.0]

    def test_updates_accumulate(self):
        state = AccumulatorState(1, 1, 1)
        accumulate_update(state, np.array([[[1.0], [2.0]]]), np.ones((2, 1)))
        accumulate_update(state, np.array([[[6.0]]]), np.ones((1, 1)))
        assert state.targets()[0].tolist() == [[[3.0]]]

    def test_channels_keep_their_own_sums(self):
        state = AccumulatorState(1, 2, 1)
        accumulate_update(state, np.array([[[1.0]], [[5.0]]]), np.ones((1, 1)))
        assert state.targets()[0].tolist() == [[[1.0]], [[5.0]]]

    def test_single_channel_frames_without_channel_axis(self):
        state = AccumulatorState(1, 1, 2)
        accumulate_update(state, np.array([[4.0, 2.0]]), np.ones((1, 1)))
        assert state.sums.tolist() == [[[4.0, 2.0]]]

    def test_row_mismatch(self):
        with pytest.raises(StreamError, match="label rows"):
            accumulate_update(AccumulatorState(2, 1, 2), np.zeros((1, 3, 2)), np.zeros((2, 2)))


class TestNewSpeaker:
    def state(self, active):
        config = StreamConfig(num_speakers=4, thres_upper=0.6, thres_lower=0.3)
        state = StreamState.new(config, 1, 2)
        state.active_count = active
        return state

    def test_activates_next_slot(self, caplog):
        outputs = np.full((10, 4), 0.1)
        with caplog.at_level(logging.INFO):
            state, adjusted = detect_new_speaker(self.state(2), outputs, 5)
        assert state.active_count == 3
        assert adjusted[5:, 2].tolist() == [0.6] * 5
        assert adjusted[:5, 2].tolist() == [0.1] * 5
        assert adjusted[:, 3].tolist() == [0.1] * 10
        assert outputs[9, 2] == 0.1
        assert "speaker_activated slot=2" in caplog.text

    def test_one_confident_tail_frame_blocks_activation(self):
        outputs = np.full((10, 4), 0.1)
        outputs[7, 1] = 0.35
        state, adjusted = detect_new_speaker(self.state(2), outputs, 5)
        assert state.active_count == 2
        assert adjusted is outputs

    def test_head_frames_do_not_count(self):
        outputs = np.full((10, 4), 0.1)
        outputs[:5, 0] = 0.9
        state, _ = detect_new_speaker(self.state(2), outputs, 5)
        assert state.active_count == 3

    def test_all_slots_taken(self):
        outputs = np.full((10, 4), 0.1)
        state, adjusted = detect_new_speaker(self.state(4), outputs, 5)
        assert state.active_count == 4
        assert adjusted is outputs
