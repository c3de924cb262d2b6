import math

import numpy as np
import pytest

from otsvad.evaluation import diarize, evaluate, format_sweep, select_channels, sweep, tune_thresholds, validation_der
from otsvad.model.model import OtsVadModel
from otsvad.scoring.metrics import ScoringConfig
from otsvad.streaming.detector import ModelDetector
from otsvad.streaming.state import StreamConfig
from otsvad.testing import OneHotDetector, speaker_recording, tiny_model_config, turns
from otsvad.utils import ConfigError

STREAM = StreamConfig(num_speakers=4, block_length_s=2.0, block_shift_s=0.4)


@pytest.fixture()
def recording():
    return speaker_recording("rec", turns((0, 60), (1, 40)), num_speakers=4)


def test_diarize_finds_both_speakers(recording):
    result = diarize(OneHotDetector(), recording, STREAM)
    assert result.recording_id == "rec"
    assert len({s.speaker_name for s in result.segments}) == 2
    first = min(result.segments, key=lambda s: s.onset_s)
    assert first.onset_s == 0.0
    assert first.duration_s == pytest.approx(4.8)
    assert len(result.report.block_times_s) == 20


def test_diarize_speaker_count_mismatch(recording):
    with pytest.raises(ConfigError, match="num_speakers"):
        diarize(OneHotDetector(num_speakers=2), recording, STREAM)


def test_evaluate_perfect_detector(recording):
    score, hypothesis = evaluate(OneHotDetector(), [recording], STREAM)
    assert list(hypothesis) == ["rec"]
    assert score.der < 1.0
    assert score.num_recordings == 1


def test_evaluate_collar_is_forwarded(recording):
    score, _ = evaluate(OneHotDetector(), [recording], STREAM, ScoringConfig(collar_s=0.25))
    assert score.collar_s == 0.25


def test_validation_der_with_model(recording):
    model = OtsVadModel(tiny_model_config(num_speakers=4))
    assert math.isfinite(validation_der(model, [recording], STREAM))


def test_mono_model_takes_first_channel():
    model = OtsVadModel(tiny_model_config())
    features = np.stack([np.zeros((80, 16)), np.ones((80, 16))])
    assert select_channels(features, ModelDetector(model)).tolist() == features[:1].tolist()
    assert select_channels(features, OneHotDetector()) is features


class TestTuning:
    def test_grid_sorted_best_first(self, recording):
        results = tune_thresholds(OneHotDetector(), [recording], STREAM, uppers=(0.6, 0.9), lowers=(0.1, 0.3))
        assert {(r.thres_upper, r.thres_lower) for r in results} == {(0.6, 0.1), (0.6, 0.3), (0.9, 0.1), (0.9, 0.3)}
        ders = [r.score.der for r in results]
        assert ders == sorted(ders)

    def test_invalid_pairs_are_skipped(self, recording):
        results = tune_thresholds(OneHotDetector(), [recording], STREAM, uppers=(0.4, 0.7), lowers=(0.3,))
        assert [(r.thres_upper, r.thres_lower) for r in results] == [(0.7, 0.3)]

    def test_empty_grid(self, recording):
        with pytest.raises(ConfigError, match="No valid"):
            tune_thresholds(OneHotDetector(), [recording], STREAM, uppers=(0.4,), lowers=(0.3,))


def test_sweep_skips_shift_longer_than_block(recording):
    rows = sweep(OneHotDetector(), [recording], STREAM, lengths=(2.0, 4.0), shifts=(0.4, 0.8, 4.8))
    assert [(r.block_length_s, r.block_shift_s) for r in rows] == [(2.0, 0.4), (2.0, 0.8), (4.0, 0.4), (4.0, 0.8)]
    table = format_sweep(rows).splitlines()
    assert table[0].split() == ["l_s", "m_s", "DER", "JER"]
    assert table[1].split()[:2] == ["2.0", "0.4"]
    assert len(table) == 5
