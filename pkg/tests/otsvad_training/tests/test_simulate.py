import numpy as np
import pytest

from otsvad.training import (
    AdditiveNoise,
    Reverberation,
    SimulationRecipe,
    SpeakerPool,
    choose_label_segment,
    random_conversation_labels,
    simulate_conversations,
    simulate_mixture,
    synthetic_speaker_pool,
)
from otsvad.utils import ConfigError, DataError

HOP = 1280


def constant_pool():
    return SpeakerPool({"a": [np.full(HOP * 4, 0.1)], "b": [np.full(HOP * 4, 0.2)], "c": [np.full(HOP * 4, 0.4)]})


def recipe(labels, num_speakers=3):
    return SimulationRecipe([labels], constant_pool(), num_speakers)


def test_labels_pass_through(rng):
    labels = np.array([[1, 0], [1, 1], [0, 1], [0, 0]], dtype=np.float32)
    mixture = simulate_mixture(recipe(labels, 2), 4, rng, labels=labels)
    assert np.array_equal(mixture.labels, labels)
    assert mixture.audio.num_samples == 4 * HOP
    assert len(set(mixture.speakers)) == 2


def test_overlap_sums_constant_segments(rng):
    labels = np.array([[1, 0], [1, 1], [0, 1], [0, 0]], dtype=np.float32)
    mixture = simulate_mixture(recipe(labels, 2), 4, rng, labels=labels, speakers=["a", "c"])
    samples = mixture.audio.samples[0]
    frames = samples.reshape(4, HOP)
    assert np.allclose(frames[0], 0.1)
    assert np.allclose(frames[1], 0.5)
    assert np.allclose(frames[2], 0.4)
    assert np.allclose(frames[3], 0.0)
    assert mixture.speakers == ["a", "c"]


def test_empty_labels_give_silence(rng):
    labels = np.zeros((5, 3), dtype=np.float32)
    mixture = simulate_mixture(recipe(labels), 5, rng, labels=labels)
    assert not mixture.audio.samples.any()
    assert mixture.speakers == [None, None, None]


def test_pool_reused_when_short(rng):
    labels = np.ones((2, 4), dtype=np.float32)
    mixture = simulate_mixture(recipe(labels, 4), 2, rng, labels=labels)
    assert all(s in {"a", "b", "c"} for s in mixture.speakers)


def test_fresh_draws_skip_excluded_speakers(rng):
    labels = np.ones((2, 1), dtype=np.float32)
    for _ in range(10):
        mixture = simulate_mixture(recipe(labels, 1), 2, rng, labels=labels, exclude={"a", "b"})
        assert mixture.speakers == ["c"]
    mixture = simulate_mixture(recipe(labels, 1), 2, rng, labels=labels, exclude={"a", "b", "c"})
    assert mixture.speakers[0] in {"a", "b", "c"}


def test_choose_label_segment_pads_and_orders(rng):
    source = np.zeros((3, 5), dtype=np.float32)
    source[:, 4] = 1
    segment = choose_label_segment(SimulationRecipe([source], constant_pool(), 2), 6, rng)
    assert segment.shape == (6, 2)
    assert segment[:3, 0].tolist() == [1, 1, 1]
    assert not segment[3:].any()


def test_recipe_validation():
    with pytest.raises(DataError):
        SimulationRecipe([], constant_pool())
    with pytest.raises(DataError):
        SimulationRecipe([np.zeros((1, 1))], SpeakerPool({}))


def test_unknown_pool_speaker(rng):
    with pytest.raises(DataError):
        constant_pool().stream("z", 10, rng)


def test_conversation_labels_cover_every_frame(rng):
    labels = random_conversation_labels(500, 3, rng)
    assert labels.shape == (500, 3)
    assert (labels.sum(axis=1) >= 1).all()
    assert labels.any(axis=0).all()


def test_synthetic_pool(rng):
    pool = synthetic_speaker_pool(3, rng, segments_per_speaker=2, segment_s=0.5)
    assert pool.speakers == ["synth0", "synth1", "synth2"]
    assert all(len(parts) == 2 for parts in pool.segments.values())
    assert pool.stream("synth1", 20_000, rng).shape == (20_000,)


def test_conversations_peak_limited(rng):
    pool = synthetic_speaker_pool(2, rng, segments_per_speaker=2, segment_s=0.5)
    conversations = simulate_conversations(pool, 3, 25, 4, rng)
    assert len(conversations) == 3
    for mixture in conversations:
        assert mixture.labels.shape == (25, 4)
        assert not mixture.labels[:, 2:].any()
        assert np.max(np.abs(mixture.audio.samples)) <= 0.9 + 1e-12


def test_additive_noise_snr(rng):
    clean = np.sin(np.linspace(0, 200, 16000))
    noise = rng.standard_normal(4000)
    noisy = AdditiveNoise([noise], snr_db=(10.0, 10.0))(clean, rng)
    added = noisy - clean
    assert 10 * np.log10(np.mean(clean**2) / np.mean(added**2)) == pytest.approx(10.0, abs=1e-6)


def test_reverberation_keeps_length(rng):
    out = Reverberation([np.array([1.0, 0.5, 0.25])])(np.ones(100), rng)
    assert out.shape == (100,)
    assert out[-1] == pytest.approx(1.75)


def test_augmentations_need_inputs():
    with pytest.raises(ConfigError):
        AdditiveNoise([])
    with pytest.raises(ConfigError):
        Reverberation([])
