import torch

from otsvad.model import (
    Backend,
    MultichannelConfig,
    MultichannelEncoder,
    build_channel_stack,
    channel_average_pool,
    concat_speaker_frames,
    cross_channel_attention,
    mc_detect_forward,
)
from otsvad.testing import tiny_model_config


def parts(init_scale=1e-2):
    config = tiny_model_config(num_speakers=2, embedding_dim=4)
    encoder = MultichannelEncoder(
        MultichannelConfig(enabled=True, layers=2, heads=2, ff_dim=8, dropout=0.0, init_scale=init_scale), 4
    )
    backend = Backend(config.backend, 4)
    return encoder.double().eval(), backend.double().eval()


def inputs(channels):
    banks = torch.randn(1, channels, 2, 4, dtype=torch.float64)
    frames = torch.randn(1, channels, 6, 4, dtype=torch.float64)
    return banks, frames


def test_stack_layout():
    banks, frames = inputs(3)
    stack = build_channel_stack(banks, frames)
    assert stack.shape == (1, 6, 2, 3, 8)
    assert torch.equal(stack[0, 5, 1, 2], torch.cat([banks[0, 2, 1], frames[0, 2, 5]]))


def test_channel_permutation_invariance():
    encoder, backend = parts(init_scale=1.0)
    banks, frames = inputs(4)
    order = [3, 1, 0, 2]
    a = mc_detect_forward(encoder, backend, banks, frames)
    b = mc_detect_forward(encoder, backend, banks[:, order], frames[:, order])
    assert torch.allclose(a, b, atol=1e-10)


def test_duplicated_channels_match_single_channel():
    encoder, backend = parts(init_scale=1.0)
    banks, frames = inputs(1)
    single = mc_detect_forward(encoder, backend, banks, frames)
    repeated = mc_detect_forward(encoder, backend, banks.repeat(1, 3, 1, 1), frames.repeat(1, 3, 1, 1))
    assert torch.allclose(single, repeated, atol=1e-10)


def test_zero_init_scale_is_identity():
    encoder, backend = parts(init_scale=0.0)
    banks, frames = inputs(1)
    direct = backend(concat_speaker_frames(banks[:, 0], frames[:, 0]))
    assert torch.allclose(mc_detect_forward(encoder, backend, banks, frames), direct, atol=1e-12)


def test_channel_average_pool():
    attended = torch.arange(12, dtype=torch.float64).reshape(1, 1, 1, 3, 4)
    assert channel_average_pool(attended)[0, 0, 0].tolist() == [4.0, 5.0, 6.0, 7.0]


def test_cross_channel_attention_keeps_layout():
    encoder, _ = parts(init_scale=1.0)
    banks, frames = inputs(3)
    stack = build_channel_stack(banks, frames)
    assert cross_channel_attention(stack, encoder.layers).shape == stack.shape
    assert torch.equal(cross_channel_attention(stack, torch.nn.ModuleList()), stack)
