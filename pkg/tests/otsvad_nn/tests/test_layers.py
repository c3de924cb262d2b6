import pytest
import torch

from otsvad.nn import (
    BiLSTM,
    ConformerBlock,
    ConformerEncoder,
    ConvModule,
    FeedForward,
    MultiHeadAttention,
    SinusoidalPositionalEncoding,
)
from otsvad.utils import ConfigError


def test_attention_shapes_and_weights():
    attention = MultiHeadAttention(8, 2)
    query = torch.randn(3, 5, 8)
    memory = torch.randn(3, 7, 8)
    assert attention(query, memory).shape == (3, 5, 8)
    assert attention.weights.shape == (3, 2, 5, 7)
    assert torch.allclose(attention.weights.sum(dim=-1), torch.ones(3, 2, 5), atol=1e-5)


def test_attention_extra_batch_axes():
    attention = MultiHeadAttention(4, 1)
    assert attention(torch.randn(2, 3, 6, 4)).shape == (2, 3, 6, 4)


def test_attention_heads_must_divide():
    with pytest.raises(ConfigError):
        MultiHeadAttention(8, 3)


def test_feed_forward_activation():
    assert FeedForward(4, 6, activation="swish")(torch.randn(2, 4)).shape == (2, 4)
    with pytest.raises(ConfigError):
        FeedForward(4, 6, activation="gelu")


def test_conv_module_kernel_must_be_odd():
    assert ConvModule(4, 3)(torch.randn(2, 9, 4)).shape == (2, 9, 4)
    with pytest.raises(ConfigError):
        ConvModule(4, 4)


def test_conformer_shapes():
    encoder = ConformerEncoder(8, 2, 2, 16, kernel_size=3, dropout=0.0).eval()
    x = torch.randn(2, 11, 8)
    outputs = encoder.forward_all(x)
    assert len(outputs) == 2
    assert torch.allclose(outputs[-1], encoder(x))


def test_conformer_block_normalizes_output():
    block = ConformerBlock(8, 2, 16, kernel_size=3, dropout=0.0).eval()
    out = block(torch.randn(1, 4, 8) * 10)
    assert torch.allclose(out.mean(dim=-1), torch.zeros(1, 4), atol=1e-5)


def test_positional_encoding_grows():
    encoding = SinusoidalPositionalEncoding(6, max_len=4)
    x = torch.zeros(1, 10, 6)
    out = encoding(x)
    assert out.shape == (1, 10, 6)
    assert torch.equal(out[0, 0, 1::2], torch.ones(3))


def test_bilstm_output_shape():
    assert BiLSTM(3, 5)(torch.randn(2, 7, 3)).shape == (2, 7, 10)


def test_bilstm_backward_half_sees_future():
    lstm = BiLSTM(1, 2).eval()
    x = torch.zeros(1, 5, 1)
    changed = x.clone()
    changed[0, -1, 0] = 1.0
    a, b = lstm(x), lstm(changed)
    assert torch.equal(a[0, 0, :2], b[0, 0, :2])
    assert not torch.equal(a[0, 0, 2:], b[0, 0, 2:])
