import math

import torch
import torch.nn.functional as F
from torch import Tensor, nn

from otsvad.nn.ops import check_finite, merge_heads, scaled_dot_attention, split_heads
from otsvad.utils import ConfigError


class SinusoidalPositionalEncoding(nn.Module):
    def __init__(self, dim: int, max_len: int = 4096) -> None:
        super().__init__()
        self.dim = dim
        self.register_buffer("table", self._table(max_len), persistent=False)

    def _table(self, length: int) -> Tensor:
        position = torch.arange(length, dtype=torch.float32)[:, None]
        div = torch.exp(torch.arange(0, self.dim, 2, dtype=torch.float32) * (-math.log(10000.0) / self.dim))
        table = torch.zeros(length, self.dim)
        table[:, 0::2] = torch.sin(position * div)
        table[:, 1::2] = torch.cos(position * div[: self.dim // 2])
        return table

    def forward(self, x: Tensor) -> Tensor:
        length = x.shape[-2]
        table: Tensor = self.table
        if length > table.shape[0]:
            table = self._table(length).to(table.device)
            self.table = table
        return x + table[:length].to(x.dtype)


class MultiHeadAttention(nn.Module):
    """Scaled dot-product attention over the second-to-last axis.

    Any leading axes are treated as batch. ``weights`` holds the attention
    matrix of the last call, shaped ``(..., heads, query, key)``.
    """

    def __init__(self, dim: int, heads: int, dropout: float = 0.0) -> None:
        super().__init__()
        if heads < 1 or dim % heads:
            msg = f"Attention heads ({heads}) must divide the model dimension ({dim})"
            raise ConfigError(msg)
        self.heads = heads
        self.head_dim = dim // heads
        self.linear_q = nn.Linear(dim, dim)
        self.linear_k = nn.Linear(dim, dim)
        self.linear_v = nn.Linear(dim, dim)
        self.linear_o = nn.Linear(dim, dim)
        self.dropout = nn.Dropout(dropout)
        self.weights: Tensor | None = None

    def forward(self, query: Tensor, key: Tensor | None = None, value: Tensor | None = None) -> Tensor:
        key = query if key is None else key
        value = key if value is None else value
        q = split_heads(self.linear_q(query), self.heads)
        k = split_heads(self.linear_k(key), self.heads)
        v = split_heads(self.linear_v(value), self.heads)
        attended, weights = scaled_dot_attention(q, k, v)
        self.weights = weights.detach()
        return self.linear_o(self.dropout(merge_heads(attended)))


class FeedForward(nn.Module):
    def __init__(self, dim: int, hidden: int, dropout: float = 0.0, activation: str = "relu") -> None:
        super().__init__()
        if activation not in ("relu", "swish"):
            msg = f"Unknown feed-forward activation {activation!r}"
            raise ConfigError(msg)
        self.linear_1 = nn.Linear(dim, hidden)
        self.linear_2 = nn.Linear(hidden, dim)
        self.activation = nn.SiLU() if activation == "swish" else nn.ReLU()
        self.dropout = nn.Dropout(dropout)

    def forward(self, x: Tensor) -> Tensor:
        return self.dropout(self.linear_2(self.dropout(self.activation(self.linear_1(x)))))


class ConvModule(nn.Module):
    def __init__(self, dim: int, kernel_size: int = 15, dropout: float = 0.0) -> None:
        super().__init__()
        if kernel_size % 2 == 0:
            msg = f"Conformer kernel size must be odd, got {kernel_size}"
            raise ConfigError(msg)
        self.norm = nn.LayerNorm(dim)
        self.pointwise_in = nn.Conv1d(dim, 2 * dim, 1)
        self.depthwise = nn.Conv1d(dim, dim, kernel_size, padding=kernel_size // 2, groups=dim)
        self.batch_norm = nn.BatchNorm1d(dim)
        self.pointwise_out = nn.Conv1d(dim, dim, 1)
        self.dropout = nn.Dropout(dropout)

    def forward(self, x: Tensor) -> Tensor:
        # (B, T, D) -> (B, D, T)
        y = self.norm(x).transpose(1, 2)
        y = F.glu(self.pointwise_in(y), dim=1)
        y = F.silu(self.batch_norm(self.depthwise(y)))
        y = self.pointwise_out(y).transpose(1, 2)
        return self.dropout(y)


class ConformerBlock(nn.Module):
    """Macaron feed-forward, self-attention, convolution, feed-forward, final norm."""

    def __init__(
        self,
        dim: int,
        heads: int,
        ff_dim: int,
        kernel_size: int = 15,
        dropout: float = 0.1,
    ) -> None:
        super().__init__()
        self.ff_in_norm = nn.LayerNorm(dim)
        self.ff_in = FeedForward(dim, ff_dim, dropout, activation="swish")
        self.attention_norm = nn.LayerNorm(dim)
        self.attention = MultiHeadAttention(dim, heads, dropout)
        self.attention_dropout = nn.Dropout(dropout)
        self.conv = ConvModule(dim, kernel_size, dropout)
        self.ff_out_norm = nn.LayerNorm(dim)
        self.ff_out = FeedForward(dim, ff_dim, dropout, activation="swish")
        self.out_norm = nn.LayerNorm(dim)

    def forward(self, x: Tensor) -> Tensor:
        x = x + 0.5 * self.ff_in(self.ff_in_norm(x))
        x = x + self.attention_dropout(self.attention(self.attention_norm(x)))
        x = x + self.conv(x)
        x = x + 0.5 * self.ff_out(self.ff_out_norm(x))
        return self.out_norm(x)


class ConformerEncoder(nn.Module):
    def __init__(
        self,
        dim: int,
        layers: int,
        heads: int,
        ff_dim: int,
        kernel_size: int = 15,
        dropout: float = 0.1,
    ) -> None:
        super().__init__()
        self.blocks = nn.ModuleList(
            ConformerBlock(dim, heads, ff_dim, kernel_size, dropout) for _ in range(layers)
        )

    def forward_all(self, x: Tensor) -> list[Tensor]:
        outputs = []
        for i, block in enumerate(self.blocks):
            x = check_finite(block(x), f"conformer block {i}")
            outputs.append(x)
        return outputs

    def forward(self, x: Tensor) -> Tensor:
        for i, block in enumerate(self.blocks):
            x = check_finite(block(x), f"conformer block {i}")
        return x


class BiLSTM(nn.Module):
    """Single-layer LSTM run forward and backward in time, outputs concatenated.

    Per direction and step, with ``[h; x]`` the previous hidden state and the
    input:

        i = sigmoid(W_i x + U_i h + b_i)    input gate
        f = sigmoid(W_f x + U_f h + b_f)    forget gate
        g = tanh(W_g x + U_g h + b_g)       candidate cell
        o = sigmoid(W_o x + U_o h + b_o)    output gate
        c' = f * c + i * g
        h' = o * tanh(c')

    Output is ``(B, T, 2 * hidden)``: forward states then backward states.
    """

    def __init__(self, input_size: int, hidden_size: int) -> None:
        super().__init__()
        self.hidden_size = hidden_size
        self.lstm = nn.LSTM(input_size, hidden_size, batch_first=True, bidirectional=True)

    def forward(self, x: Tensor) -> Tensor:
        output, _ = self.lstm(x)
        return output  # type: ignore[no-any-return]
