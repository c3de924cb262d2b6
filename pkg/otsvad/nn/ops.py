import math
from collections.abc import Callable, Sequence
from typing import Any, TypeVar

import torch
import torch.nn.functional as F
from torch import Tensor, nn
from torch.func import functional_call

from otsvad.utils import DataError, NumericError

# like a registry
OPS: dict[str, Callable[..., Tensor]] = {}
OpFunction = TypeVar("OpFunction", bound=Callable[..., Tensor])


class ShapeError(DataError):
    pass


def register_op(kind: str) -> Callable[[OpFunction], OpFunction]:
    def register(fn: OpFunction) -> OpFunction:
        if kind in OPS:
            msg = f"Duplicated op kind: {kind}"
            raise ValueError(msg)
        OPS[kind] = fn
        return fn

    return register


def check_finite(tensor: Tensor, name: str) -> Tensor:
    if not bool(torch.isfinite(tensor).all()):
        msg = f"Non-finite values in output of {name}"
        raise NumericError(msg)
    return tensor


def _expect_last_dim(x: Tensor, size: int, kind: str) -> None:
    if x.shape[-1] != size:
        msg = f"{kind}: expected last dimension {size}, got shape {tuple(x.shape)}"
        raise ShapeError(msg)


@register_op("conv2d")
def conv2d(
    x: Tensor,
    weight: Tensor,
    bias: Tensor | None = None,
    stride: int | tuple[int, int] = 1,
    padding: int | tuple[int, int] = 0,
) -> Tensor:
    return F.conv2d(x, weight, bias, stride=stride, padding=padding)


@register_op("conv1d")
def conv1d(
    x: Tensor,
    weight: Tensor,
    bias: Tensor | None = None,
    stride: int = 1,
    padding: int = 0,
    groups: int = 1,
) -> Tensor:
    return F.conv1d(x, weight, bias, stride=stride, padding=padding, groups=groups)


@register_op("linear")
def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    _expect_last_dim(x, weight.shape[1], "linear")
    return F.linear(x, weight, bias)


@register_op("relu")
def relu(x: Tensor) -> Tensor:
    return F.relu(x)


@register_op("layer_norm")
def layer_norm(x: Tensor, weight: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    _expect_last_dim(x, weight.shape[-1], "layer_norm")
    return F.layer_norm(x, weight.shape, weight, bias, eps)


@register_op("batch_norm")
def batch_norm(x: Tensor, weight: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    if x.shape[1] != weight.shape[0]:
        msg = f"batch_norm: expected {weight.shape[0]} channels, got shape {tuple(x.shape)}"
        raise ShapeError(msg)
    return F.batch_norm(x, None, None, weight, bias, training=True, eps=eps)


@register_op("softmax")
def softmax(x: Tensor, dim: int = -1) -> Tensor:
    return F.softmax(x, dim=dim)


@register_op("sigmoid")
def sigmoid(x: Tensor) -> Tensor:
    return torch.sigmoid(x)


def split_heads(x: Tensor, heads: int) -> Tensor:
    *lead, dim = x.shape
    return x.reshape(*lead, heads, dim // heads).transpose(-2, -3)


def merge_heads(x: Tensor) -> Tensor:
    x = x.transpose(-2, -3)
    *lead, heads, head_dim = x.shape
    return x.reshape(*lead, heads * head_dim)


def scaled_dot_attention(q: Tensor, k: Tensor, v: Tensor) -> tuple[Tensor, Tensor]:
    """softmax(q k^T / sqrt(head_dim)) v over the second-to-last axis."""
    scores = q @ k.transpose(-2, -1) / math.sqrt(q.shape[-1])
    check_finite(scores, "attention logits")
    weights = F.softmax(scores, dim=-1)
    return weights @ v, weights


@register_op("multi_head_attention")
def multi_head_attention(
    query: Tensor,
    key: Tensor,
    value: Tensor,
    w_q: Tensor,
    b_q: Tensor,
    w_k: Tensor,
    b_k: Tensor,
    w_v: Tensor,
    b_v: Tensor,
    w_o: Tensor,
    b_o: Tensor,
    heads: int = 1,
) -> Tensor:
    if w_q.shape[0] % heads:
        msg = f"multi_head_attention: {heads} heads do not divide model dim {w_q.shape[0]}"
        raise ShapeError(msg)
    q = split_heads(linear(query, w_q, b_q), heads)
    k = split_heads(linear(key, w_k, b_k), heads)
    v = split_heads(linear(value, w_v, b_v), heads)
    attended, _ = scaled_dot_attention(q, k, v)
    return linear(merge_heads(attended), w_o, b_o)


@register_op("feed_forward")
def feed_forward(
    x: Tensor,
    w_1: Tensor,
    b_1: Tensor,
    w_2: Tensor,
    b_2: Tensor,
    activation: str = "relu",
) -> Tensor:
    hidden = linear(x, w_1, b_1)
    hidden = F.silu(hidden) if activation == "swish" else F.relu(hidden)
    return linear(hidden, w_2, b_2)


def _lstm_template(input_size: int, hidden_size: int, dtype: torch.dtype) -> nn.LSTM:
    return nn.LSTM(
        input_size,
        hidden_size,
        batch_first=True,
        bidirectional=True,
        dtype=dtype,
    )


def bilstm_parameter_shapes(input_size: int, hidden_size: int) -> list[tuple[str, tuple[int, ...]]]:
    template = _lstm_template(input_size, hidden_size, torch.float32)
    return [(name, tuple(p.shape)) for name, p in template.named_parameters()]


@register_op("bilstm")
def bilstm(x: Tensor, *params: Tensor, hidden_size: int) -> Tensor:
    template = _lstm_template(x.shape[-1], hidden_size, x.dtype)
    names = [name for name, _ in template.named_parameters()]
    if len(params) != len(names):
        msg = f"bilstm: expected {len(names)} parameter tensors, got {len(params)}"
        raise ShapeError(msg)
    output, _ = functional_call(template, dict(zip(names, params, strict=True)), (x,))
    return output  # type: ignore[no-any-return]


@register_op("concat")
def concat(*xs: Tensor, dim: int = -1) -> Tensor:
    return torch.cat(xs, dim=dim)


@register_op("mean_std_pool")
def mean_std_pool(x: Tensor, dim: int = -1, eps: float = 1e-5) -> Tensor:
    """Concatenate mean and population std over ``dim``.

    The std is ``sqrt(var)`` above ``eps`` and the linear ``var / sqrt(eps)``
    below it, so a constant input gives exactly zero with finite gradients.
    """
    mean = x.mean(dim=dim)
    var = (x - mean.unsqueeze(dim)).pow(2).mean(dim=dim)
    std = torch.where(var > eps, var.clamp_min(eps).sqrt(), var / math.sqrt(eps))
    return torch.cat([mean, std], dim=-1)


def op_forward(kind: str, *inputs: Tensor, **attrs: Any) -> Tensor:
    fn = OPS.get(kind)
    if fn is None:
        msg = f"No op kind {kind} defined"
        raise ValueError(msg)
    try:
        output = fn(*inputs, **attrs)
    except RuntimeError as e:
        msg = f"{kind}: {e}"
        raise ShapeError(msg) from e
    return check_finite(output, kind)


def op_forward_backward(
    kind: str,
    inputs: Sequence[Tensor],
    grad_output: Tensor | None = None,
    **attrs: Any,
) -> tuple[Tensor, list[Tensor | None]]:
    output = op_forward(kind, *inputs, **attrs)
    wrt = [x for x in inputs if x.requires_grad]
    if not wrt:
        return output, [None] * len(inputs)
    if grad_output is None:
        grad_output = torch.ones_like(output)
    grads = iter(torch.autograd.grad(output, wrt, grad_output, allow_unused=True))
    return output, [next(grads) if x.requires_grad else None for x in inputs]


def gradcheck_op(
    kind: str,
    inputs: Sequence[Tensor],
    eps: float = 1e-6,
    atol: float = 1e-4,
    rtol: float = 1e-4,
    **attrs: Any,
) -> bool:
    """Central finite-difference check of ``kind`` in the inputs' precision."""

    def run(*xs: Tensor) -> Tensor:
        return op_forward(kind, *xs, **attrs)

    return bool(torch.autograd.gradcheck(run, tuple(inputs), eps=eps, atol=atol, rtol=rtol))
