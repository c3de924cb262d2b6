from collections.abc import Callable
from dataclasses import dataclass, field

import numpy as np
import torch
from torch import Tensor

from otsvad.model.backend import TargetSpeakerBank
from otsvad.nn.ops import ShapeError
from otsvad.utils import FloatArray


@dataclass
class Chunk:
    """Features ``C x H x L`` (10 ms frames) with labels ``T x N`` (0.08 s frames)."""

    features: FloatArray
    labels: FloatArray
    speakers: list[str | None] = field(default_factory=list)


def split_blocks(x: FloatArray, axis: int = -1) -> tuple[FloatArray, FloatArray]:
    """Halve ``x`` along ``axis``, right-padding one zero frame when the length is odd."""
    length = x.shape[axis]
    if length % 2:
        pad = [(0, 0)] * x.ndim
        pad[axis] = (0, 1)
        x = np.pad(x, pad)
        length += 1
    half = length // 2
    left = np.take(x, np.arange(half), axis=axis)
    right = np.take(x, np.arange(half, length), axis=axis)
    return left, right


def split_chunk(chunk: Chunk) -> tuple[Chunk, Chunk]:
    left_features, right_features = split_blocks(chunk.features, axis=-1)
    left_labels, right_labels = split_blocks(chunk.labels, axis=0)
    return (
        Chunk(left_features, left_labels, list(chunk.speakers)),
        Chunk(right_features, right_labels, list(chunk.speakers)),
    )


def align_right_labels(left: Chunk, right: Chunk) -> Chunk:
    """Silence right-block columns whose left-block speaker is someone else.

    A column active in both blocks must hold one speaker; where the left
    block is voiced by a different (or unknown) speaker, the right labels
    are zeroed and the column takes the left speaker's name.
    """
    labels = right.labels.copy()
    speakers = list(right.speakers) + [None] * (labels.shape[1] - len(right.speakers))
    for n in range(min(labels.shape[1], left.labels.shape[1])):
        name = left.speakers[n] if n < len(left.speakers) else None
        if not left.labels[:, n].any() or (name is not None and name == speakers[n]):
            continue
        if labels[:, n].any():
            labels[:, n] = 0
        speakers[n] = name
    return Chunk(right.features, labels, speakers)


def mask_overlaps(labels: FloatArray) -> FloatArray:
    """Zero every frame where two or more speakers are active."""
    labels = np.asarray(labels)
    overlapped = labels.sum(axis=-1) >= 2
    return np.where(overlapped[..., None], 0, labels).astype(labels.dtype)  # type: ignore[no-any-return]


def extract_target_embeddings(frames: Tensor, masked: Tensor) -> TargetSpeakerBank:
    """Per-speaker mean of the frame embeddings selected by ``masked``.

    ``frames`` is ``(..., T, D)``, ``masked`` ``(..., T, N)``. Speakers with
    no selected frame get a zero row and are flagged inactive.
    """
    if frames.shape[-2] != masked.shape[-2]:
        msg = f"{frames.shape[-2]} embedding frames but {masked.shape[-2]} label frames"
        raise ShapeError(msg)
    weights = masked.to(frames.dtype)
    counts = weights.sum(dim=-2)
    sums = weights.transpose(-2, -1) @ frames
    means = sums / counts.clamp_min(1.0)[..., None]
    return TargetSpeakerBank(means, counts > 0)


def maybe_replace_left(
    left: Chunk,
    simulated: Chunk | Callable[[], Chunk],
    p: float,
    rng: np.random.Generator,
) -> Chunk:
    """With probability ``p`` return the simulated block instead of ``left``."""
    if not 0.0 <= p <= 1.0:
        msg = f"Replacement probability must lie in [0, 1], got {p}"
        raise ValueError(msg)
    if rng.random() >= p:
        return left
    return simulated() if callable(simulated) else simulated


def as_tensor(x: FloatArray, dtype: torch.dtype = torch.float32) -> Tensor:
    return torch.as_tensor(np.ascontiguousarray(x), dtype=dtype)
