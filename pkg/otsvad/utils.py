import random
from typing import Any, TypeAlias

import numpy as np
import numpy.typing as npt
import torch

FloatArray: TypeAlias = npt.NDArray[np.floating[Any]]
IntArray: TypeAlias = npt.NDArray[np.integer[Any]]
BoolArray: TypeAlias = npt.NDArray[np.bool_]

SAMPLE_RATE = 16000
FEATURE_SHIFT_S = 0.01
SUBSAMPLING = 8
EMBEDDING_SHIFT_S = FEATURE_SHIFT_S * SUBSAMPLING


class ConfigError(ValueError):
    pass


class DataError(ValueError):
    pass


class NumericError(ArithmeticError):
    pass


def seed_everything(seed: int) -> np.random.Generator:
    random.seed(seed)
    np.random.seed(seed)  # noqa: NPY002
    torch.manual_seed(seed)
    return np.random.default_rng(seed)


def seconds_to_frames(seconds: float, shift_s: float = EMBEDDING_SHIFT_S) -> int:
    return round(seconds / shift_s)


def runs(active: npt.NDArray[Any]) -> list[tuple[int, int]]:
    """Half-open ``[start, stop)`` index runs where ``active`` is true."""
    flags = np.concatenate([[False], np.asarray(active, dtype=bool), [False]])
    edges = np.flatnonzero(np.diff(flags.astype(np.int8)))
    return [(int(a), int(b)) for a, b in zip(edges[::2], edges[1::2], strict=True)]


def masked_mean(weights: FloatArray, values: FloatArray) -> tuple[FloatArray, FloatArray]:
    """Row-normalised ``weights.T @ values``.

    ``weights`` is ``T x N`` (0/1 selection), ``values`` is ``T x D``. Returns the
    ``N x D`` means and the ``N`` selection counts; rows with no selected frame
    are zero.
    """
    counts = weights.sum(axis=0)
    sums = weights.T @ values
    means = np.zeros_like(sums)
    nonzero = counts > 0
    means[nonzero] = sums[nonzero] / counts[nonzero, None]
    return means, counts
