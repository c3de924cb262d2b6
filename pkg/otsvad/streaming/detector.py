from typing import Protocol

import numpy as np
import torch

from otsvad.model.model import OtsVadModel
from otsvad.utils import FloatArray


class Detector(Protocol):
    """What the streaming engine needs from a model.

    ``embed`` maps ``C x H x L`` features to ``C x T x D`` frame embeddings with
    ``T = ceil(L / 8)``; ``detect`` maps ``C x N x D`` banks and ``C x T x D``
    frames to ``T x N`` probabilities.
    """

    num_speakers: int
    embedding_dim: int

    def embed(self, features: FloatArray) -> FloatArray: ...

    def detect(self, banks: FloatArray, frames: FloatArray) -> FloatArray: ...


class ModelDetector:
    def __init__(self, model: OtsVadModel, dtype: torch.dtype = torch.float32) -> None:
        self.model = model.eval().to(dtype)
        self.dtype = dtype
        self.num_speakers = model.num_speakers
        self.embedding_dim = model.embedding_dim

    def embed(self, features: FloatArray) -> FloatArray:
        with torch.inference_mode():
            x = torch.as_tensor(np.asarray(features), dtype=self.dtype)[None]
            return self.model.embed(x)[0].double().numpy()  # type: ignore[no-any-return]

    def detect(self, banks: FloatArray, frames: FloatArray) -> FloatArray:
        with torch.inference_mode():
            b = torch.as_tensor(np.asarray(banks), dtype=self.dtype)[None]
            f = torch.as_tensor(np.asarray(frames), dtype=self.dtype)[None]
            return self.model.detect(b, f)[0].double().numpy()  # type: ignore[no-any-return]
