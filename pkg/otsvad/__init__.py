from .model import ModelConfig, OtsVadModel
from .scoring import DiarizationScore, RttmSegment, ScoringConfig, score_recordings
from .streaming import ModelDetector, OnlineDiarizer, StreamConfig, Strategy, process_block
from .utils import ConfigError, DataError, NumericError

__all__ = [
    "ConfigError",
    "DataError",
    "DiarizationScore",
    "ModelConfig",
    "ModelDetector",
    "NumericError",
    "OnlineDiarizer",
    "OtsVadModel",
    "RttmSegment",
    "ScoringConfig",
    "StreamConfig",
    "Strategy",
    "process_block",
    "score_recordings",
]
