# type: ignore

from .builders import (
    SILENCE,
    index_features,
    speaker_features,
    speaker_recording,
    tiny_model_config,
    tiny_run_config,
    turns,
)
from .detectors import OneHotDetector, ScriptedDetector, group_frames, table_script

__all__ = [
    "SILENCE",
    "OneHotDetector",
    "ScriptedDetector",
    "group_frames",
    "index_features",
    "speaker_features",
    "speaker_recording",
    "table_script",
    "tiny_model_config",
    "tiny_run_config",
    "turns",
]
