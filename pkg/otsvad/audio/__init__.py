from .features import FeatureConfig, FeatureMatrix, compute_fbank, compute_multichannel_fbank
from .signal import (
    AudioSignal,
    EmptyInputError,
    InvalidInputError,
    SampleRateError,
    ensure_sample_rate,
    read_wav,
    write_wav,
)
from .vad import (
    TimelineMap,
    VadSegments,
    parse_vad,
    project_to_original_timeline,
    read_vad,
    remove_silence,
    vad_from_segments,
    write_vad,
)

__all__ = [
    "AudioSignal",
    "EmptyInputError",
    "FeatureConfig",
    "FeatureMatrix",
    "InvalidInputError",
    "SampleRateError",
    "TimelineMap",
    "VadSegments",
    "compute_fbank",
    "compute_multichannel_fbank",
    "ensure_sample_rate",
    "parse_vad",
    "project_to_original_timeline",
    "read_vad",
    "read_wav",
    "remove_silence",
    "vad_from_segments",
    "write_vad",
    "write_wav",
]
