from .metrics import (
    DiarizationScore,
    ScoringConfig,
    ScoringError,
    compute_der,
    compute_jer,
    score_recordings,
)
from .rttm import (
    RttmParseError,
    RttmSegment,
    group_by_recording,
    parse_rttm,
    read_rttm,
    segments_from_activity,
    write_rttm,
)

__all__ = [
    "DiarizationScore",
    "RttmParseError",
    "RttmSegment",
    "ScoringConfig",
    "ScoringError",
    "compute_der",
    "compute_jer",
    "group_by_recording",
    "parse_rttm",
    "read_rttm",
    "score_recordings",
    "segments_from_activity",
    "write_rttm",
]
