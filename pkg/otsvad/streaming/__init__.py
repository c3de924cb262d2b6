from .detector import Detector, ModelDetector
from .engine import (
    FeatureBlock,
    FinalLabels,
    accumulate_update,
    block_windows,
    current_targets,
    detect_new_speaker,
    finalize,
    init_first_block,
    process_block,
    prune_buffer,
    run_stream,
    targets_from_buffer,
)
from .online import OnlineDiarizer, StreamReport, play, real_time_factor
from .state import (
    BLOCK_LENGTHS_S,
    BLOCK_SHIFTS_S,
    AccumulatorState,
    BufferState,
    Increment,
    OutputBuffer,
    StreamConfig,
    StreamError,
    StreamState,
    Strategy,
)

__all__ = [
    "BLOCK_LENGTHS_S",
    "BLOCK_SHIFTS_S",
    "AccumulatorState",
    "BufferState",
    "Detector",
    "FeatureBlock",
    "FinalLabels",
    "Increment",
    "ModelDetector",
    "OnlineDiarizer",
    "OutputBuffer",
    "StreamConfig",
    "StreamError",
    "StreamReport",
    "StreamState",
    "Strategy",
    "accumulate_update",
    "block_windows",
    "current_targets",
    "detect_new_speaker",
    "finalize",
    "init_first_block",
    "play",
    "process_block",
    "prune_buffer",
    "real_time_factor",
    "run_stream",
    "targets_from_buffer",
]
