from .checkpoint import (
    SCHEMA_VERSION,
    Checkpoint,
    CheckpointError,
    CheckpointMetadata,
    CheckpointVersionError,
    load_checkpoint,
    save_checkpoint,
)
from .layers import (
    BiLSTM,
    ConformerBlock,
    ConformerEncoder,
    ConvModule,
    FeedForward,
    MultiHeadAttention,
    SinusoidalPositionalEncoding,
)
from .loss import bce_loss
from .optim import LrSchedule, MissingGradientError, ParameterStore, adam_step, lr_at
from .ops import (
    OPS,
    ShapeError,
    check_finite,
    gradcheck_op,
    op_forward,
    op_forward_backward,
    register_op,
)

__all__ = [
    "OPS",
    "SCHEMA_VERSION",
    "BiLSTM",
    "Checkpoint",
    "CheckpointError",
    "CheckpointMetadata",
    "CheckpointVersionError",
    "ConformerBlock",
    "ConformerEncoder",
    "ConvModule",
    "FeedForward",
    "LrSchedule",
    "MissingGradientError",
    "MultiHeadAttention",
    "ParameterStore",
    "ShapeError",
    "SinusoidalPositionalEncoding",
    "adam_step",
    "bce_loss",
    "check_finite",
    "gradcheck_op",
    "load_checkpoint",
    "lr_at",
    "op_forward",
    "op_forward_backward",
    "register_op",
    "save_checkpoint",
]
