from .backend import (
    Backend,
    BackendConfig,
    JointMode,
    TargetSpeakerBank,
    concat_speaker_frames,
    detect_forward,
)
from .frontend import (
    ConformerFrontend,
    FrameEmbeddings,
    Frontend,
    FrontendConfig,
    FrontendVariant,
    ResidualFrontend,
    build_frontend,
    conformer_frontend_forward,
    count_parameters,
    frame_gsp,
    residual_frontend_forward,
)
from .model import ModelConfig, OtsVadModel
from .multichannel import (
    CrossChannelAttention,
    MultichannelConfig,
    MultichannelEncoder,
    build_channel_stack,
    channel_average_pool,
    cross_channel_attention,
    mc_detect_forward,
)

__all__ = [
    "Backend",
    "BackendConfig",
    "ConformerFrontend",
    "CrossChannelAttention",
    "FrameEmbeddings",
    "Frontend",
    "FrontendConfig",
    "FrontendVariant",
    "JointMode",
    "ModelConfig",
    "MultichannelConfig",
    "MultichannelEncoder",
    "OtsVadModel",
    "ResidualFrontend",
    "TargetSpeakerBank",
    "build_channel_stack",
    "build_frontend",
    "channel_average_pool",
    "concat_speaker_frames",
    "conformer_frontend_forward",
    "count_parameters",
    "cross_channel_attention",
    "detect_forward",
    "frame_gsp",
    "mc_detect_forward",
    "residual_frontend_forward",
]
