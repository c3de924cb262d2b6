from .blocks import (
    Chunk,
    align_right_labels,
    as_tensor,
    extract_target_embeddings,
    mask_overlaps,
    maybe_replace_left,
    split_blocks,
    split_chunk,
)
from .corpus import (
    CorpusRecording,
    PreparedRecording,
    downsample_labels,
    frame_activity,
    load_corpus,
    pool_from_corpus,
    pool_from_recordings,
    prepare_recording,
    prepare_signal,
    real_chunk,
    write_recording,
)
from .simulate import (
    AdditiveNoise,
    Augmentation,
    Reverberation,
    SimulatedMixture,
    SimulationRecipe,
    SpeakerPool,
    choose_label_segment,
    random_conversation_labels,
    simulate_conversations,
    simulate_mixture,
    synthetic_speaker_pool,
)
from .trainer import (
    Batch,
    BatchProducer,
    DataSources,
    ScheduleResult,
    TrainerState,
    TrainingConfig,
    TrainingStage,
    ValidationRecord,
    choose_real,
    features_for,
    make_batch,
    pipeline_loss,
    pretrain_frontend,
    run_schedule,
    simulated_chunk,
    simulated_left,
    stage_store,
    train_step,
)

__all__ = [
    "AdditiveNoise",
    "Augmentation",
    "Batch",
    "BatchProducer",
    "Chunk",
    "CorpusRecording",
    "DataSources",
    "PreparedRecording",
    "Reverberation",
    "ScheduleResult",
    "SimulatedMixture",
    "SimulationRecipe",
    "SpeakerPool",
    "TrainerState",
    "TrainingConfig",
    "TrainingStage",
    "ValidationRecord",
    "align_right_labels",
    "as_tensor",
    "choose_label_segment",
    "choose_real",
    "downsample_labels",
    "extract_target_embeddings",
    "features_for",
    "frame_activity",
    "load_corpus",
    "make_batch",
    "mask_overlaps",
    "maybe_replace_left",
    "pipeline_loss",
    "pool_from_corpus",
    "pool_from_recordings",
    "prepare_recording",
    "prepare_signal",
    "pretrain_frontend",
    "random_conversation_labels",
    "real_chunk",
    "run_schedule",
    "simulate_conversations",
    "simulate_mixture",
    "simulated_chunk",
    "simulated_left",
    "split_blocks",
    "split_chunk",
    "stage_store",
    "train_step",
    "write_recording",
]
