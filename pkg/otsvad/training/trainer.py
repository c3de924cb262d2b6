import logging
import math
from collections import deque
from collections.abc import Callable, Collection, Iterator, Sequence
from concurrent.futures import Future, ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import partial
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F
from torch import Tensor, nn

from otsvad.audio.features import FeatureConfig, compute_fbank
from otsvad.audio.signal import AudioSignal
from otsvad.model.frontend import Frontend
from otsvad.model.model import OtsVadModel
from otsvad.nn.loss import bce_loss
from otsvad.nn.optim import LrSchedule, ParameterStore, adam_step, lr_at
from otsvad.training.blocks import (
    Chunk,
    align_right_labels,
    as_tensor,
    extract_target_embeddings,
    mask_overlaps,
    maybe_replace_left,
    split_chunk,
)
from otsvad.training.corpus import PreparedRecording, real_chunk
from otsvad.training.simulate import SimulationRecipe, SpeakerPool, choose_label_segment, simulate_mixture
from otsvad.utils import SUBSAMPLING, BoolArray, ConfigError, DataError, FloatArray

logger = logging.getLogger(__name__)


@dataclass
class TrainingStage:
    steps: int = 200
    frozen_frontend: bool = False
    real_fraction: float = 0.0
    max_lr: float = 1e-4
    warmup_steps: int = 20

    def __post_init__(self) -> None:
        if self.steps <= 0:
            msg = f"training stage steps must be positive, got {self.steps}"
            raise ConfigError(msg)
        if not 0.0 <= self.real_fraction <= 1.0:
            msg = f"training stage real_fraction must lie in [0, 1], got {self.real_fraction}"
            raise ConfigError(msg)


def _desk_stages() -> list[TrainingStage]:
    return [
        TrainingStage(steps=200, frozen_frontend=True, real_fraction=0.0, max_lr=1e-4),
        TrainingStage(steps=200, frozen_frontend=False, real_fraction=0.2, max_lr=1e-5),
        TrainingStage(steps=200, frozen_frontend=False, real_fraction=1.0, max_lr=5e-6),
    ]


@dataclass
class TrainingConfig:
    stages: list[TrainingStage] = field(default_factory=_desk_stages)
    block_frames: int = 512
    batch_size: int = 8
    replace_prob: float = 0.5
    validation_period: int = 100
    log_period: int = 20
    num_workers: int = 2
    prefetch: int = 4
    pretrain_steps: int = 200
    pretrain_lr: float = 1e-3
    pretrain_segment_frames: int = 200

    def __post_init__(self) -> None:
        if self.block_frames <= 0 or self.block_frames % (2 * SUBSAMPLING):
            msg = f"training.block_frames must be a positive multiple of {2 * SUBSAMPLING}, got {self.block_frames}"
            raise ConfigError(msg)
        if not 0.0 <= self.replace_prob <= 1.0:
            msg = f"training.replace_prob must lie in [0, 1], got {self.replace_prob}"
            raise ConfigError(msg)
        if not self.stages:
            msg = "training.stages is empty"
            raise ConfigError(msg)


@dataclass
class DataSources:
    simulation: SimulationRecipe | None = None
    real: list[PreparedRecording] = field(default_factory=list)
    feature_config: FeatureConfig = field(default_factory=FeatureConfig)
    channels: int = 1


@dataclass
class Batch:
    left_features: FloatArray
    left_labels: FloatArray
    right_features: FloatArray
    right_labels: FloatArray
    real: BoolArray
    replaced: BoolArray

    @property
    def size(self) -> int:
        return int(self.left_features.shape[0])


@dataclass
class ValidationRecord:
    stage: int
    step: int
    der: float


@dataclass
class TrainerState:
    global_step: int = 0
    skipped_batches: int = 0
    losses: list[float] = field(default_factory=list)
    validation: list[ValidationRecord] = field(default_factory=list)


@dataclass
class ScheduleResult:
    checkpoints: list[Path]
    state: TrainerState

    @property
    def final_loss(self) -> float:
        return self.state.losses[-1] if self.state.losses else math.nan


def choose_real(rng: np.random.Generator, real_fraction: float) -> bool:
    return bool(rng.random() < real_fraction)


def features_for(
    audio: AudioSignal,
    num_frames: int,
    config: FeatureConfig,
    channels: int = 1,
) -> FloatArray:
    """``channels x H x num_frames`` features of mono ``audio``, edge-padded or cropped."""
    values = compute_fbank(audio, config).values[:, :num_frames]
    if values.shape[1] < num_frames:
        values = np.pad(values, ((0, 0), (0, num_frames - values.shape[1])), mode="edge")
    return np.repeat(values[None].astype(np.float32), channels, axis=0)


def simulated_chunk(
    recipe: SimulationRecipe,
    num_frames: int,
    sources: DataSources,
    rng: np.random.Generator,
    labels: FloatArray | None = None,
    speakers: Sequence[str | None] | None = None,
    exclude: Collection[str] = (),
) -> Chunk:
    mixture = simulate_mixture(
        recipe, num_frames // SUBSAMPLING, rng, labels=labels, speakers=speakers, exclude=exclude
    )
    features = features_for(mixture.audio, num_frames, sources.feature_config, sources.channels)
    return Chunk(features, mixture.labels, mixture.speakers)


def simulated_left(
    recipe: SimulationRecipe,
    right: Chunk,
    num_frames: int,
    sources: DataSources,
    rng: np.random.Generator,
) -> Chunk:
    """A simulated left block whose columns reuse the right block's speakers where the pool has them.

    Other columns draw pool speakers absent from the right block; pair the
    result with :func:`align_right_labels`.
    """
    labels = choose_label_segment(recipe, num_frames // SUBSAMPLING, rng)
    known = set(recipe.pool.speakers)
    speakers: list[str | None] = []
    for n, s in enumerate(right.speakers[: labels.shape[1]]):
        pin = s is not None and s in known and s not in speakers and bool(right.labels[:, n].any())
        speakers.append(s if pin else None)
    speakers += [None] * (labels.shape[1] - len(speakers))
    exclude = {s for s in right.speakers if s is not None}
    return simulated_chunk(recipe, num_frames, sources, rng, labels=labels, speakers=speakers, exclude=exclude)


def make_batch(
    sources: DataSources,
    stage: TrainingStage,
    config: TrainingConfig,
    num_speakers: int,
    index: int,
    rng: np.random.Generator,
) -> Batch:
    lefts, rights, real, replaced = [], [], [], []
    half = config.block_frames // 2
    for _ in range(config.batch_size):
        is_real = choose_real(rng, stage.real_fraction)
        if is_real:
            recording = sources.real[int(rng.integers(len(sources.real)))]
            chunk = real_chunk(recording, config.block_frames, num_speakers, rng)
        else:
            assert sources.simulation is not None
            chunk = simulated_chunk(sources.simulation, config.block_frames, sources, rng)
        left, right = split_chunk(chunk)
        recipe = sources.simulation
        if recipe is not None:
            new_left = maybe_replace_left(
                left,
                partial(simulated_left, recipe, right, half, sources, rng),
                config.replace_prob,
                rng,
            )
            if new_left is not left:
                right = align_right_labels(new_left, right)
        else:
            new_left = left
        lefts.append(new_left)
        rights.append(right)
        real.append(is_real)
        replaced.append(new_left is not left)
    return Batch(
        left_features=np.stack([c.features for c in lefts]),
        left_labels=np.stack([c.labels for c in lefts]),
        right_features=np.stack([c.features for c in rights]),
        right_labels=np.stack([c.labels for c in rights]),
        real=np.array(real),
        replaced=np.array(replaced),
    )


class BatchProducer:
    """Builds batches on worker threads, yielding them in index order.

    Batch ``i`` draws from ``default_rng((*seed, i))`` so the stream does not
    depend on the worker count.
    """

    def __init__(
        self,
        make: Callable[[int, np.random.Generator], Batch],
        seed: Sequence[int],
        num_workers: int = 2,
        prefetch: int = 4,
    ) -> None:
        self.make = make
        self.seed = tuple(seed)
        self.num_workers = num_workers
        self.prefetch = max(1, prefetch)

    def build(self, index: int) -> Batch:
        return self.make(index, np.random.default_rng((*self.seed, index)))

    def batches(self, count: int, start: int = 0) -> Iterator[Batch]:
        if self.num_workers <= 0:
            for index in range(start, start + count):
                yield self.build(index)
            return
        with ThreadPoolExecutor(max_workers=self.num_workers) as pool:
            pending: deque[Future[Batch]] = deque()
            next_index = start
            for _ in range(count):
                while len(pending) < self.prefetch and next_index < start + count:
                    pending.append(pool.submit(self.build, next_index))
                    next_index += 1
                yield pending.popleft().result()


def pipeline_loss(
    model: OtsVadModel,
    left_features: Tensor,
    left_labels: Tensor,
    right_features: Tensor,
    right_labels: Tensor,
    frozen_frontend: bool = False,
) -> tuple[Tensor | None, Tensor]:
    """BCE of the right block detected with targets built from the left block.

    Returns ``(None, active)`` when no speaker has a target frame.
    """
    with torch.set_grad_enabled(torch.is_grad_enabled() and not frozen_frontend):
        left = model.embed(left_features)
        right = model.embed(right_features)
    masked = torch.as_tensor(mask_overlaps(left_labels.detach().cpu().numpy()), dtype=left.dtype)
    batch, channels = left.shape[:2]
    masked = masked[:, None].expand(batch, channels, *masked.shape[1:])
    bank = extract_target_embeddings(left, masked)
    active = bank.active[:, 0]
    if not bool(active.any()):
        return None, active
    probs = model.detect(bank.values, right)
    mask = active[:, None, :].expand_as(probs)
    return bce_loss(probs, right_labels.to(probs.dtype), mask), active


def train_step(
    batch: Batch,
    model: OtsVadModel,
    store: ParameterStore,
    schedule: LrSchedule,
    step: int,
    state: TrainerState,
    frozen_frontend: bool = False,
) -> float | None:
    model.train()
    if frozen_frontend:
        model.frontend.eval()
    loss, _ = pipeline_loss(
        model,
        as_tensor(batch.left_features),
        as_tensor(batch.left_labels),
        as_tensor(batch.right_features),
        as_tensor(batch.right_labels),
        frozen_frontend,
    )
    if loss is None:
        state.skipped_batches += 1
        logger.warning("batch_skipped reason=no_target_frames step=%d skipped=%d", step, state.skipped_batches)
        return None
    model.zero_grad(set_to_none=True)
    loss.backward()
    grads = {name: store.parameters[name].grad for name in store.trainable}
    adam_step(store, grads, lr_at(schedule, step))
    value = float(loss.detach())
    state.losses.append(value)
    state.global_step += 1
    return value


def stage_store(model: OtsVadModel, frozen_frontend: bool) -> ParameterStore:
    return ParameterStore(
        (name, p) for name, p in model.named_parameters() if not (frozen_frontend and name.startswith("frontend."))
    )


def _check_sources(sources: DataSources, stage: TrainingStage, k: int) -> None:
    if stage.real_fraction > 0 and not sources.real:
        msg = f"Stage {k} draws real data (real_fraction={stage.real_fraction}) but no real recordings were given"
        raise DataError(msg)
    if stage.real_fraction < 1 and sources.simulation is None:
        msg = f"Stage {k} draws simulated data but no simulation recipe was given"
        raise DataError(msg)


def run_schedule(
    model: OtsVadModel,
    sources: DataSources,
    config: TrainingConfig,
    out_dir: str | Path,
    seed: int = 0,
    validate: Callable[[OtsVadModel], float] | None = None,
) -> ScheduleResult:
    """Run every stage in order, keeping the best-validation checkpoint of each stage.

    Without ``validate`` the criterion is the mean training loss since the
    previous check.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for k, stage in enumerate(config.stages, start=1):
        _check_sources(sources, stage, k)
    state = TrainerState()
    checkpoints = []
    for k, stage in enumerate(config.stages, start=1):
        store = stage_store(model, stage.frozen_frontend)
        schedule = LrSchedule(stage.max_lr, min(stage.warmup_steps, stage.steps), stage.steps)
        logger.info(
            "stage_start stage=%d steps=%d max_lr=%.1e frozen_frontend=%s real_fraction=%.2f",
            k,
            stage.steps,
            stage.max_lr,
            stage.frozen_frontend,
            stage.real_fraction,
        )
        producer = BatchProducer(
            partial(make_batch, sources, stage, config, model.num_speakers),
            seed=(seed, k),
            num_workers=config.num_workers,
            prefetch=config.prefetch,
        )
        best = math.inf
        path = out / f"stage{k}_best.ckpt"
        window: list[float] = []
        for i, batch in enumerate(producer.batches(stage.steps)):
            loss = train_step(batch, model, store, schedule, i, state, stage.frozen_frontend)
            if loss is not None:
                window.append(loss)
            if (i + 1) % config.log_period == 0 and loss is not None:
                logger.info("stage=%d step=%d loss=%.4f lr=%.1e", k, i + 1, loss, lr_at(schedule, i))
            if (i + 1) % config.validation_period and i + 1 != stage.steps:
                continue
            model.eval()
            score = validate(model) if validate else float(np.mean(window)) if window else math.inf
            window = []
            state.validation.append(ValidationRecord(k, i + 1, score))
            logger.info("validation stage=%d step=%d der=%.2f", k, i + 1, score)
            if score < best or not path.exists():
                best = score
                model.save(path, {"stage": k, "step": i + 1, "der": score})
        logger.info("stage_end stage=%d best=%.4f skipped=%d checkpoint=%s", k, best, state.skipped_batches, path)
        checkpoints.append(path)
    return ScheduleResult(checkpoints, state)


def pretrain_frontend(
    frontend: Frontend,
    pool: SpeakerPool,
    feature_config: FeatureConfig,
    steps: int,
    rng: np.random.Generator,
    lr: float = 1e-3,
    batch_size: int = 8,
    segment_frames: int = 200,
) -> list[float]:
    """Speaker-ID classification over the pool: mean-pooled frame embeddings into a linear classifier."""
    names = pool.speakers
    if len(names) < 2:
        msg = "Front-end pretraining needs at least two pool speakers"
        raise DataError(msg)
    head = nn.Linear(frontend.embedding_dim, len(names))
    store = ParameterStore(
        [
            *(("frontend." + n, p) for n, p in frontend.named_parameters()),
            *(("head." + n, p) for n, p in head.named_parameters()),
        ],
    )
    schedule = LrSchedule(lr, max(1, steps // 10), steps)
    samples = (segment_frames - 1) * feature_config.shift_samples + feature_config.frame_samples
    frontend.train()
    losses = []
    for step in range(steps):
        targets = rng.integers(len(names), size=batch_size)
        segments = [AudioSignal(pool.stream(names[t], samples, rng), pool.sample_rate) for t in targets]
        batch = np.stack([features_for(s, segment_frames, feature_config)[0] for s in segments])
        logits = head(frontend(as_tensor(batch)).mean(dim=1))
        loss = F.cross_entropy(logits, torch.as_tensor(targets, dtype=torch.long))
        frontend.zero_grad(set_to_none=True)
        head.zero_grad(set_to_none=True)
        loss.backward()
        grads = {name: store.parameters[name].grad for name in store.trainable}
        adam_step(store, grads, lr_at(schedule, step + 1))
        losses.append(float(loss.detach()))
        if (step + 1) % 50 == 0:
            logger.info("pretrain step=%d loss=%.4f", step + 1, losses[-1])
    return losses
