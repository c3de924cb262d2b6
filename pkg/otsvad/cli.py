"""Command-line surface: ``otsvad {train,infer,simulate,score,bench-rtf,tune,sweep}``.

Every command loads one :class:`~otsvad.config.RunConfig` (preset, then
``--config`` YAML, then flags and trailing dotted overrides) and writes the
effective config next to its outputs. Exit codes: 0 success, 2 config error,
3 data error, 4 numeric error.
"""

import argparse
import logging
import sys
from collections.abc import Callable, Sequence
from functools import partial
from pathlib import Path

import numpy as np

from otsvad.audio.signal import read_wav
from otsvad.audio.vad import VadSegments, read_vad
from otsvad.config import PRESETS, RunConfig, load_config, save_effective_config
from otsvad.evaluation import diarize, format_sweep, sweep, tune_thresholds, validation_der
from otsvad.model.model import OtsVadModel
from otsvad.scoring.metrics import score_recordings
from otsvad.scoring.rttm import read_rttm, write_rttm
from otsvad.streaming.detector import ModelDetector
from otsvad.training.corpus import (
    CorpusRecording,
    PreparedRecording,
    load_corpus,
    pool_from_corpus,
    prepare_recording,
    prepare_signal,
    write_recording,
)
from otsvad.training.simulate import (
    AdditiveNoise,
    Augmentation,
    Reverberation,
    SimulationRecipe,
    SpeakerPool,
    random_conversation_labels,
    simulate_conversations,
    synthetic_speaker_pool,
)
from otsvad.training.trainer import DataSources, pretrain_frontend, run_schedule
from otsvad.utils import EMBEDDING_SHIFT_S, ConfigError, DataError, NumericError, seed_everything

logger = logging.getLogger(__name__)

Handler = Callable[[RunConfig, argparse.Namespace], int]


def _corpus(directory: str, key: str) -> list[CorpusRecording]:
    if not directory:
        msg = f"No corpus configured; set {key}"
        raise DataError(msg)
    try:
        return load_corpus(directory)
    except DataError as e:
        msg = f"{key}: {e}"
        raise DataError(msg) from e


def _prepared(directory: str, key: str, config: RunConfig) -> list[PreparedRecording]:
    return [prepare_recording(r, config.features) for r in _corpus(directory, key)]


def _audio_dir(directory: str, key: str) -> list[np.ndarray]:
    files = sorted(Path(directory).glob("*.wav"))
    if not files:
        msg = f"{key}: no .wav files in {directory}"
        raise DataError(msg)
    return [read_wav(f).samples[0] for f in files]


def augmentations(config: RunConfig) -> list[Augmentation]:
    out: list[Augmentation] = []
    if config.paths.rir_dir:
        out.append(Reverberation(_audio_dir(config.paths.rir_dir, "paths.rir_dir")))
    if config.paths.noise_dir:
        snr = (config.simulation.snr_low_db, config.simulation.snr_high_db)
        out.append(AdditiveNoise(_audio_dir(config.paths.noise_dir, "paths.noise_dir"), snr))
    return out


def synthetic_pool(config: RunConfig, rng: np.random.Generator) -> SpeakerPool:
    sim = config.simulation
    return synthetic_speaker_pool(
        sim.num_pool_speakers,
        rng,
        sim.segments_per_speaker,
        sim.segment_s,
        config.features.sample_rate,
    )


def training_sources(config: RunConfig, rng: np.random.Generator) -> tuple[DataSources, SpeakerPool]:
    """Real recordings of ``paths.train_corpus`` and a simulation recipe drawn from the same corpus.

    Without a corpus the recipe falls back to synthetic speakers and random
    conversation labels, which only serves stages that draw no real data.
    """
    sim = config.simulation
    num_speakers = config.model.backend.num_speakers
    real: list[PreparedRecording] = []
    if config.paths.train_corpus:
        corpus = _corpus(config.paths.train_corpus, "paths.train_corpus")
        real = [prepare_recording(r, config.features) for r in corpus]
        pool = pool_from_corpus(corpus)
        label_sources = [r.labels for r in real]
    elif any(stage.real_fraction > 0 for stage in config.training.stages):
        msg = "Training stages draw real data; set paths.train_corpus to a corpus directory"
        raise DataError(msg)
    else:
        pool = synthetic_pool(config, rng)
        frames = round(sim.conversation_s / EMBEDDING_SHIFT_S)
        talkers = min(num_speakers, len(pool))
        label_sources = [
            random_conversation_labels(frames, talkers, rng, sim.mean_turn_frames, sim.overlap_prob)
            for _ in range(sim.num_conversations)
        ]
    recipe = SimulationRecipe(label_sources, pool, num_speakers, augmentations(config))
    channels = real[0].channels if real else 1
    return DataSources(simulation=recipe, real=real, feature_config=config.features, channels=channels), pool


def load_model(config: RunConfig) -> OtsVadModel:
    if not config.paths.checkpoint:
        msg = "No checkpoint given; pass --checkpoint or set paths.checkpoint"
        raise DataError(msg)
    return OtsVadModel.from_checkpoint(config.paths.checkpoint, config.model)


def prepare_input(config: RunConfig, audio: str, vad: str | None) -> PreparedRecording:
    signal = read_wav(audio)
    if vad:
        segments = read_vad(vad)
    else:
        logger.warning("no_vad audio=%s treating the whole recording as speech", audio)
        segments = VadSegments([(0.0, signal.duration_s)])
    recording = prepare_signal(Path(audio).stem, signal, [], segments, config.features)
    if recording.num_frames == 0:
        msg = f"VAD selects no speech in {audio}"
        raise DataError(msg)
    return recording


def cmd_train(config: RunConfig, args: argparse.Namespace) -> int:
    rng = seed_everything(config.seed)
    out = Path(config.paths.out)
    save_effective_config(config, out)
    model = OtsVadModel(config.model)
    sources, pool = training_sources(config, rng)
    validate: Callable[[OtsVadModel], float] | None = None
    if config.paths.dev_corpus:
        dev = _prepared(config.paths.dev_corpus, "paths.dev_corpus", config)
        validate = partial(validation_der, recordings=dev, stream=config.stream, scoring=config.scoring)

    training = config.training
    if training.pretrain_steps > 0 and len(pool) >= 2:
        pretrain_frontend(
            model.frontend,
            pool,
            config.features,
            training.pretrain_steps,
            rng,
            training.pretrain_lr,
            training.batch_size,
            training.pretrain_segment_frames,
        )
    result = run_schedule(model, sources, training, out, seed=config.seed, validate=validate)
    curve = "".join(f"{r.stage}\t{r.step}\t{r.der:.4f}\n" for r in result.state.validation)
    (out / "validation.tsv").write_text("stage\tstep\tder\n" + curve)
    for path in result.checkpoints:
        print(path)
    print(f"final_loss={result.final_loss:.6f} skipped_batches={result.state.skipped_batches}")
    return 0


def cmd_infer(config: RunConfig, args: argparse.Namespace) -> int:
    out = Path(config.paths.out)
    save_effective_config(config, out)
    model = load_model(config)
    recording = prepare_input(config, args.audio, args.vad)
    result = diarize(ModelDetector(model), recording, config.stream, realtime=args.realtime)
    lines = [line for inc in result.report.increments for line in inc.to_lines()]
    (out / f"{recording.recording_id}.increments").write_text("".join(f"{line}\n" for line in lines))
    rttm = out / f"{recording.recording_id}.rttm"
    rttm.write_text(write_rttm(result.segments))
    speakers = len({s.speaker_name for s in result.segments})
    logger.info("infer_done recording=%s speakers=%d rttm=%s", recording.recording_id, speakers, rttm)
    print(rttm)
    return 0


def cmd_bench_rtf(config: RunConfig, args: argparse.Namespace) -> int:
    if args.out:
        save_effective_config(config, args.out)
    model = load_model(config)
    recording = prepare_input(config, args.audio, args.vad)
    report = diarize(ModelDetector(model), recording, config.stream).report
    m = config.stream.block_shift_s
    print(f"blocks={len(report.block_times_s)}")
    print(f"block_length_s={config.stream.block_length_s:.2f} block_shift_s={m:.2f}")
    print(f"mean_block_time_s={report.mean_block_time_s:.4f}")
    print(f"rtf={report.rtf(m):.4f}")
    return 0


def cmd_simulate(config: RunConfig, args: argparse.Namespace) -> int:
    rng = seed_everything(config.seed)
    out = Path(config.paths.out)
    save_effective_config(config, out)
    sim = config.simulation
    pool = synthetic_pool(config, rng)
    mixtures = simulate_conversations(
        pool,
        sim.num_conversations,
        round(sim.conversation_s / EMBEDDING_SHIFT_S),
        config.model.backend.num_speakers,
        rng,
        augmentations(config),
        sim.mean_turn_frames,
        sim.overlap_prob,
    )
    first_dev = sim.num_conversations - sim.dev_conversations
    for i, mixture in enumerate(mixtures):
        split = "dev" if i >= first_dev else "train"
        write_recording(out / split, f"sim{i:04d}", mixture.audio, mixture.labels, mixture.speakers)
    logger.info("simulate_done conversations=%d dev=%d out=%s", sim.num_conversations, sim.dev_conversations, out)
    print(out)
    return 0


def cmd_score(config: RunConfig, args: argparse.Namespace) -> int:
    if args.out:
        save_effective_config(config, args.out)
    score = score_recordings(read_rttm(args.ref), read_rttm(args.hyp), config.scoring)
    sys.stdout.write(score.to_text())
    return 0


def cmd_tune(config: RunConfig, args: argparse.Namespace) -> int:
    if args.out:
        save_effective_config(config, args.out)
    model = load_model(config)
    dev = _prepared(config.paths.dev_corpus, "paths.dev_corpus", config)
    tuning = config.tuning
    results = tune_thresholds(model, dev, config.stream, config.scoring, tuning.thres_upper, tuning.thres_lower)
    for r in results:
        print(f"thres_upper={r.thres_upper:.2f} thres_lower={r.thres_lower:.2f} der={r.score.der:.2f}")
    best = results[0]
    print(f"best stream.thres_upper={best.thres_upper} stream.thres_lower={best.thres_lower}")
    return 0


def cmd_sweep(config: RunConfig, args: argparse.Namespace) -> int:
    model = load_model(config)
    dev = _prepared(config.paths.dev_corpus, "paths.dev_corpus", config)
    rows = sweep(model, dev, config.stream, config.scoring, config.tuning.block_lengths_s, config.tuning.block_shifts_s)
    table = format_sweep(rows)
    out = Path(config.paths.out)
    save_effective_config(config, out)
    (out / "sweep.txt").write_text(table)
    sys.stdout.write(table)
    return 0


def _stream_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--checkpoint", help="trained model checkpoint (paths.checkpoint)")
    parser.add_argument("--strategy", choices=["buffer", "accumulate"], help="target-embedding update strategy")
    parser.add_argument("--block-length-s", type=float, help="block length l in seconds")
    parser.add_argument("--block-shift-s", type=float, help="block shift m in seconds")
    parser.add_argument("--thres-upper", type=float, help="frame selection threshold")
    parser.add_argument("--thres-lower", type=float, help="new-speaker threshold")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML config merged onto the preset")
    common.add_argument("--preset", default="desk", choices=sorted(PRESETS), help="built-in config preset")
    common.add_argument("--seed", type=int, help="random seed")
    common.add_argument("--out", help="output directory (paths.out)")
    common.add_argument("--log-level", default="INFO", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    common.add_argument("overrides", nargs="*", help="dotted overrides, e.g. stream.thres_upper=0.7")

    parser = argparse.ArgumentParser(prog="otsvad", description="Streaming online target-speaker VAD diarization")
    commands = parser.add_subparsers(dest="command", required=True)

    def add(name: str, handler: Handler, help_text: str) -> argparse.ArgumentParser:
        sub = commands.add_parser(name, parents=[common], help=help_text)
        sub.set_defaults(handler=handler)
        return sub

    add("train", cmd_train, "run the staged training schedule")
    infer = add("infer", cmd_infer, "diarize one recording block by block")
    infer.add_argument("--audio", required=True, help="16 kHz WAV, mono or multichannel")
    infer.add_argument("--vad", help="oracle VAD: onset/offset lines or RTTM")
    infer.add_argument("--realtime", action="store_true", help="pace input at real time")
    _stream_flags(infer)
    add("simulate", cmd_simulate, "write a simulated conversation corpus")
    score = add("score", cmd_score, "DER/JER of a hypothesis RTTM")
    score.add_argument("--ref", required=True, help="reference RTTM")
    score.add_argument("--hyp", required=True, help="hypothesis RTTM")
    score.add_argument("--collar", type=float, help="forgiveness collar in seconds (scoring.collar_s)")
    bench = add("bench-rtf", cmd_bench_rtf, "mean block time and real-time factor")
    bench.add_argument("--audio", required=True)
    bench.add_argument("--vad")
    _stream_flags(bench)
    _stream_flags(add("tune", cmd_tune, "grid-search the thresholds on paths.dev_corpus"))
    _stream_flags(add("sweep", cmd_sweep, "DER/JER over block lengths and shifts"))
    return parser


def _overrides(args: argparse.Namespace) -> list[str]:
    flags = {
        "seed": "seed",
        "strategy": "stream.strategy",
        "block_length_s": "stream.block_length_s",
        "block_shift_s": "stream.block_shift_s",
        "thres_upper": "stream.thres_upper",
        "thres_lower": "stream.thres_lower",
        "collar": "scoring.collar_s",
    }
    out = []
    for attr, key in flags.items():
        value = getattr(args, attr, None)
        if value is not None:
            out.append(f"{key}={value.upper() if attr == 'strategy' else value}")
    return out + list(args.overrides)


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=getattr(logging, args.log_level),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    try:
        config = load_config(args.config, _overrides(args), args.preset)
        if args.out:
            config.paths.out = args.out
        if getattr(args, "checkpoint", None):
            config.paths.checkpoint = args.checkpoint
        return args.handler(config, args)  # type: ignore[no-any-return]
    except ConfigError as e:
        logger.error("config_error %s", e)
        return 2
    except DataError as e:
        logger.error("data_error %s", e)
        return 3
    except NumericError as e:
        logger.error("numeric_error %s", e)
        return 4
