import logging
from collections.abc import Mapping, Sequence
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from otsvad.scoring.rttm import RttmSegment, group_by_recording
from otsvad.utils import BoolArray, ConfigError, DataError, IntArray

logger = logging.getLogger(__name__)


class ScoringError(DataError):
    pass


@dataclass
class ScoringConfig:
    collar_s: float = 0.0
    frame_step_s: float = 0.01
    score_overlap: bool = True

    def __post_init__(self) -> None:
        if self.collar_s < 0:
            msg = f"scoring.collar_s must be >= 0, got {self.collar_s}"
            raise ConfigError(msg)
        if not self.score_overlap:
            msg = "scoring.score_overlap must stay enabled; overlapped speech is always scored"
            raise ConfigError(msg)


@dataclass
class DiarizationScore:
    der: float
    miss: float
    false_alarm: float
    confusion: float
    scored_time_s: float
    jer: float
    collar_s: float
    num_recordings: int = 1

    def to_text(self) -> str:
        rows = [
            ("DER", self.der),
            ("MISS", self.miss),
            ("FALARM", self.false_alarm),
            ("CONFUSION", self.confusion),
            ("JER", self.jer),
        ]
        lines = [f"{name:<10} {value:8.2f} %" for name, value in rows]
        lines.append(f"{'SCORED':<10} {self.scored_time_s:8.2f} s")
        lines.append(f"{'COLLAR':<10} {self.collar_s:8.2f} s")
        lines.append(f"{'FILES':<10} {self.num_recordings:8d}")
        return "\n".join(lines) + "\n"


class _FrameScoring:
    """Frame-quantised activity of one recording with its scoring mask."""

    def __init__(
        self,
        reference: Sequence[RttmSegment],
        hypothesis: Sequence[RttmSegment],
        config: ScoringConfig,
    ) -> None:
        if not reference:
            msg = "Reference is empty; DER is undefined"
            raise ScoringError(msg)
        ids = {s.recording_id for s in reference} | {s.recording_id for s in hypothesis}
        if len(ids) != 1:
            msg = f"Expected a single recording id, got {sorted(ids)}"
            raise ScoringError(msg)
        step = config.frame_step_s
        end = max(s.offset_s for s in (*reference, *hypothesis))
        num_frames = _frame(end, step) + 1
        self.ref_names = sorted({s.speaker_name for s in reference})
        self.hyp_names = sorted({s.speaker_name for s in hypothesis})
        self.ref = _activity(reference, self.ref_names, num_frames, step)
        self.hyp = _activity(hypothesis, self.hyp_names, num_frames, step)
        self.scored = _collar_mask(reference, num_frames, step, config.collar_s)
        self.step = step

    def counts(self) -> tuple[IntArray, IntArray]:
        ref = self.ref[self.scored].astype(np.int64)
        hyp = self.hyp[self.scored].astype(np.int64)
        return ref, hyp

    def mapping(self) -> list[tuple[int, int]]:
        ref, hyp = self.counts()
        if not ref.shape[1] or not hyp.shape[1]:
            return []
        overlap = ref.T @ hyp
        rows, cols = linear_sum_assignment(-overlap)
        return [(int(r), int(c)) for r, c in zip(rows, cols, strict=True)]


def _frame(seconds: float, step: float) -> int:
    return round(seconds / step)


def _activity(
    segments: Sequence[RttmSegment],
    names: list[str],
    num_frames: int,
    step: float,
) -> BoolArray:
    index = {name: i for i, name in enumerate(names)}
    activity = np.zeros((num_frames, len(names)), dtype=bool)
    for s in segments:
        activity[_frame(s.onset_s, step) : _frame(s.offset_s, step), index[s.speaker_name]] = True
    return activity


def _collar_mask(
    reference: Sequence[RttmSegment],
    num_frames: int,
    step: float,
    collar_s: float,
) -> BoolArray:
    scored = np.ones(num_frames, dtype=bool)
    if collar_s <= 0:
        return scored
    for s in reference:
        for boundary in (s.onset_s, s.offset_s):
            lo = max(_frame(boundary - collar_s, step), 0)
            hi = min(_frame(boundary + collar_s, step), num_frames)
            scored[lo:hi] = False
    return scored


def _der_counts(frames: _FrameScoring) -> tuple[int, int, int, int]:
    ref, hyp = frames.counts()
    n_ref = ref.sum(axis=1)
    n_hyp = hyp.sum(axis=1)
    correct = np.zeros_like(n_ref)
    for r, h in frames.mapping():
        correct += ref[:, r] & hyp[:, h]
    scored = int(n_ref.sum())
    miss = int(np.maximum(n_ref - n_hyp, 0).sum())
    false_alarm = int(np.maximum(n_hyp - n_ref, 0).sum())
    confusion = int((np.minimum(n_ref, n_hyp) - correct).sum())
    return scored, miss, false_alarm, confusion


def _jer_terms(frames: _FrameScoring) -> list[float]:
    ref, hyp = frames.counts()
    mapped = dict(frames.mapping())
    errors = []
    for r in range(ref.shape[1]):
        ref_frames = ref[:, r].astype(bool)
        if not ref_frames.any():
            continue
        if r not in mapped:
            errors.append(1.0)
            continue
        hyp_frames = hyp[:, mapped[r]].astype(bool)
        union = np.count_nonzero(ref_frames | hyp_frames)
        errors.append(1.0 - np.count_nonzero(ref_frames & hyp_frames) / union)
    return errors


def _percentages(scored: int, miss: int, false_alarm: int, confusion: int) -> tuple[float, ...]:
    if scored == 0:
        msg = "No scored reference speech remains after applying the collar"
        raise ScoringError(msg)
    parts = (100.0 * miss / scored, 100.0 * false_alarm / scored, 100.0 * confusion / scored)
    return (parts[0] + parts[1] + parts[2], *parts)


def compute_der(
    reference: Sequence[RttmSegment],
    hypothesis: Sequence[RttmSegment],
    config: ScoringConfig | None = None,
) -> DiarizationScore:
    config = config or ScoringConfig()
    frames = _FrameScoring(reference, hypothesis, config)
    scored, miss, false_alarm, confusion = _der_counts(frames)
    der, miss_pct, fa_pct, conf_pct = _percentages(scored, miss, false_alarm, confusion)
    jer_terms = _jer_terms(frames)
    return DiarizationScore(
        der=der,
        miss=miss_pct,
        false_alarm=fa_pct,
        confusion=conf_pct,
        scored_time_s=scored * config.frame_step_s,
        jer=100.0 * float(np.mean(jer_terms)),
        collar_s=config.collar_s,
    )


def compute_jer(
    reference: Sequence[RttmSegment],
    hypothesis: Sequence[RttmSegment],
    config: ScoringConfig | None = None,
) -> float:
    config = config or ScoringConfig()
    terms = _jer_terms(_FrameScoring(reference, hypothesis, config))
    if not terms:
        msg = "No scored reference speech remains after applying the collar"
        raise ScoringError(msg)
    return 100.0 * float(np.mean(terms))


def score_recordings(
    reference: Mapping[str, Sequence[RttmSegment]] | Sequence[RttmSegment],
    hypothesis: Mapping[str, Sequence[RttmSegment]] | Sequence[RttmSegment],
    config: ScoringConfig | None = None,
) -> DiarizationScore:
    """Score several recordings, summing times and mapping speakers per recording."""
    config = config or ScoringConfig()
    if not isinstance(reference, Mapping):
        reference = group_by_recording(reference)
    if not isinstance(hypothesis, Mapping):
        hypothesis = group_by_recording(hypothesis)
    if not reference:
        msg = "Reference is empty; DER is undefined"
        raise ScoringError(msg)
    extra = set(hypothesis) - set(reference)
    if extra:
        logger.warning("hypothesis_without_reference ids=%s", ",".join(sorted(extra)))

    totals = np.zeros(4, dtype=np.int64)
    jer_terms: list[float] = []
    for recording_id, ref in reference.items():
        frames = _FrameScoring(ref, hypothesis.get(recording_id, []), config)
        totals += _der_counts(frames)
        jer_terms.extend(_jer_terms(frames))
    der, miss, fa, conf = _percentages(*(int(v) for v in totals))
    return DiarizationScore(
        der=der,
        miss=miss,
        false_alarm=fa,
        confusion=conf,
        scored_time_s=int(totals[0]) * config.frame_step_s,
        jer=100.0 * float(np.mean(jer_terms)),
        collar_s=config.collar_s,
        num_recordings=len(reference),
    )
