from collections.abc import Iterable
from pathlib import Path

from otsvad.utils import BoolArray, DataError, runs

NA = "<NA>"
OTHER_TYPES = frozenset({
    "SEGMENT",
    "NOSCORE",
    "NO_RT_METADATA",
    "LEXEME",
    "NON-LEX",
    "NON-SPEECH",
    "FILLER",
    "SPKR-INFO",
})


class RttmParseError(DataError):
    pass


class RttmSegment:
    def __init__(
        self,
        recording_id: str,
        onset_s: float,
        duration_s: float,
        speaker_name: str,
        channel: str = "1",
    ) -> None:
        if duration_s <= 0:
            msg = f"RTTM segment duration must be positive, got {duration_s}"
            raise ValueError(msg)
        if onset_s < 0:
            msg = f"RTTM segment onset must be non-negative, got {onset_s}"
            raise ValueError(msg)
        self.recording_id = recording_id
        self.onset_s = onset_s
        self.duration_s = duration_s
        self.speaker_name = speaker_name
        self.channel = channel

    @property
    def offset_s(self) -> float:
        return self.onset_s + self.duration_s

    def to_line(self) -> str:
        return (
            f"SPEAKER {self.recording_id} {self.channel} {self.onset_s:.3f} "
            f"{self.duration_s:.3f} {NA} {NA} {self.speaker_name} {NA} {NA}"
        )

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, RttmSegment):
            return NotImplemented
        return (
            self.recording_id == other.recording_id
            and self.onset_s == other.onset_s
            and self.duration_s == other.duration_s
            and self.speaker_name == other.speaker_name
        )

    __hash__ = None  # type: ignore[assignment]

    def __repr__(self) -> str:
        return (
            f"RttmSegment({self.recording_id!r}, {self.onset_s}, {self.duration_s}, "
            f"{self.speaker_name!r})"
        )


def parse_rttm(text: str) -> list[RttmSegment]:
    segments = []
    for number, line in enumerate(text.splitlines(), start=1):
        fields = line.split()
        if not fields or fields[0].startswith("#"):
            continue
        if fields[0] in OTHER_TYPES:
            continue
        if fields[0] != "SPEAKER":
            msg = f"RTTM line {number}: unknown record type {fields[0]!r}"
            raise RttmParseError(msg)
        if len(fields) < 8:
            msg = f"RTTM line {number}: expected at least 8 fields, got {len(fields)}"
            raise RttmParseError(msg)
        try:
            segments.append(
                RttmSegment(
                    recording_id=fields[1],
                    onset_s=float(fields[3]),
                    duration_s=float(fields[4]),
                    speaker_name=fields[7],
                    channel=fields[2],
                ),
            )
        except ValueError as e:
            msg = f"RTTM line {number}: {e}"
            raise RttmParseError(msg) from e
    return segments


def write_rttm(segments: Iterable[RttmSegment]) -> str:
    return "".join(segment.to_line() + "\n" for segment in segments)


def read_rttm(path: str | Path) -> list[RttmSegment]:
    try:
        text = Path(path).read_text()
    except OSError as e:
        msg = f"Cannot read RTTM file {path}: {e}"
        raise DataError(msg) from e
    return parse_rttm(text)


def group_by_recording(segments: Iterable[RttmSegment]) -> dict[str, list[RttmSegment]]:
    grouped: dict[str, list[RttmSegment]] = {}
    for segment in segments:
        grouped.setdefault(segment.recording_id, []).append(segment)
    return grouped


def segments_from_activity(
    activity: BoolArray,
    frame_shift_s: float,
    recording_id: str,
    speaker_names: list[str] | None = None,
) -> list[RttmSegment]:
    """One segment per run of active frames in each column of a ``frames x speakers`` matrix."""
    names = speaker_names or [f"spk{n}" for n in range(activity.shape[1])]
    segments = []
    for n in range(activity.shape[1]):
        for start, stop in runs(activity[:, n]):
            segments.append(
                RttmSegment(
                    recording_id,
                    round(start * frame_shift_s, 6),
                    round((stop - start) * frame_shift_s, 6),
                    names[n],
                ),
            )
    segments.sort(key=lambda s: (s.onset_s, s.speaker_name))
    return segments
