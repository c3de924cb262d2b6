from collections.abc import Iterable, Iterator, Sequence
from pathlib import Path
from typing import ClassVar

import numpy as np

from otsvad.audio.features import FeatureMatrix
from otsvad.scoring.rttm import RttmSegment, parse_rttm
from otsvad.utils import DataError, IntArray


class VadSegments:
    """Sorted, disjoint speech intervals ``(onset_s, offset_s)``."""

    def __init__(self, intervals: Iterable[tuple[float, float]] = ()) -> None:
        self.intervals = [(float(a), float(b)) for a, b in intervals]
        prev_end = -np.inf
        for onset, offset in self.intervals:
            if not onset < offset:
                msg = f"VAD interval ({onset}, {offset}) has onset >= offset"
                raise DataError(msg)
            if onset < prev_end:
                msg = f"VAD intervals are unsorted or overlap at {onset}"
                raise DataError(msg)
            prev_end = offset

    @classmethod
    def merged(cls, intervals: Iterable[tuple[float, float]]) -> "VadSegments":
        merged: list[list[float]] = []
        for onset, offset in sorted(intervals):
            if offset <= onset:
                continue
            if merged and onset <= merged[-1][1]:
                merged[-1][1] = max(merged[-1][1], offset)
            else:
                merged.append([onset, offset])
        return cls((a, b) for a, b in merged)

    def __iter__(self) -> Iterator[tuple[float, float]]:
        return iter(self.intervals)

    def __len__(self) -> int:
        return len(self.intervals)

    @property
    def total_s(self) -> float:
        return sum(b - a for a, b in self.intervals)

    def contains(self, times: np.ndarray) -> np.ndarray:
        inside = np.zeros(times.shape, dtype=bool)
        for onset, offset in self.intervals:
            inside |= (times >= onset) & (times < offset)
        return inside

    def __repr__(self) -> str:
        return f"VadSegments({self.intervals})"


class TimelineMap:
    """Monotone map from post-silence-removal frame indices to original ones."""

    empty: ClassVar["TimelineMap"]

    def __init__(self, image: Sequence[int] | IntArray) -> None:
        image = np.asarray(image, dtype=np.int64)
        if image.ndim != 1 or (image.size > 1 and np.any(np.diff(image) <= 0)):
            msg = "TimelineMap image must be a strictly increasing index sequence"
            raise DataError(msg)
        self.image = image

    @classmethod
    def identity(cls, num_frames: int) -> "TimelineMap":
        return cls(np.arange(num_frames))

    def __len__(self) -> int:
        return int(self.image.size)

    def project(self, index: int) -> int:
        if not 0 <= index < self.image.size:
            msg = f"Frame {index} is outside the timeline map domain [0, {self.image.size})"
            raise IndexError(msg)
        return int(self.image[index])

    def project_many(self, indices: IntArray) -> IntArray:
        indices = np.asarray(indices, dtype=np.int64)
        if indices.size and (indices.min() < 0 or indices.max() >= self.image.size):
            msg = f"Frame indices fall outside the timeline map domain [0, {self.image.size})"
            raise IndexError(msg)
        return self.image[indices]

    def inverse(self, original: int) -> int:
        pos = int(np.searchsorted(self.image, original))
        if pos >= self.image.size or self.image[pos] != original:
            msg = f"Original frame {original} was removed as silence"
            raise IndexError(msg)
        return pos

    def __eq__(self, other: object) -> bool:
        return isinstance(other, TimelineMap) and np.array_equal(self.image, other.image)

    __hash__ = None  # type: ignore[assignment]


TimelineMap.empty = TimelineMap([])


def remove_silence(features: FeatureMatrix, vad: VadSegments) -> tuple[FeatureMatrix, TimelineMap]:
    """Keep the frames whose centres fall inside a VAD interval."""
    keep = np.flatnonzero(vad.contains(features.frame_centers()))
    return features.take(keep), TimelineMap(keep)


def project_to_original_timeline(frame_index: int, timeline: TimelineMap) -> int:
    return timeline.project(frame_index)


def parse_vad(text: str) -> VadSegments:
    lines = [line for line in text.splitlines() if line.strip()]
    if lines and lines[0].split()[0] == "SPEAKER":
        return vad_from_segments(parse_rttm(text))
    intervals = []
    for number, line in enumerate(lines, start=1):
        fields = line.split()
        if len(fields) != 2:
            msg = f"VAD line {number}: expected 'onset_s offset_s', got {line!r}"
            raise DataError(msg)
        try:
            intervals.append((float(fields[0]), float(fields[1])))
        except ValueError as e:
            msg = f"VAD line {number}: {e}"
            raise DataError(msg) from e
    return VadSegments.merged(intervals)


def read_vad(path: str | Path) -> VadSegments:
    try:
        text = Path(path).read_text()
    except OSError as e:
        msg = f"Cannot read VAD file {path}: {e}"
        raise DataError(msg) from e
    return parse_vad(text)


def write_vad(path: str | Path, vad: VadSegments) -> None:
    Path(path).write_text("".join(f"{a:.3f} {b:.3f}\n" for a, b in vad))


def vad_from_segments(segments: Iterable[RttmSegment]) -> VadSegments:
    return VadSegments.merged((s.onset_s, s.onset_s + s.duration_s) for s in segments)
