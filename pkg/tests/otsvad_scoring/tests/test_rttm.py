import numpy as np
import pytest

from otsvad.scoring import (
    RttmParseError,
    RttmSegment,
    group_by_recording,
    parse_rttm,
    read_rttm,
    segments_from_activity,
    write_rttm,
)
from otsvad.utils import DataError

CANONICAL = (
    "SPEAKER rec1 1 0.800 0.800 <NA> <NA> spk1 <NA> <NA>\n"
    "SPEAKER rec1 1 1.200 2.500 <NA> <NA> spk2 <NA> <NA>\n"
    "SPEAKER rec2 1 0.000 1.000 <NA> <NA> spk1 <NA> <NA>\n"
)


def test_parse_fields():
    segment = parse_rttm("SPEAKER rec1 1 0.80 0.80 <NA> <NA> spk1 <NA> <NA>")[0]
    assert segment == RttmSegment("rec1", 0.80, 0.80, "spk1")
    assert segment.offset_s == pytest.approx(1.6)


def test_round_trip():
    assert write_rttm(parse_rttm(CANONICAL)) == CANONICAL


def test_written_times_keep_milliseconds():
    segment = RttmSegment("rec", 1.234, 0.045, "spk0")
    assert parse_rttm(write_rttm([segment])) == [segment]


def test_short_line_names_minimum_fields():
    with pytest.raises(RttmParseError, match="expected at least 8 fields, got 4"):
        parse_rttm("SPEAKER rec1 1 0.0\n")


def test_empty():
    assert parse_rttm("") == []
    assert write_rttm([]) == ""


def test_skips_comments_and_other_records():
    text = "# header\nSPKR-INFO rec1 1 <NA> <NA> <NA> unknown spk1 <NA> <NA>\n\n" + CANONICAL
    assert len(parse_rttm(text)) == 3


@pytest.mark.parametrize(
    ("text", "line"),
    [
        ("SPEAKER rec1 1 0.0\n", 1),
        (CANONICAL + "SPEAKER rec1 1 x 1.0 <NA> <NA> a <NA> <NA>\n", 4),
        ("SPEAKER rec1 1 1.0 0.0 <NA> <NA> a <NA> <NA>\n", 1),
        ("SPEAKER rec1 1 -1.0 1.0 <NA> <NA> a <NA> <NA>\n", 1),
        ("FOO rec1 1 0.0 1.0 <NA> <NA> a <NA> <NA>\n", 1),
    ],
)
def test_malformed_names_line(text, line):
    with pytest.raises(RttmParseError, match=f"line {line}"):
        parse_rttm(text)


def test_segment_invariants():
    with pytest.raises(ValueError, match="duration"):
        RttmSegment("r", 0.0, 0.0, "a")
    with pytest.raises(ValueError, match="onset"):
        RttmSegment("r", -0.5, 1.0, "a")


def test_group_by_recording():
    grouped = group_by_recording(parse_rttm(CANONICAL))
    assert sorted(grouped) == ["rec1", "rec2"]
    assert len(grouped["rec1"]) == 2


def test_read_missing(tmp_path):
    with pytest.raises(DataError):
        read_rttm(tmp_path / "none.rttm")


def test_segments_from_activity():
    activity = np.zeros((10, 2), dtype=bool)
    activity[2:5, 0] = True
    activity[7:9, 0] = True
    activity[0:3, 1] = True
    segments = segments_from_activity(activity, 0.08, "rec")
    assert [(s.onset_s, s.duration_s, s.speaker_name) for s in segments] == [
        (0.0, 0.24, "spk1"),
        (0.16, 0.24, "spk0"),
        (0.56, 0.16, "spk0"),
    ]
    named = segments_from_activity(activity, 0.08, "rec", ["a", "b"])
    assert {s.speaker_name for s in named} == {"a", "b"}
