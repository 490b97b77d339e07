import pytest

from conftest import make_point
from streamladder.errors import DuplicatePoint, MalformedRow, MissingQualityColumn
from streamladder.rqtable import parse_rq_table, serialize_rq_table
from streamladder.zones import Resolution

FIVE_TARGETS = (2.0, 3.5, 7.5, 12.5, 17.5)


def grid_points():
    points = []
    for res in (Resolution.R360P, Resolution.R540P, Resolution.R720P, Resolution.R1080P):
        for t in FIVE_TARGETS:
            points.append(make_point(rate=t * 1.01, quality=50 + t, resolution=res, target=t))
    return points


def test_single_scene_grid_groups_into_twenty_points():
    groups = parse_rq_table(serialize_rq_table(grid_points()))
    assert list(groups) == [("synth", "s0000")]
    assert len(groups[("synth", "s0000")]) == 20


def test_sorted_by_resolution_then_target():
    groups = parse_rq_table(serialize_rq_table(reversed(grid_points())))
    pts = groups[("synth", "s0000")]
    keys = [(p.resolution, p.target_bitrate_mbps) for p in pts]
    assert keys == sorted(keys)


def test_round_trip_exact():
    text = serialize_rq_table(grid_points())
    again = parse_rq_table(text)
    assert serialize_rq_table(again[("synth", "s0000")]) == text


def test_vmaf_out_of_range():
    point = make_point(5.0, 105.0)
    with pytest.raises(MalformedRow, match="vmaf"):
        parse_rq_table(serialize_rq_table([point]))


def test_ssim_out_of_range():
    text = serialize_rq_table([make_point(5.0, 80.0)]).replace("0.9", "1.9")
    with pytest.raises(MalformedRow):
        parse_rq_table(text)


def test_duplicate_point():
    p = make_point(5.0, 80.0, Resolution.R720P, target=5.0)
    with pytest.raises(DuplicatePoint, match="720p"):
        parse_rq_table(serialize_rq_table([p, p]))


def test_missing_quality_column():
    text = serialize_rq_table([make_point(5.0, 80.0)])
    header, *rows = text.splitlines()
    broken = "\n".join([header.replace(",vmaf", "")] + [",".join(r.split(",")[:5] + r.split(",")[6:]) for r in rows])
    with pytest.raises(MissingQualityColumn, match="vmaf"):
        parse_rq_table(broken)


def test_non_numeric_row_reports_line():
    text = serialize_rq_table([make_point(5.0, 80.0)]).replace("80.0", "eighty")
    with pytest.raises(MalformedRow) as info:
        parse_rq_table(text, path="rq.csv")
    assert info.value.line == 2
