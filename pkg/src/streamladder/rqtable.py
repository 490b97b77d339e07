"""Rate-quality measurement tables (CSV).

Columns: clip_id, scene_id, resolution, target_bitrate_mbps,
measured_bitrate_mbps, vmaf, psnr_y, ssim_yb. Quality values are consumed as
measurement data; nothing here computes a metric.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import IO, Iterable

from .errors import DuplicatePoint, MalformedRow, MissingQualityColumn
from .zones import Resolution

METRICS = ("vmaf", "psnr_y", "ssim_yb")
RQ_COLUMNS = (
    "clip_id",
    "scene_id",
    "resolution",
    "target_bitrate_mbps",
    "measured_bitrate_mbps",
) + METRICS

SceneKey = tuple[str, str]


@dataclass(frozen=True)
class RQPoint:
    """One grid encode: a scene at one resolution and target bitrate."""

    clip_id: str
    scene_id: str
    resolution: Resolution
    target_bitrate_mbps: float
    measured_bitrate_mbps: float
    vmaf: float
    psnr_y: float
    ssim_yb: float

    @property
    def scene_key(self) -> SceneKey:
        return (self.clip_id, self.scene_id)

    def quality(self, metric: str) -> float:
        if metric not in METRICS:
            raise MalformedRow(f"unknown quality metric {metric!r}")
        return getattr(self, metric)


def _check_ranges(point: RQPoint, *, path: str | None, line: int) -> None:
    if not point.target_bitrate_mbps > 0 or not point.measured_bitrate_mbps > 0:
        raise MalformedRow("bitrates must be positive", path=path, line=line)
    if not 0 <= point.vmaf <= 100:
        raise MalformedRow(f"vmaf {point.vmaf:g} outside [0, 100]", path=path, line=line)
    if not 0 <= point.ssim_yb <= 1:
        raise MalformedRow(f"ssim_yb {point.ssim_yb:g} outside [0, 1]", path=path, line=line)


def parse_rq_table(source: str | bytes | IO, *, path: str | None = None) -> dict[SceneKey, list[RQPoint]]:
    """Parse and group RQ points by (clip_id, scene_id).

    Within a group, points sort by (resolution, target bitrate); duplicate
    (resolution, target) rows for one scene are rejected.
    """
    if hasattr(source, "read"):
        source = source.read()
    if isinstance(source, bytes):
        source = source.decode("utf-8")
    reader = csv.DictReader(io.StringIO(source))
    if reader.fieldnames is None:
        raise MalformedRow("empty RQ table", path=path)
    missing = [c for c in RQ_COLUMNS if c not in reader.fieldnames]
    if any(c in METRICS for c in missing):
        raise MissingQualityColumn(f"missing columns: {', '.join(missing)}", path=path)
    if missing:
        raise MalformedRow(f"missing columns: {', '.join(missing)}", path=path)

    groups: dict[SceneKey, list[RQPoint]] = {}
    seen: set[tuple] = set()
    for lineno, row in enumerate(reader, start=2):
        try:
            point = RQPoint(
                clip_id=row["clip_id"],
                scene_id=row["scene_id"],
                resolution=Resolution.from_label(row["resolution"]),
                target_bitrate_mbps=float(row["target_bitrate_mbps"]),
                measured_bitrate_mbps=float(row["measured_bitrate_mbps"]),
                vmaf=float(row["vmaf"]),
                psnr_y=float(row["psnr_y"]),
                ssim_yb=float(row["ssim_yb"]),
            )
        except (TypeError, ValueError) as exc:
            raise MalformedRow(str(exc), path=path, line=lineno) from None
        _check_ranges(point, path=path, line=lineno)
        dup_key = (point.scene_key, point.resolution, point.target_bitrate_mbps)
        if dup_key in seen:
            raise DuplicatePoint(
                f"duplicate ({point.resolution.label}, {point.target_bitrate_mbps:g} Mbps) "
                f"for scene {point.scene_key}",
                path=path,
                line=lineno,
            )
        seen.add(dup_key)
        groups.setdefault(point.scene_key, []).append(point)
    for points in groups.values():
        points.sort(key=lambda p: (p.resolution, p.target_bitrate_mbps))
    return groups


def serialize_rq_table(points: Iterable[RQPoint]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(RQ_COLUMNS)
    for p in points:
        writer.writerow(
            [
                p.clip_id,
                p.scene_id,
                p.resolution.label,
                repr(p.target_bitrate_mbps),
                repr(p.measured_bitrate_mbps),
                repr(p.vmaf),
                repr(p.psnr_y),
                repr(p.ssim_yb),
            ]
        )
    return buf.getvalue()


def read_rq_table(path) -> dict[SceneKey, list[RQPoint]]:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        return parse_rq_table(fh, path=str(path))
