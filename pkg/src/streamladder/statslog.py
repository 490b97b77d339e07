"""Per-frame encoder statistics and the line-delimited log format.

One JSON record per line, one record per frame. Required keys: frame_index,
scene_change, resolution, frame_size_bytes, and the seven per-line statistic
arrays (ordered top CTB row to bottom). Array lengths must match the frame's
CTB row count.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import IO, Iterable

import numpy as np

from .errors import InvariantViolation, MalformedRecord, NonMonotoneFrameIndex
from .zones import Resolution, ctb_rows

#: Canonical feature order; index into FrameStats.per_line rows.
FEATURE_NAMES = (
    "numIntraBlockPerLine",
    "numInterBlockPerLine",
    "numSkipBlockPerLine",
    "averageSatdPerLine",
    "minQpPerLine",
    "maxQpPerLine",
    "motionTypePerLine",
)

QP_MIN, QP_MAX = 0, 51
_COUNT_FEATURES = ("numIntraBlockPerLine", "numInterBlockPerLine", "numSkipBlockPerLine")


@dataclass
class FrameStats:
    """One frame's metadata and 7 per-line statistic rows, shape (7, rows)."""

    frame_index: int
    scene_change: bool
    resolution: Resolution
    frame_size_bytes: float
    per_line: np.ndarray

    def __post_init__(self):
        self.per_line = np.asarray(self.per_line, dtype=np.float64)

    def feature(self, name: str) -> np.ndarray:
        return self.per_line[FEATURE_NAMES.index(name)]

    def validate(self, *, path: str | None = None, line: int | None = None) -> None:
        rows = ctb_rows(self.resolution)
        if self.per_line.shape != (len(FEATURE_NAMES), rows):
            raise InvariantViolation(
                f"frame {self.frame_index}: per-line arrays must be "
                f"{len(FEATURE_NAMES)}x{rows} for {self.resolution.label}, got {self.per_line.shape}",
                path=path,
                line=line,
            )
        if not np.isfinite(self.per_line).all():
            raise InvariantViolation(f"frame {self.frame_index}: non-finite statistic", path=path, line=line)
        if not self.frame_size_bytes > 0:
            raise InvariantViolation(
                f"frame {self.frame_index}: frame_size_bytes must be positive", path=path, line=line
            )
        for name in _COUNT_FEATURES + ("averageSatdPerLine",):
            if (self.feature(name) < 0).any():
                raise InvariantViolation(f"frame {self.frame_index}: negative {name}", path=path, line=line)
        min_qp, max_qp = self.feature("minQpPerLine"), self.feature("maxQpPerLine")
        if (min_qp > max_qp).any():
            bad = int(np.argmax(min_qp > max_qp))
            raise InvariantViolation(
                f"frame {self.frame_index}: minQp {min_qp[bad]:g} > maxQp {max_qp[bad]:g} on line {bad}",
                path=path,
                line=line,
            )
        for name in ("minQpPerLine", "maxQpPerLine"):
            vals = self.feature(name)
            if (vals < QP_MIN).any() or (vals > QP_MAX).any():
                raise InvariantViolation(
                    f"frame {self.frame_index}: {name} outside [{QP_MIN}, {QP_MAX}]", path=path, line=line
                )


def _record_to_frame(record: dict, *, path: str | None, line: int) -> FrameStats:
    missing = [k for k in ("frame_index", "scene_change", "resolution", "frame_size_bytes") if k not in record]
    missing += [k for k in FEATURE_NAMES if k not in record]
    if missing:
        raise MalformedRecord(f"missing keys: {', '.join(missing)}", path=path, line=line)
    try:
        resolution = Resolution.from_label(str(record["resolution"]))
        frame = FrameStats(
            frame_index=int(record["frame_index"]),
            scene_change=bool(record["scene_change"]),
            resolution=resolution,
            frame_size_bytes=float(record["frame_size_bytes"]),
            per_line=np.array([record[name] for name in FEATURE_NAMES], dtype=np.float64),
        )
    except (TypeError, ValueError) as exc:
        raise MalformedRecord(str(exc), path=path, line=line) from None
    frame.validate(path=path, line=line)
    return frame


def parse_stats_log(source: str | bytes | IO, *, path: str | None = None) -> list[FrameStats]:
    """Parse a stats log; frames must arrive in strictly increasing frame_index order."""
    if hasattr(source, "read"):
        source = source.read()
    if isinstance(source, bytes):
        source = source.decode("utf-8")
    frames: list[FrameStats] = []
    for lineno, raw in enumerate(source.splitlines(), start=1):
        raw = raw.strip()
        if not raw:
            continue
        try:
            record = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise MalformedRecord(f"bad JSON: {exc.msg}", path=path, line=lineno) from None
        if not isinstance(record, dict):
            raise MalformedRecord("record is not an object", path=path, line=lineno)
        frame = _record_to_frame(record, path=path, line=lineno)
        if frames and frame.frame_index <= frames[-1].frame_index:
            raise NonMonotoneFrameIndex(
                f"frame_index {frame.frame_index} after {frames[-1].frame_index}", path=path, line=lineno
            )
        frames.append(frame)
    return frames


def serialize_stats_log(frames: Iterable[FrameStats]) -> str:
    lines = []
    for frame in frames:
        record = {
            "frame_index": frame.frame_index,
            "scene_change": frame.scene_change,
            "resolution": frame.resolution.label,
            "frame_size_bytes": frame.frame_size_bytes,
        }
        for i, name in enumerate(FEATURE_NAMES):
            record[name] = frame.per_line[i].tolist()
        lines.append(json.dumps(record))
    return "\n".join(lines) + ("\n" if lines else "")


def read_stats_log(path) -> list[FrameStats]:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_stats_log(fh, path=str(path))


def scene_spans(frames: list[FrameStats]) -> list[tuple[int, int]]:
    """Half-open [start, stop) index spans of scenes, split at scene_change flags.

    Frames before the first scene_change (a log joined mid-scene) form span 0.
    """
    starts = [i for i, f in enumerate(frames) if f.scene_change]
    if not frames:
        return []
    if not starts or starts[0] != 0:
        starts = [0] + starts
    return [(s, e) for s, e in zip(starts, starts[1:] + [len(frames)])]
