"""Resolutions, bitrate zones and the zone/ladder table.

The default table ships four zones over 1-20 Mbps, each with a static
resolution and a one-step pair of candidate resolutions the online engine may
pick between. Zone boundaries are half-open [low, high); the last zone is
closed at the top so every bitrate in the overall range belongs to exactly
one zone.
"""

from __future__ import annotations

import configparser
import io
import math
from dataclasses import dataclass
from enum import IntEnum
from typing import NamedTuple

from .errors import DataError, NonPositiveBitrate


class Resolution(IntEnum):
    """16:9 spatial resolutions, ordered by height."""

    R360P = 360
    R540P = 540
    R720P = 720
    R1080P = 1080
    R2160P = 2160

    @property
    def height(self) -> int:
        return int(self)

    @property
    def width(self) -> int:
        return int(self) * 16 // 9

    @property
    def label(self) -> str:
        return f"{int(self)}p"

    @classmethod
    def from_label(cls, label: str) -> "Resolution":
        try:
            return cls(int(label.strip().lower().removesuffix("p")))
        except ValueError:
            raise DataError(f"unknown resolution {label!r}") from None

    def step(self, delta: int) -> "Resolution":
        """Resolution `delta` ladder steps away; clamps at the ends."""
        order = list(Resolution)
        i = order.index(self) + delta
        return order[max(0, min(len(order) - 1, i))]


#: Resolutions available to the encoding ladder (2160p is source-only).
LADDER_RESOLUTIONS = (Resolution.R360P, Resolution.R540P, Resolution.R720P, Resolution.R1080P)


def resolution_steps_apart(a: Resolution, b: Resolution) -> int:
    order = list(Resolution)
    return abs(order.index(a) - order.index(b))


def ctb_rows(resolution: Resolution, ctb_size: int = 64) -> int:
    """Number of CTB rows in a frame: ceil(height / ctb_size)."""
    if ctb_size <= 0:
        raise DataError(f"ctb_size must be positive, got {ctb_size}")
    return math.ceil(resolution.height / ctb_size)


@dataclass(frozen=True)
class Zone:
    """A bitrate interval with its static resolution and candidate pair."""

    id: int
    low_mbps: float
    high_mbps: float
    static_resolution: Resolution
    candidate_low: Resolution
    candidate_high: Resolution

    def contains(self, bitrate_mbps: float, *, closed_top: bool = False) -> bool:
        if closed_top:
            return self.low_mbps <= bitrate_mbps <= self.high_mbps
        return self.low_mbps <= bitrate_mbps < self.high_mbps

    def candidate_for_label(self, label: int) -> Resolution:
        return self.candidate_high if label else self.candidate_low


@dataclass(frozen=True)
class ZoneTable:
    """Ordered, contiguous bitrate zones."""

    zones: tuple[Zone, ...]

    @property
    def overall_range(self) -> tuple[float, float]:
        return (self.zones[0].low_mbps, self.zones[-1].high_mbps)

    def zone_by_id(self, zone_id: int) -> Zone:
        for z in self.zones:
            if z.id == zone_id:
                return z
        raise DataError(f"no zone with id {zone_id}")


DEFAULT_ZONE_TABLE = ZoneTable(
    zones=(
        Zone(0, 1.0, 2.0, Resolution.R360P, Resolution.R360P, Resolution.R540P),
        Zone(1, 2.0, 5.0, Resolution.R540P, Resolution.R540P, Resolution.R720P),
        Zone(2, 5.0, 10.0, Resolution.R720P, Resolution.R720P, Resolution.R1080P),
        Zone(3, 10.0, 20.0, Resolution.R1080P, Resolution.R720P, Resolution.R1080P),
    )
)


class ZoneMatch(NamedTuple):
    zone: Zone
    clamped: bool


def zone_for_bitrate(table: ZoneTable, bitrate_mbps: float) -> ZoneMatch:
    """Zone owning `bitrate_mbps` under the [low, high) convention.

    The last zone is closed at the top. Bitrates outside the overall range
    clamp to the nearest zone with `clamped=True`.
    """
    if not bitrate_mbps > 0:
        raise NonPositiveBitrate(f"bitrate must be positive, got {bitrate_mbps}")
    low, high = table.overall_range
    if bitrate_mbps < low:
        return ZoneMatch(table.zones[0], True)
    if bitrate_mbps > high:
        return ZoneMatch(table.zones[-1], True)
    for zone in table.zones[:-1]:
        if zone.contains(bitrate_mbps):
            return ZoneMatch(zone, False)
    return ZoneMatch(table.zones[-1], False)


def validate_zone_table(table: ZoneTable) -> list[str]:
    """All invariant violations in `table`; empty means valid."""
    problems: list[str] = []
    if not table.zones:
        return ["table has no zones"]
    for z in table.zones:
        if not z.low_mbps < z.high_mbps:
            problems.append(f"zone {z.id}: empty bitrate range [{z.low_mbps}, {z.high_mbps})")
        if z.candidate_low >= z.candidate_high:
            problems.append(f"zone {z.id}: candidate pair not ascending")
        elif resolution_steps_apart(z.candidate_low, z.candidate_high) != 1:
            problems.append(f"zone {z.id}: candidates {z.candidate_low.label}/{z.candidate_high.label} not adjacent")
        if z.static_resolution not in (z.candidate_low, z.candidate_high):
            problems.append(f"zone {z.id}: static resolution {z.static_resolution.label} outside candidate pair")
    for prev, cur in zip(table.zones, table.zones[1:]):
        if cur.low_mbps != prev.high_mbps:
            problems.append(f"zones {prev.id}/{cur.id}: non-contiguous ranges ({prev.high_mbps} vs {cur.low_mbps})")
        if cur.static_resolution < prev.static_resolution:
            problems.append(f"zones {prev.id}/{cur.id}: static resolutions decrease")
        if cur.id <= prev.id:
            problems.append(f"zones {prev.id}/{cur.id}: ids not ascending")
    return problems


def parse_zone_table(text: str, *, path: str | None = None) -> ZoneTable:
    """Parse a zone table from INI-style text (see docs/zones format in README)."""
    parser = configparser.ConfigParser()
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise DataError(f"bad zone table syntax: {exc}", path=path) from None
    zones = []
    for section in parser.sections():
        if not section.lower().startswith("zone"):
            raise DataError(f"unexpected section [{section}]", path=path)
        try:
            zone_id = int(section.split()[-1])
        except ValueError:
            raise DataError(f"section [{section}] has no numeric zone id", path=path) from None
        try:
            lo, hi = (float(v) for v in parser.get(section, "bitrate_mbps").split("-"))
            static = Resolution.from_label(parser.get(section, "static"))
            cand_lo, cand_hi = (
                Resolution.from_label(v) for v in parser.get(section, "candidates").split(",")
            )
        except (configparser.NoOptionError, ValueError) as exc:
            raise DataError(f"zone {zone_id}: {exc}", path=path) from None
        zones.append(Zone(zone_id, lo, hi, static, cand_lo, cand_hi))
    zones.sort(key=lambda z: z.low_mbps)
    table = ZoneTable(tuple(zones))
    problems = validate_zone_table(table)
    if problems:
        raise DataError("invalid zone table: " + "; ".join(problems), path=path)
    return table


def serialize_zone_table(table: ZoneTable) -> str:
    parser = configparser.ConfigParser()
    for z in table.zones:
        section = f"zone {z.id}"
        parser.add_section(section)
        parser.set(section, "bitrate_mbps", f"{z.low_mbps:g}-{z.high_mbps:g}")
        parser.set(section, "static", z.static_resolution.label)
        parser.set(section, "candidates", f"{z.candidate_low.label},{z.candidate_high.label}")
    buf = io.StringIO()
    parser.write(buf)
    return buf.getvalue()


def load_zone_table(path) -> ZoneTable:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_zone_table(fh.read(), path=str(path))
