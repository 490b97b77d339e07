"""Rate-quality convex hulls, the best-of-pair ladder, and label generation.

The hull of a scene is the upper concave envelope of its RQ points across
resolutions: rates and qualities strictly increase along it and the slope
strictly decreases. Hull segments define where the optimal resolution
switches, which is what the classifier labels encode.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import EmptyHull, EmptyInput, MissingMeasurement, TooFewPoints
from .rqtable import RQPoint
from .zones import Resolution, Zone, ZoneTable, zone_for_bitrate


@dataclass(frozen=True)
class ConvexHull:
    """Upper concave envelope points, rate-ascending, plus the metric used."""

    points: tuple[RQPoint, ...]
    metric: str

    def rates(self) -> list[float]:
        return [p.measured_bitrate_mbps for p in self.points]

    def qualities(self) -> list[float]:
        return [p.quality(self.metric) for p in self.points]


def _concave_chain(points: list[RQPoint], metric: str) -> list[RQPoint]:
    """Dominance filter followed by slope-monotone (Graham-style) elimination."""
    ranked = sorted(points, key=lambda p: (p.measured_bitrate_mbps, p.quality(metric)))
    survivors: list[RQPoint] = []
    best_quality = -float("inf")
    for p in ranked:
        q = p.quality(metric)
        if survivors and p.measured_bitrate_mbps == survivors[-1].measured_bitrate_mbps:
            survivors.pop()  # equal rate: ranked order guarantees q is the max so far
        elif q <= best_quality:
            continue  # dominated: cheaper-or-equal point already achieves this quality
        survivors.append(p)
        best_quality = q

    chain: list[RQPoint] = []
    for p in survivors:
        while len(chain) >= 2:
            r1, q1 = chain[-2].measured_bitrate_mbps, chain[-2].quality(metric)
            r2, q2 = chain[-1].measured_bitrate_mbps, chain[-1].quality(metric)
            r3, q3 = p.measured_bitrate_mbps, p.quality(metric)
            # slope(1->2) <= slope(2->3) means the middle point sags below the chord
            if (q2 - q1) * (r3 - r2) <= (q3 - q2) * (r2 - r1):
                chain.pop()
            else:
                break
        chain.append(p)
    return chain


def upper_convex_hull(points: list[RQPoint], metric: str = "vmaf") -> ConvexHull:
    """Hull of one scene's RQ points (hulls are built on measured bitrates)."""
    if not points:
        raise EmptyInput("cannot build a hull from zero points")
    return ConvexHull(tuple(_concave_chain(list(points), metric)), metric)


@dataclass(frozen=True)
class LadderEntry:
    target_bitrate_mbps: float
    resolution: Resolution
    quality: float
    measured_bitrate_mbps: float


@dataclass(frozen=True)
class OptimalLadder:
    """Best-of-pair resolution per target bitrate, selected a posteriori."""

    entries: tuple[LadderEntry, ...]
    metric: str


def optimal_ladder(
    points: list[RQPoint],
    targets: list[float],
    zone_table: ZoneTable,
    metric: str = "vmaf",
) -> OptimalLadder:
    """For each target, the better of the zone's two candidate resolutions.

    Quality ties pick the higher resolution. Requires a measurement for both
    candidates at every target.
    """
    by_key = {(p.resolution, p.target_bitrate_mbps): p for p in points}
    entries = []
    for target in targets:
        zone = zone_for_bitrate(zone_table, target).zone
        candidates = []
        for res in (zone.candidate_low, zone.candidate_high):
            p = by_key.get((res, target))
            if p is None:
                raise MissingMeasurement(f"no measurement for {res.label} at {target:g} Mbps")
            candidates.append(p)
        best = max(candidates, key=lambda p: (p.quality(metric), p.resolution))
        entries.append(
            LadderEntry(target, best.resolution, best.quality(metric), best.measured_bitrate_mbps)
        )
    return OptimalLadder(tuple(entries), metric)


def ground_truth_label(hull: ConvexHull, target_mbps: float, zone: Zone) -> int:
    """Binary label for a zone: 1 if the hull says the higher candidate wins.

    Takes the hull point nearest to the target by measured bitrate (quality
    breaks distance ties), then maps its resolution into the candidate pair;
    resolutions outside the pair clamp to the nearer candidate.
    """
    if not hull.points:
        raise EmptyHull("cannot label from an empty hull")
    best = min(hull.points, key=lambda p: (abs(p.measured_bitrate_mbps - target_mbps), -p.quality(hull.metric)))
    if best.resolution <= zone.candidate_low:
        return 0
    if best.resolution >= zone.candidate_high:
        return 1
    return 0  # unreachable while candidate pairs are adjacent


def enforce_convexity(points: list[RQPoint], metric: str = "vmaf") -> list[RQPoint]:
    """Drop ladder points until the rest forms a valid hull chain.

    BD computation requires convex RQ curves; fewer than 2 survivors makes the
    curve unusable.
    """
    survivors = _concave_chain(sorted(points, key=lambda p: p.measured_bitrate_mbps), metric)
    if len(survivors) < 2:
        raise TooFewPoints(f"only {len(survivors)} points survive convexity filtering")
    return survivors
