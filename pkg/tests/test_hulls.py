import itertools

import numpy as np
import pytest

from conftest import make_point
from streamladder.errors import EmptyHull, EmptyInput, MissingMeasurement, TooFewPoints
from streamladder.hulls import enforce_convexity, ground_truth_label, optimal_ladder, upper_convex_hull
from streamladder.zones import DEFAULT_ZONE_TABLE, Resolution


def brute_force_hull(pairs):
    """Oracle: the maximal strictly-increasing, strictly-concave chain that
    covers every input point (on or below its envelope). Enumerates subsets.
    """

    def chain_valid(chain):
        for (r1, q1), (r2, q2) in zip(chain, chain[1:]):
            if not (r2 > r1 and q2 > q1):
                return False
        for (r1, q1), (r2, q2), (r3, q3) in zip(chain, chain[1:], chain[2:]):
            if (q2 - q1) * (r3 - r2) <= (q3 - q2) * (r2 - r1):  # slopes must strictly decrease
                return False
        return True

    def envelope(chain, r):
        if r < chain[0][0] or r > chain[-1][0]:
            return None
        for (r1, q1), (r2, q2) in zip(chain, chain[1:]):
            if r1 <= r <= r2:
                return q1 + (q2 - q1) * (r - r1) / (r2 - r1)
        return chain[-1][1] if r == chain[-1][0] else None

    def covers(chain, pairs):
        for r, q in pairs:
            e = envelope(chain, r)
            if e is None or q > e + 1e-9:
                return False
        return True

    best = None
    n = len(pairs)
    indexed = sorted(set(pairs))
    for size in range(len(indexed), 0, -1):
        for combo in itertools.combinations(indexed, size):
            if chain_valid(combo) and covers(combo, pairs):
                return list(combo)
    raise AssertionError("no valid covering chain found")


def hull_pairs(points, metric="vmaf"):
    hull = upper_convex_hull(points, metric)
    return [(p.measured_bitrate_mbps, p.quality(metric)) for p in hull.points]


class TestUpperConvexHull:
    def test_documented_example(self):
        pts = [make_point(1, 50), make_point(2, 60), make_point(3, 62), make_point(2, 55)]
        assert hull_pairs(pts) == [(1.0, 50.0), (2.0, 60.0), (3.0, 62.0)]
        rates = [1.0, 2.0, 3.0]
        quals = [50.0, 60.0, 62.0]
        slopes = np.diff(quals) / np.diff(rates)
        assert list(slopes) == [10.0, 2.0]

    def test_single_point(self):
        assert hull_pairs([make_point(5, 70)]) == [(5.0, 70.0)]

    def test_equal_rate_dominance(self):
        pts = [make_point(2, 60), make_point(2, 55)]
        assert hull_pairs(pts) == [(2.0, 60.0)]

    def test_empty_input(self):
        with pytest.raises(EmptyInput):
            upper_convex_hull([])

    def test_collinear_middle_removed(self):
        pts = [make_point(1, 50), make_point(2, 55), make_point(3, 60)]
        assert hull_pairs(pts) == [(1.0, 50.0), (3.0, 60.0)]

    def test_matches_brute_force_oracle(self):
        rng = np.random.default_rng(2024)
        for case in range(200):
            n = int(rng.integers(1, 11))
            rates = np.round(rng.uniform(0.5, 20, n), 2)
            quals = np.round(rng.uniform(10, 95, n), 1)
            pts = [make_point(r, q) for r, q in zip(rates, quals)]
            expected = brute_force_hull(list(zip(rates.tolist(), quals.tolist())))
            assert hull_pairs(pts) == expected, f"case {case}"

    def test_order_invariance(self):
        rng = np.random.default_rng(77)
        pts = [make_point(r, q) for r, q in zip(rng.uniform(1, 19, 8), rng.uniform(20, 90, 8))]
        reference = hull_pairs(pts)
        for _ in range(10):
            perm = list(rng.permutation(len(pts)))
            assert hull_pairs([pts[i] for i in perm]) == reference

    def test_invariants_hold(self, rq_groups):
        for points in rq_groups.values():
            hull = upper_convex_hull(points, "vmaf")
            rates, quals = np.array(hull.rates()), np.array(hull.qualities())
            assert (np.diff(rates) > 0).all()
            assert (np.diff(quals) > 0).all()
            slopes = np.diff(quals) / np.diff(rates)
            assert (np.diff(slopes) < 0).all()


class TestOptimalLadder:
    def _zone2_points(self, q720, q1080, target=7.5):
        return [
            make_point(target, q720, Resolution.R720P, target),
            make_point(target * 1.02, q1080, Resolution.R1080P, target),
        ]

    def test_picks_higher_quality(self):
        ladder = optimal_ladder(self._zone2_points(78, 75), [7.5], DEFAULT_ZONE_TABLE)
        assert ladder.entries[0].resolution is Resolution.R720P
        assert ladder.entries[0].quality == 78

    def test_tie_prefers_higher_resolution(self):
        ladder = optimal_ladder(self._zone2_points(78, 78), [7.5], DEFAULT_ZONE_TABLE)
        assert ladder.entries[0].resolution is Resolution.R1080P

    def test_missing_measurement(self):
        pts = [make_point(7.5, 78, Resolution.R720P, 7.5)]
        with pytest.raises(MissingMeasurement, match="1080p"):
            optimal_ladder(pts, [7.5], DEFAULT_ZONE_TABLE)

    def test_never_below_static_quality(self, rq_groups):
        targets = [2.0, 3.5, 7.5, 12.5, 17.5]
        for points in rq_groups.values():
            by_key = {(p.resolution, p.target_bitrate_mbps): p for p in points}
            ladder = optimal_ladder(points, targets, DEFAULT_ZONE_TABLE)
            for entry in ladder.entries:
                from streamladder.zones import zone_for_bitrate

                static = zone_for_bitrate(DEFAULT_ZONE_TABLE, entry.target_bitrate_mbps).zone.static_resolution
                static_q = by_key[(static, entry.target_bitrate_mbps)].vmaf
                assert entry.quality >= static_q


class TestGroundTruthLabel:
    def test_nearest_point_maps_to_high_candidate(self):
        zone = DEFAULT_ZONE_TABLE.zones[2]
        hull = upper_convex_hull(
            [make_point(2, 50, Resolution.R540P), make_point(7, 75, Resolution.R1080P)], "vmaf"
        )
        assert ground_truth_label(hull, 7.5, zone) == 1

    def test_quality_breaks_distance_ties(self):
        zone = DEFAULT_ZONE_TABLE.zones[2]
        hull = upper_convex_hull(
            [make_point(7, 78, Resolution.R720P), make_point(8, 80, Resolution.R1080P)], "vmaf"
        )
        # both 0.5 Mbps from the target; the 80-quality point decides
        assert ground_truth_label(hull, 7.5, zone) == 1

    def test_resolution_below_pair_clamps_to_zero(self):
        zone = DEFAULT_ZONE_TABLE.zones[2]
        hull = upper_convex_hull([make_point(7.4, 70, Resolution.R360P)], "vmaf")
        assert ground_truth_label(hull, 7.5, zone) == 0

    def test_resolution_above_pair_clamps_to_one(self):
        zone = DEFAULT_ZONE_TABLE.zones[0]
        hull = upper_convex_hull([make_point(1.5, 70, Resolution.R1080P)], "vmaf")
        assert ground_truth_label(hull, 1.5, zone) == 1

    def test_empty_hull(self):
        from streamladder.hulls import ConvexHull

        with pytest.raises(EmptyHull):
            ground_truth_label(ConvexHull((), "vmaf"), 5.0, DEFAULT_ZONE_TABLE.zones[1])


class TestEnforceConvexity:
    def test_drops_quality_dip(self):
        pts = [make_point(1, 50), make_point(2, 49), make_point(3, 62)]
        out = enforce_convexity(pts)
        assert [(p.measured_bitrate_mbps, p.vmaf) for p in out] == [(1.0, 50.0), (3.0, 62.0)]

    def test_convex_curve_unchanged(self):
        pts = [make_point(1, 50), make_point(2, 60), make_point(3, 62)]
        assert enforce_convexity(pts) == pts

    def test_two_point_floor(self):
        assert len(enforce_convexity([make_point(1, 50), make_point(2, 60)])) == 2
        with pytest.raises(TooFewPoints):
            enforce_convexity([make_point(1, 50), make_point(2, 40)])

    def test_output_is_valid_subset(self):
        rng = np.random.default_rng(5)
        for _ in range(50):
            n = int(rng.integers(2, 9))
            pts = [make_point(r, q) for r, q in zip(np.sort(rng.uniform(1, 19, n)), rng.uniform(20, 90, n))]
            try:
                out = enforce_convexity(pts)
            except TooFewPoints:
                continue
            assert all(p in pts for p in out)
            rates = [p.measured_bitrate_mbps for p in out]
            quals = [p.vmaf for p in out]
            assert (np.diff(rates) > 0).all() and (np.diff(quals) > 0).all()
            if len(out) > 2:
                slopes = np.diff(quals) / np.diff(rates)
                assert (np.diff(slopes) < 0).all()
