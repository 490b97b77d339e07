import numpy as np
import pytest

from streamladder.errors import InvalidConfig
from streamladder.hulls import upper_convex_hull
from streamladder.rqtable import serialize_rq_table
from streamladder.statslog import serialize_stats_log
from streamladder.synthetic import (
    DEFAULT_RQ_MODELS,
    SyntheticConfig,
    complexity_rate_scale,
    generate_synthetic_session,
    scene_quality,
)
from streamladder.zones import LADDER_RESOLUTIONS, Resolution


def tiny(seed=0, **kw):
    defaults = dict(seed=seed, n_scenes=2, frames_per_scene=61)
    defaults.update(kw)
    return SyntheticConfig(**defaults)


class TestConfigValidation:
    def test_window_must_be_fillable(self):
        with pytest.raises(InvalidConfig, match="61"):
            generate_synthetic_session(tiny(frames_per_scene=60))

    def test_complexity_range(self):
        with pytest.raises(InvalidConfig):
            generate_synthetic_session(tiny(complexity_range=(0.5, 1.5)))
        with pytest.raises(InvalidConfig):
            generate_synthetic_session(tiny(complexity_range=(0.9, 0.1)))

    def test_targets_must_ascend(self):
        with pytest.raises(InvalidConfig):
            generate_synthetic_session(tiny(target_bitrates_mbps=(2.0, 2.0)))


class TestDeterminism:
    def test_same_seed_byte_identical(self):
        a = generate_synthetic_session(tiny(seed=11, n_scenes=3))
        b = generate_synthetic_session(tiny(seed=11, n_scenes=3))
        assert serialize_stats_log(a.frames) == serialize_stats_log(b.frames)
        assert serialize_rq_table(a.rq_points) == serialize_rq_table(b.rq_points)
        assert np.array_equal(a.cc_trace, b.cc_trace)
        assert np.array_equal(a.size_model.sizes, b.size_model.sizes)
        assert a.complexities == b.complexities

    def test_different_seed_differs(self):
        a = generate_synthetic_session(tiny(seed=11, n_scenes=3))
        b = generate_synthetic_session(tiny(seed=12, n_scenes=3))
        assert serialize_stats_log(a.frames) != serialize_stats_log(b.frames)


class TestStructure:
    def test_scene_change_flags(self):
        session = generate_synthetic_session(tiny(n_scenes=3, frames_per_scene=100))
        assert len(session.frames) == 300
        assert sum(f.scene_change for f in session.frames) == 3
        assert [f.frame_index for f in session.frames] == list(range(300))

    def test_all_frames_valid_over_many_seeds(self):
        for seed in range(1000):
            session = generate_synthetic_session(tiny(seed=seed, n_scenes=1))
            for frame in session.frames:
                frame.validate()

    def test_rq_grid_complete(self):
        cfg = tiny(n_scenes=2)
        session = generate_synthetic_session(cfg)
        expected = 2 * len(LADDER_RESOLUTIONS) * len(cfg.target_bitrates_mbps)
        assert len(session.rq_points) == expected


def switch_rate(session, scene_id, low, high):
    """Measured rate of the first hull point at or above `high` resolution."""
    points = [p for p in session.rq_points if p.scene_id == scene_id]
    hull = upper_convex_hull(points, "vmaf")
    for p in hull.points:
        if p.resolution >= high:
            return p.measured_bitrate_mbps
    return float("inf")


class TestComplexitySignal:
    def test_hull_switch_points_shift_up_with_complexity(self):
        easy = generate_synthetic_session(tiny(seed=3, n_scenes=4, complexity_range=(0.0, 0.0), noise_level=0.0))
        hard = generate_synthetic_session(tiny(seed=3, n_scenes=4, complexity_range=(1.0, 1.0), noise_level=0.0))
        for pair in [(Resolution.R360P, Resolution.R540P), (Resolution.R540P, Resolution.R720P)]:
            r_easy = switch_rate(easy, "s0000", *pair)
            r_hard = switch_rate(hard, "s0000", *pair)
            assert r_hard > r_easy

    def test_quality_strictly_increasing_in_rate(self):
        session = generate_synthetic_session(tiny(seed=5, n_scenes=3))
        for scene_id in session.scene_ids:
            for res in LADDER_RESOLUTIONS:
                pts = sorted(
                    (p for p in session.rq_points if p.scene_id == scene_id and p.resolution is res),
                    key=lambda p: p.measured_bitrate_mbps,
                )
                quals = [p.vmaf for p in pts]
                assert all(b > a for a, b in zip(quals, quals[1:]))

    def test_high_rate_ordering_follows_quality_ceiling(self):
        session = generate_synthetic_session(tiny(seed=6, n_scenes=3))
        top = max(session.config.target_bitrates_mbps)
        for scene_id in session.scene_ids:
            quals = [
                next(
                    p.vmaf
                    for p in session.rq_points
                    if p.scene_id == scene_id and p.resolution is res and p.target_bitrate_mbps == top
                )
                for res in LADDER_RESOLUTIONS
            ]
            assert all(b > a for a, b in zip(quals, quals[1:]))

    def test_quality_model_monotone_in_complexity(self):
        rq = DEFAULT_RQ_MODELS[Resolution.R720P]
        assert scene_quality(rq, 5.0, 0.1) > scene_quality(rq, 5.0, 0.9)
        assert complexity_rate_scale(1.0) > complexity_rate_scale(0.0)


class TestSizeModel:
    def test_sizes_positive_and_aligned(self):
        session = generate_synthetic_session(tiny(seed=8, n_scenes=2))
        assert (session.size_model.sizes > 0).all()
        assert len(session.size_model) == len(session.frames)

    def test_idr_frames_larger(self):
        session = generate_synthetic_session(tiny(seed=9, n_scenes=3, frames_per_scene=61))
        sizes = session.size_model.sizes
        for start in (0, 61, 122):
            scene_mean = sizes[start + 1 : start + 61, 0].mean()
            assert sizes[start, 0] > scene_mean

    def test_higher_resolution_never_smaller(self):
        session = generate_synthetic_session(tiny(seed=10, n_scenes=3))
        sizes = session.size_model.sizes
        assert (np.diff(sizes, axis=1) >= 0).all()
