import numpy as np
import pytest

from streamladder import synthetic
from streamladder.rqtable import RQPoint
from streamladder.zones import Resolution


@pytest.fixture(scope="session")
def small_session():
    """A tiny deterministic synthetic session shared across tests."""
    cfg = synthetic.SyntheticConfig(seed=7, n_scenes=4, frames_per_scene=65)
    return synthetic.generate_synthetic_session(cfg)


@pytest.fixture(scope="session")
def rq_groups(small_session):
    groups = {}
    for p in small_session.rq_points:
        groups.setdefault(p.scene_key, []).append(p)
    return groups


def make_point(rate, quality, resolution=Resolution.R720P, target=None, scene="s0000", clip="synth"):
    """RQPoint helper for hull/BD tests; quality fills all three metrics."""
    return RQPoint(
        clip_id=clip,
        scene_id=scene,
        resolution=resolution,
        target_bitrate_mbps=float(target if target is not None else rate),
        measured_bitrate_mbps=float(rate),
        vmaf=float(quality),
        psnr_y=float(quality) / 2.0 + 20.0,
        ssim_yb=min(1.0, 0.5 + float(quality) / 200.0),
    )


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
