"""Deterministic synthetic sessions for desk-scale training and testing.

Each scene draws a latent complexity c that drives both sides of the learning
task: the per-line encoder statistics (SATD and QP spread grow with c, skip
counts shrink) and the rate-quality curves (the half-rate of every resolution
scales up with c, pushing hull switch points to higher bitrates). A classifier
that recovers c from the stats window can therefore recover the hull label.

Quality model per resolution S at measured rate R:

    quality(R, S) = q_max(S) * R^k / (R^k + h(S, c)^k),   h = half_rate(S) * (0.4 + 2.1 c)

which is strictly increasing in R, saturates at q_max(S), and crosses the
next resolution's curve at a rate proportional to the complexity scaling.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .errors import InvalidConfig
from .rqtable import RQPoint
from .statslog import FrameStats
from .zones import DEFAULT_ZONE_TABLE, LADDER_RESOLUTIONS, Resolution, ctb_rows, zone_for_bitrate


@dataclass(frozen=True)
class RQModel:
    """Logistic rate-quality parameters for one resolution."""

    q_max: float
    half_rate_mbps: float
    steepness: float = 2.0


DEFAULT_RQ_MODELS: Mapping[Resolution, RQModel] = {
    Resolution.R360P: RQModel(62.0, 0.55),
    Resolution.R540P: RQModel(74.0, 0.80),
    Resolution.R720P: RQModel(84.0, 1.34),
    Resolution.R1080P: RQModel(94.0, 3.10),
}

#: Grid-encode targets; includes the five standard evaluation bitrates.
DEFAULT_TARGET_GRID = (1.0, 1.5, 2.0, 2.75, 3.5, 5.0, 6.0, 7.5, 10.0, 12.5, 15.0, 17.5, 20.0)

EVAL_TARGETS = (2.0, 3.5, 7.5, 12.5, 17.5)

IDR_SIZE_MULT = 2.5


def complexity_rate_scale(c: float | np.ndarray):
    """Multiplier on every half-rate; harder scenes need more bits."""
    return 0.4 + 2.1 * c


@dataclass(frozen=True)
class SyntheticConfig:
    seed: int = 42
    n_scenes: int = 400
    frames_per_scene: int = 70
    complexity_range: tuple[float, float] = (0.0, 1.0)
    rq_models: Mapping[Resolution, RQModel] = field(default_factory=lambda: dict(DEFAULT_RQ_MODELS))
    noise_level: float = 0.02
    target_bitrates_mbps: tuple[float, ...] = DEFAULT_TARGET_GRID
    fps: float = 60.0
    clip_id: str = "synth"

    def validate(self) -> None:
        if self.n_scenes < 1:
            raise InvalidConfig(f"n_scenes must be >= 1, got {self.n_scenes}")
        if self.frames_per_scene < 61:
            raise InvalidConfig(f"frames_per_scene must be >= 61 to fill the window, got {self.frames_per_scene}")
        lo, hi = self.complexity_range
        if not (0.0 <= lo <= hi <= 1.0):
            raise InvalidConfig(f"complexity_range must be within [0, 1], got {self.complexity_range}")
        if self.noise_level < 0:
            raise InvalidConfig("noise_level must be non-negative")
        if not all(r in self.rq_models for r in LADDER_RESOLUTIONS):
            raise InvalidConfig("rq_models must cover all ladder resolutions")
        targets = self.target_bitrates_mbps
        if not targets or any(t <= 0 for t in targets) or any(b <= a for a, b in zip(targets, targets[1:])):
            raise InvalidConfig("target bitrates must be positive and strictly ascending")
        if self.fps <= 0:
            raise InvalidConfig("fps must be positive")


class FrameSizeModel:
    """Per-frame encoded sizes for every ladder resolution (bytes)."""

    def __init__(self, sizes: np.ndarray):
        sizes = np.asarray(sizes, dtype=np.float64)
        if sizes.ndim != 2 or sizes.shape[1] != len(LADDER_RESOLUTIONS):
            raise InvalidConfig(f"size table must be (frames, {len(LADDER_RESOLUTIONS)}), got {sizes.shape}")
        self.sizes = sizes
        self._index = {res: i for i, res in enumerate(LADDER_RESOLUTIONS)}

    def __len__(self) -> int:
        return self.sizes.shape[0]

    def size(self, frame_index: int, resolution: Resolution) -> float:
        return float(self.sizes[frame_index, self._index[resolution]])


@dataclass
class SyntheticSession:
    frames: list[FrameStats]
    rq_points: list[RQPoint]
    complexities: dict[str, float]  # scene_id -> latent complexity
    cc_trace: np.ndarray  # per-frame congestion-control bitrate, Mbps
    size_model: FrameSizeModel
    scene_ids: list[str]
    config: SyntheticConfig


def scene_quality(rq: RQModel, measured_mbps, complexity, *, q_scale=1.0, h_scale=1.0):
    """VMAF-scale quality of one resolution at a measured rate."""
    h = rq.half_rate_mbps * complexity_rate_scale(complexity) * h_scale
    r_k = np.power(measured_mbps, rq.steepness)
    return rq.q_max * q_scale * r_k / (r_k + np.power(h, rq.steepness))


def _derived_metrics(vmaf):
    """PSNR-Y and SSIM-Yb as monotone companions of the VMAF model."""
    return 26.0 + 0.18 * vmaf, 0.80 + 0.0019 * vmaf


def _clipped_normal(rng: np.random.Generator, sigma: float, size=None):
    if sigma == 0:
        return np.zeros(size) if size is not None else 0.0
    return np.clip(rng.normal(0.0, sigma, size=size), -2 * sigma, 2 * sigma)


def generate_synthetic_session(config: SyntheticConfig) -> SyntheticSession:
    """Generate one session; byte-identical for identical configs."""
    config.validate()
    rng = np.random.default_rng(np.random.SeedSequence(config.seed))
    n_frames = config.n_scenes * config.frames_per_scene
    frames: list[FrameStats] = []
    rq_points: list[RQPoint] = []
    complexities: dict[str, float] = {}
    scene_ids: list[str] = []
    cc_trace = np.zeros(n_frames)
    sizes = np.zeros((n_frames, len(LADDER_RESOLUTIONS)))
    feat_sigma = 2.5 * config.noise_level

    for s in range(config.n_scenes):
        scene_id = f"s{s:04d}"
        scene_ids.append(scene_id)
        c = float(rng.uniform(*config.complexity_range))
        complexities[scene_id] = c
        cc = float(np.exp(rng.uniform(math.log(1.0), math.log(20.0))))
        log_res = zone_for_bitrate(DEFAULT_ZONE_TABLE, cc).zone.static_resolution

        phase_sp, phase_t, phase_m = rng.uniform(0, 2 * math.pi, size=3)
        amp = float(rng.uniform(0.10, 0.35))
        lines = ctb_rows(log_res)
        profile = 1.0 + amp * np.sin(2 * math.pi * np.arange(lines) / lines + phase_sp)
        blocks_per_line = math.ceil(log_res.width / 64)

        start = s * config.frames_per_scene
        t_rel = np.arange(config.frames_per_scene)
        tempo = 1.0 + 0.08 * np.sin(2 * math.pi * t_rel / 24.0 + phase_t)

        shape = (config.frames_per_scene, lines)
        satd = (
            420.0
            * (0.15 + 0.85 * c)
            * profile[None, :]
            * tempo[:, None]
            * (1.0 + _clipped_normal(rng, feat_sigma, shape))
        )
        satd = np.maximum(satd, 0.0)

        f_skip = np.clip(0.78 * (1.0 - c) + 0.05 + _clipped_normal(rng, feat_sigma / 2, shape), 0.02, 0.90)
        f_intra = np.clip(0.04 + 0.10 * c + _clipped_normal(rng, feat_sigma / 2, shape), 0.01, None)
        f_intra = np.minimum(f_intra, 1.0 - f_skip - 0.01)
        n_skip = blocks_per_line * f_skip
        n_intra = blocks_per_line * f_intra
        n_inter = blocks_per_line * (1.0 - f_skip - f_intra)

        qp_base = 14.0 + 22.0 * c + 4.0 * (1.0 - math.log(cc) / math.log(20.0))
        spread = (1.5 + 9.0 * c) * profile[None, :]
        qp_min = np.clip(qp_base - spread / 2 + _clipped_normal(rng, 0.5, shape), 0.0, 51.0)
        qp_max = np.clip(qp_min + spread * (1.0 + np.abs(_clipped_normal(rng, 0.2, shape))), 0.0, 51.0)
        qp_max = np.maximum(qp_max, qp_min)

        motion = np.clip(
            1.0 + 1.6 * c * (0.5 + 0.5 * np.sin(2 * math.pi * np.arange(lines) / lines + phase_m))[None, :]
            + _clipped_normal(rng, 0.1, shape),
            0.0,
            4.0,
        )

        # Frame sizes: shared content noise per frame, resolution-dependent
        # overshoot when complexity outruns the bitrate, larger IDR frames.
        target_bytes = cc * 1e6 / (8.0 * config.fps)
        u = np.exp(rng.normal(0.0, 0.22, size=config.frames_per_scene) - 0.22**2 / 2)
        for j, res in enumerate(LADDER_RESOLUTIONS):
            stress = config.rq_models[res].half_rate_mbps * complexity_rate_scale(c) / cc
            overshoot = 1.0 + 0.5 * max(0.0, stress - 0.4)
            sizes[start : start + config.frames_per_scene, j] = target_bytes * u * overshoot
        sizes[start, :] *= IDR_SIZE_MULT
        cc_trace[start : start + config.frames_per_scene] = cc

        log_res_col = LADDER_RESOLUTIONS.index(log_res)
        for t in range(config.frames_per_scene):
            frames.append(
                FrameStats(
                    frame_index=start + t,
                    scene_change=(t == 0),
                    resolution=log_res,
                    frame_size_bytes=float(sizes[start + t, log_res_col]),
                    per_line=np.stack(
                        [n_intra[t], n_inter[t], n_skip[t], satd[t], qp_min[t], qp_max[t], motion[t]]
                    ),
                )
            )

        # RQ grid encodes for this scene. The quality-ceiling perturbation is
        # drawn once per scene (content-level effect shared by every
        # resolution) so it moves curve levels without scrambling the pair
        # crossing points; half-rate noise stays per-resolution.
        targets = np.asarray(config.target_bitrates_mbps)
        q_scale = 1.0 + float(_clipped_normal(rng, config.noise_level))
        for res in LADDER_RESOLUTIONS:
            rq = config.rq_models[res]
            h_scale = 1.0 + float(_clipped_normal(rng, config.noise_level))
            measured = targets * (1.0 + _clipped_normal(rng, config.noise_level / 2, targets.size))
            vmaf = np.clip(scene_quality(rq, measured, c, q_scale=q_scale, h_scale=h_scale), 0.0, 100.0)
            psnr, ssim = _derived_metrics(vmaf)
            for i, target in enumerate(targets):
                rq_points.append(
                    RQPoint(
                        clip_id=config.clip_id,
                        scene_id=scene_id,
                        resolution=res,
                        target_bitrate_mbps=float(target),
                        measured_bitrate_mbps=float(measured[i]),
                        vmaf=float(vmaf[i]),
                        psnr_y=float(psnr[i]),
                        ssim_yb=float(ssim[i]),
                    )
                )

    return SyntheticSession(
        frames=frames,
        rq_points=rq_points,
        complexities=complexities,
        cc_trace=cc_trace,
        size_model=FrameSizeModel(sizes),
        scene_ids=scene_ids,
        config=config,
    )
