"""Pydantic request/response models for the service API.

Pipeline endpoints operate on files (the service is a local tool daemon), so
their requests carry paths plus stage parameters. Session endpoints carry the
frame payloads inline, mirroring the stats-log record format.
"""

from __future__ import annotations

from pydantic import BaseModel, Field


class HealthResponse(BaseModel):
    status: str
    version: str


class ErrorDetail(BaseModel):
    type: str
    message: str
    path: str | None = None
    line: int | None = None


# ---------------------------------------------------------------- zones -----


class ZoneModel(BaseModel):
    id: int
    low_mbps: float
    high_mbps: float
    static_resolution: str
    candidate_low: str
    candidate_high: str


class ZoneTableResponse(BaseModel):
    zones: list[ZoneModel]
    overall_range: tuple[float, float]


class ValidateZonesRequest(BaseModel):
    zones_path: str


class ValidateZonesResponse(BaseModel):
    problems: list[str]
    valid: bool


# ------------------------------------------------------------- synthetic ----


class SyntheticRequest(BaseModel):
    out_dir: str
    seed: int = 42
    n_scenes: int = 400
    frames_per_scene: int = 70
    noise_level: float = 0.02
    complexity_low: float = 0.0
    complexity_high: float = 1.0
    clip_id: str = "synth"
    target_bitrates_mbps: list[float] | None = None


class SyntheticResponse(BaseModel):
    stats_path: str
    rq_path: str
    complexity_path: str
    cc_path: str
    sizes_path: str
    n_frames: int
    n_rq_points: int
    n_scenes: int


# ------------------------------------------------------------------ hull ----


class HullRequest(BaseModel):
    rq_path: str
    metric: str = "vmaf"
    out_path: str


class HullResponse(BaseModel):
    out_path: str
    n_scenes: int
    n_hull_points: int


class LabelRequest(BaseModel):
    rq_path: str
    metric: str = "vmaf"
    zones_path: str | None = None
    out_path: str
    zone_targets_mbps: dict[int, float] | None = None


class LabelResponse(BaseModel):
    out_path: str
    n_rows: int
    label_one_fraction: dict[int, float]


# ----------------------------------------------------------------- train ----


class TrainRequest(BaseModel):
    stats_path: str
    labels_path: str
    out_dir: str
    zones_path: str | None = None
    zone: int | None = None  # None trains every zone
    iterations: int = 800
    batch_size: int = 64
    learning_rate: float = 1e-3
    val_fraction: float = 0.1
    seed: int = 42


class TrainedBundleInfo(BaseModel):
    zone_id: int
    path: str
    iterations: int
    final_train_loss: float | None
    labeled_scenes: int


class TrainResponse(BaseModel):
    bundles: list[TrainedBundleInfo]


class InferRequest(BaseModel):
    stats_path: str
    bundles_dir: str
    zones_path: str | None = None
    out_path: str


class InferResponse(BaseModel):
    out_path: str
    n_scenes: int
    n_predictions: int


# -------------------------------------------------------------- simulate ----


class SimulateRequest(BaseModel):
    stats_path: str
    cc_path: str
    sizes_path: str
    policy: str = Field(pattern="^(cae|static|oracle)$")
    bundles_dir: str | None = None
    labels_path: str | None = None
    zones_path: str | None = None
    out_path: str
    fps: float = 60.0
    drop_threshold: float = 2.0
    capacity_scale: float = 1.0


class SimulateResponse(BaseModel):
    out_path: str
    n_frames: int
    n_scenes: int
    dropped: int
    drop_pct: float


# -------------------------------------------------------------- evaluate ----


class EvaluateRequest(BaseModel):
    rq_path: str
    reference_path: str
    test_path: str
    metrics: list[str] = ["vmaf", "psnr_y", "ssim_yb"]
    out_csv: str | None = None
    out_text: str | None = None
    reference_drop_pct: float | None = None
    test_drop_pct: float | None = None


class BDSummaryModel(BaseModel):
    metric: str
    bd_rate_pct: float
    bd_quality: float
    scenes_used: int
    scenes_skipped: int


class SignificanceModel(BaseModel):
    target_mbps: float
    metric: str
    n: int
    p_value: float
    effect_size: float
    classification: str
    significant: bool


class EvaluateResponse(BaseModel):
    bd: dict[str, BDSummaryModel]
    significance: list[SignificanceModel]
    delta_framedrops_pct: float | None
    reference_drop_pct: float | None
    test_drop_pct: float | None
    out_csv: str | None
    out_text: str | None


# ------------------------------------------------------------ stats test ----


class StatsTestRequest(BaseModel):
    x: list[float]
    y: list[float]
    alternative: str = Field(default="greater", pattern="^(greater|two_sided)$")


class StatsTestResponse(BaseModel):
    p_value: float
    statistic: float
    n_effective: int
    all_zero: bool
    method: str
    cohens_d: float | None
    classification: str | None


# -------------------------------------------------------------- sessions ----


class FrameRecord(BaseModel):
    """One frame's stats, mirroring a stats-log record."""

    frame_index: int
    scene_change: bool
    resolution: str
    frame_size_bytes: float
    numIntraBlockPerLine: list[float]
    numInterBlockPerLine: list[float]
    numSkipBlockPerLine: list[float]
    averageSatdPerLine: list[float]
    minQpPerLine: list[float]
    maxQpPerLine: list[float]
    motionTypePerLine: list[float]


class SessionCreateRequest(BaseModel):
    bundles_dir: str
    zones_path: str | None = None
    initial_resolution: str | None = None


class SessionCreateResponse(BaseModel):
    session_id: str


class SessionFrameRequest(BaseModel):
    frame: FrameRecord
    cc_mbps: float


class DecisionModel(BaseModel):
    frame_index: int
    resolution: str
    idr: bool
    source: str
    probability: float | None
    zone_id: int | None
    clamped: bool


class SessionInfoResponse(BaseModel):
    session_id: str
    frames_seen: int
    window_fill: int
    current_resolution: str
    n_decisions: int


class SessionCloseResponse(BaseModel):
    session_id: str
    closed: bool
