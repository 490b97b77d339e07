"""FastAPI service wrapping the pipeline and the online decision engine.

Run with `uvicorn streamladder.service:create_app --factory`. The CLI talks
to this app in-process by default, so every pipeline stage has exactly one
implementation behind one surface.
"""

from __future__ import annotations

import threading
import uuid
from collections import defaultdict
from pathlib import Path

import numpy as np
from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .. import __version__, fileio, pipeline
from ..cnn import TrainConfig, WeightBundle
from ..errors import DataError, MissingBundle, UsageError
from ..evaluate import evaluate_ladders, report_rows, report_text
from ..rqtable import METRICS, read_rq_table
from ..runtime import ChannelModel, SessionState, on_frame, simulate_session
from ..stats_tests import classify_effect_size, cohens_d, wilcoxon_signed_rank
from ..statslog import FEATURE_NAMES, FrameStats, read_stats_log, serialize_stats_log
from ..synthetic import SyntheticConfig, generate_synthetic_session
from ..weightsio import read_weights, write_weights
from ..zones import DEFAULT_ZONE_TABLE, Resolution, ZoneTable, load_zone_table, validate_zone_table
from ..errors import DegenerateVariance
from ..hulls import upper_convex_hull
from . import schemas

AdamDefaults = TrainConfig().adam


def _zone_table(path: str | None) -> ZoneTable:
    return load_zone_table(path) if path else DEFAULT_ZONE_TABLE


def bundle_filename(zone_id: int) -> str:
    return f"zone_{zone_id}.weights.json"


def load_bundle_dir(path: str) -> dict[int, WeightBundle]:
    bundles: dict[int, WeightBundle] = {}
    directory = Path(path)
    if not directory.is_dir():
        raise MissingBundle(f"bundle directory not found: {path}")
    for file in sorted(directory.glob("zone_*.weights.json")):
        bundle = read_weights(file)
        bundles[bundle.zone_id] = bundle
    if not bundles:
        raise MissingBundle(f"no zone_*.weights.json bundles in {path}")
    return bundles


def _frame_from_record(record: schemas.FrameRecord) -> FrameStats:
    frame = FrameStats(
        frame_index=record.frame_index,
        scene_change=record.scene_change,
        resolution=Resolution.from_label(record.resolution),
        frame_size_bytes=record.frame_size_bytes,
        per_line=np.array([getattr(record, name) for name in FEATURE_NAMES], dtype=np.float64),
    )
    frame.validate()
    return frame


def create_app() -> FastAPI:
    app = FastAPI(title="streamladder", version=__version__)
    app.state.sessions = {}
    app.state.sessions_lock = threading.Lock()

    @app.exception_handler(DataError)
    async def data_error_handler(_: Request, exc: DataError):
        return JSONResponse(
            status_code=422,
            content={
                "detail": {
                    "type": type(exc).__name__,
                    "message": str(exc),
                    "path": getattr(exc, "path", None),
                    "line": getattr(exc, "line", None),
                }
            },
        )

    @app.exception_handler(UsageError)
    async def usage_error_handler(_: Request, exc: UsageError):
        return JSONResponse(
            status_code=400,
            content={"detail": {"type": type(exc).__name__, "message": str(exc), "path": None, "line": None}},
        )

    @app.get("/health", response_model=schemas.HealthResponse)
    def health():
        return schemas.HealthResponse(status="ok", version=__version__)

    @app.get("/zones", response_model=schemas.ZoneTableResponse)
    def zones_default():
        table = DEFAULT_ZONE_TABLE
        return schemas.ZoneTableResponse(
            zones=[
                schemas.ZoneModel(
                    id=z.id,
                    low_mbps=z.low_mbps,
                    high_mbps=z.high_mbps,
                    static_resolution=z.static_resolution.label,
                    candidate_low=z.candidate_low.label,
                    candidate_high=z.candidate_high.label,
                )
                for z in table.zones
            ],
            overall_range=table.overall_range,
        )

    @app.post("/zones/validate", response_model=schemas.ValidateZonesResponse)
    def zones_validate(req: schemas.ValidateZonesRequest):
        try:
            load_zone_table(req.zones_path)
            problems: list[str] = []
        except DataError as exc:
            problems = [str(exc)]
        return schemas.ValidateZonesResponse(problems=problems, valid=not problems)

    @app.post("/synthetic", response_model=schemas.SyntheticResponse)
    def synthetic(req: schemas.SyntheticRequest):
        config = SyntheticConfig(
            seed=req.seed,
            n_scenes=req.n_scenes,
            frames_per_scene=req.frames_per_scene,
            complexity_range=(req.complexity_low, req.complexity_high),
            noise_level=req.noise_level,
            clip_id=req.clip_id,
            **(
                {"target_bitrates_mbps": tuple(req.target_bitrates_mbps)}
                if req.target_bitrates_mbps
                else {}
            ),
        )
        session = generate_synthetic_session(config)
        out = Path(req.out_dir)
        paths = {
            "stats_path": out / "stats.jsonl",
            "rq_path": out / "rq.csv",
            "complexity_path": out / "complexity.csv",
            "cc_path": out / "cc_trace.csv",
            "sizes_path": out / "frame_sizes.csv",
        }
        fileio.atomic_write(paths["stats_path"], serialize_stats_log(session.frames))
        from ..rqtable import serialize_rq_table

        fileio.atomic_write(paths["rq_path"], serialize_rq_table(session.rq_points))
        pipeline.write_complexities(paths["complexity_path"], session)
        pipeline.write_cc_trace(paths["cc_path"], session.cc_trace)
        pipeline.write_frame_sizes(paths["sizes_path"], session.size_model)
        return schemas.SyntheticResponse(
            **{k: str(v) for k, v in paths.items()},
            n_frames=len(session.frames),
            n_rq_points=len(session.rq_points),
            n_scenes=config.n_scenes,
        )

    @app.post("/hulls", response_model=schemas.HullResponse)
    def hulls(req: schemas.HullRequest):
        if req.metric not in METRICS:
            raise UsageError(f"metric must be one of {METRICS}, got {req.metric!r}")
        groups = read_rq_table(req.rq_path)
        rows = []
        for (clip_id, scene_id), points in sorted(groups.items()):
            hull = upper_convex_hull(points, req.metric)
            for p in hull.points:
                rows.append(
                    [
                        clip_id,
                        scene_id,
                        p.resolution.label,
                        fileio.fmt(p.target_bitrate_mbps),
                        fileio.fmt(p.measured_bitrate_mbps),
                        req.metric,
                        fileio.fmt(p.quality(req.metric)),
                    ]
                )
        fileio.write_csv(
            req.out_path,
            ["clip_id", "scene_id", "resolution", "target_bitrate_mbps", "measured_bitrate_mbps", "metric", "quality"],
            rows,
        )
        return schemas.HullResponse(out_path=req.out_path, n_scenes=len(groups), n_hull_points=len(rows))

    @app.post("/labels", response_model=schemas.LabelResponse)
    def labels(req: schemas.LabelRequest):
        if req.metric not in METRICS:
            raise UsageError(f"metric must be one of {METRICS}, got {req.metric!r}")
        table = _zone_table(req.zones_path)
        groups = read_rq_table(req.rq_path)
        targets = None
        if req.zone_targets_mbps:
            targets = {int(k): float(v) for k, v in req.zone_targets_mbps.items()}
            missing = [z.id for z in table.zones if z.id not in targets]
            if missing:
                raise UsageError(f"zone_targets_mbps missing zones {missing}")
        rows = pipeline.hull_labels(groups, table, req.metric, targets)
        pipeline.write_labels(req.out_path, rows)
        fractions = defaultdict(list)
        for r in rows:
            fractions[r.zone_id].append(r.label)
        return schemas.LabelResponse(
            out_path=req.out_path,
            n_rows=len(rows),
            label_one_fraction={z: float(np.mean(v)) for z, v in sorted(fractions.items())},
        )

    @app.post("/train", response_model=schemas.TrainResponse)
    def train(req: schemas.TrainRequest):
        table = _zone_table(req.zones_path)
        frames = read_stats_log(req.stats_path)
        label_rows = pipeline.read_labels(req.labels_path)
        config = TrainConfig(
            iterations=req.iterations,
            batch_size=req.batch_size,
            val_fraction=req.val_fraction,
        )
        config.adam.learning_rate = req.learning_rate
        zone_ids = None if req.zone is None else [req.zone]
        results = pipeline.train_zone_bundles(frames, label_rows, table, config, req.seed, zone_ids)
        infos = []
        for zone_id, (bundle, history) in sorted(results.items()):
            path = Path(req.out_dir) / bundle_filename(zone_id)
            write_weights(path, bundle)
            infos.append(
                schemas.TrainedBundleInfo(
                    zone_id=zone_id,
                    path=str(path),
                    iterations=len(history),
                    final_train_loss=history[-1] if history else None,
                    labeled_scenes=sum(1 for r in label_rows if r.zone_id == zone_id),
                )
            )
        return schemas.TrainResponse(bundles=infos)

    @app.post("/infer", response_model=schemas.InferResponse)
    def infer(req: schemas.InferRequest):
        table = _zone_table(req.zones_path)
        frames = read_stats_log(req.stats_path)
        bundles = load_bundle_dir(req.bundles_dir)
        predictions = pipeline.predict_scenes(frames, bundles, table)
        pipeline.write_predictions(req.out_path, predictions)
        return schemas.InferResponse(
            out_path=req.out_path,
            n_scenes=len({p.scene_index for p in predictions}),
            n_predictions=len(predictions),
        )

    @app.post("/simulate", response_model=schemas.SimulateResponse)
    def simulate(req: schemas.SimulateRequest):
        table = _zone_table(req.zones_path)
        frames = read_stats_log(req.stats_path)
        cc_trace = pipeline.read_cc_trace(req.cc_path) * req.capacity_scale
        size_model = pipeline.read_frame_sizes(req.sizes_path)
        bundles = load_bundle_dir(req.bundles_dir) if req.policy == "cae" else None
        oracle = None
        if req.policy == "oracle":
            if not req.labels_path:
                raise UsageError("oracle policy requires labels_path")
            oracle = pipeline.labels_by_scene(pipeline.read_labels(req.labels_path))
        channel = ChannelModel(capacity_mbps=1.0, fps=req.fps, drop_threshold=req.drop_threshold)
        report = simulate_session(
            frames,
            cc_trace[: len(frames)],
            req.policy,
            channel,
            size_model,
            table,
            bundles=bundles,
            oracle_labels=oracle,
            scene_ids=[pipeline.scene_id_for_index(i) for i in range(sum(f.scene_change for f in frames) + 1)],
        )
        rows = []
        for decision, delivered, frame in zip(report.decisions, report.delivered_flags, frames):
            rows.append(
                [
                    decision.frame_index,
                    int(frame.scene_change),
                    decision.resolution.label,
                    int(decision.idr),
                    decision.source,
                    "" if decision.probability is None else fileio.fmt(decision.probability),
                    "" if decision.zone_id is None else decision.zone_id,
                    fileio.fmt(cc_trace[decision.frame_index]),
                    int(delivered),
                ]
            )
        fileio.write_csv(
            req.out_path,
            ["frame_index", "scene_change", "resolution", "idr", "source", "probability", "zone_id", "cc_mbps", "delivered"],
            rows,
        )
        return schemas.SimulateResponse(
            out_path=req.out_path,
            n_frames=len(frames),
            n_scenes=len(report.scenes),
            dropped=report.dropped,
            drop_pct=report.drop_pct,
        )

    @app.post("/evaluate", response_model=schemas.EvaluateResponse)
    def evaluate(req: schemas.EvaluateRequest):
        bad = [m for m in req.metrics if m not in METRICS]
        if bad:
            raise UsageError(f"unknown metrics {bad}; choose from {METRICS}")
        groups = read_rq_table(req.rq_path)
        reference = pipeline.read_decisions(req.reference_path)
        test = pipeline.read_decisions(req.test_path)
        report = evaluate_ladders(
            groups,
            reference,
            test,
            metrics=tuple(req.metrics),
            reference_drop_pct=req.reference_drop_pct,
            test_drop_pct=req.test_drop_pct,
        )
        if req.out_text:
            fileio.atomic_write(req.out_text, report_text(report))
        if req.out_csv:
            header, rows = report_rows(report)
            fileio.write_csv(req.out_csv, header, rows)
        return schemas.EvaluateResponse(
            bd={
                m: schemas.BDSummaryModel(
                    metric=s.metric,
                    bd_rate_pct=s.bd_rate_pct,
                    bd_quality=s.bd_quality,
                    scenes_used=s.scenes_used,
                    scenes_skipped=s.scenes_skipped,
                )
                for m, s in report.bd.items()
            },
            significance=[
                schemas.SignificanceModel(
                    target_mbps=e.target_mbps,
                    metric=e.metric,
                    n=e.n,
                    p_value=e.p_value,
                    effect_size=e.effect_size,
                    classification=e.classification,
                    significant=e.significant,
                )
                for e in report.significance
            ],
            delta_framedrops_pct=report.delta_framedrops_pct,
            reference_drop_pct=report.reference_drop_pct,
            test_drop_pct=report.test_drop_pct,
            out_csv=req.out_csv,
            out_text=req.out_text,
        )

    @app.post("/stats-test", response_model=schemas.StatsTestResponse)
    def stats_test(req: schemas.StatsTestRequest):
        if len(req.x) != len(req.y) or not req.x:
            raise UsageError("x and y must be non-empty and equal length")
        result = wilcoxon_signed_rank(req.x, req.y, alternative=req.alternative)
        d = None
        classification = None
        try:
            d = cohens_d(req.x, req.y)
            classification = classify_effect_size(d)
        except DegenerateVariance:
            pass
        return schemas.StatsTestResponse(
            p_value=result.p_value,
            statistic=result.statistic,
            n_effective=result.n_effective,
            all_zero=result.all_zero,
            method=result.method,
            cohens_d=d,
            classification=classification,
        )

    @app.post("/sessions", response_model=schemas.SessionCreateResponse)
    def session_create(req: schemas.SessionCreateRequest):
        table = _zone_table(req.zones_path)
        bundles = load_bundle_dir(req.bundles_dir)
        initial = Resolution.from_label(req.initial_resolution) if req.initial_resolution else None
        session = SessionState(bundles, table, initial_resolution=initial)
        session_id = uuid.uuid4().hex
        with app.state.sessions_lock:
            app.state.sessions[session_id] = session
        return schemas.SessionCreateResponse(session_id=session_id)

    def _session(session_id: str) -> SessionState:
        with app.state.sessions_lock:
            session = app.state.sessions.get(session_id)
        if session is None:
            raise UsageError(f"unknown session {session_id}")
        return session

    @app.post("/sessions/{session_id}/frames", response_model=schemas.DecisionModel)
    def session_frame(session_id: str, req: schemas.SessionFrameRequest):
        session = _session(session_id)
        decision = on_frame(session, _frame_from_record(req.frame), req.cc_mbps)
        return schemas.DecisionModel(
            frame_index=decision.frame_index,
            resolution=decision.resolution.label,
            idr=decision.idr,
            source=decision.source,
            probability=decision.probability,
            zone_id=decision.zone_id,
            clamped=decision.clamped,
        )

    @app.get("/sessions/{session_id}", response_model=schemas.SessionInfoResponse)
    def session_info(session_id: str):
        session = _session(session_id)
        return schemas.SessionInfoResponse(
            session_id=session_id,
            frames_seen=session.frame_counter,
            window_fill=len(session.window),
            current_resolution=session.current_resolution.label,
            n_decisions=len(session.decisions),
        )

    @app.delete("/sessions/{session_id}", response_model=schemas.SessionCloseResponse)
    def session_close(session_id: str):
        with app.state.sessions_lock:
            existed = app.state.sessions.pop(session_id, None) is not None
        if not existed:
            raise UsageError(f"unknown session {session_id}")
        return schemas.SessionCloseResponse(session_id=session_id, closed=True)

    return app
