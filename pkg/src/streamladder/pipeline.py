"""Offline pipeline stages shared by the service endpoints and the CLI.

File formats produced/consumed here (all CSV with headers):
  labels:      clip_id, scene_id, zone_id, target_mbps, label
  predictions: scene_index, scene_id, zone_id, label, probability, resolution
  decisions:   clip_id, scene_id, target_mbps, resolution
  complexity:  clip_id, scene_id, complexity
  cc trace:    frame_index, cc_mbps
  frame sizes: frame_index, then one bytes column per ladder resolution
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import fileio
from .cnn import TrainConfig, WeightBundle, flatten_input, forward_flat, train
from .errors import DataError, MissingMeasurement
from .hulls import ground_truth_label, optimal_ladder, upper_convex_hull
from .rqtable import RQPoint, SceneKey
from .statslog import FrameStats, scene_spans
from .synthetic import EVAL_TARGETS, FrameSizeModel, SyntheticSession
from .window import WINDOW_FRAMES, Normalization, compute_normalization, resample_frame, standardize
from .zones import LADDER_RESOLUTIONS, Resolution, ZoneTable, zone_for_bitrate


def scene_id_for_index(index: int) -> str:
    """Scene ids for anonymous stats logs; matches the synthetic generator."""
    return f"s{index:04d}"


def scene_windows(frames: Sequence[FrameStats]) -> list[tuple[int, np.ndarray]]:
    """(scene_index, raw 60x7x17 window) for each scene with enough frames.

    The window holds the last 60 frames of the scene, i.e. the engine's view
    just before the next scene change. Short scenes are skipped.
    """
    windows = []
    for index, (start, stop) in enumerate(scene_spans(list(frames))):
        if stop - start < WINDOW_FRAMES:
            continue
        stack = np.stack([resample_frame(f) for f in frames[stop - WINDOW_FRAMES : stop]])
        windows.append((index, stack))
    return windows


def normalization_from_windows(windows: Iterable[tuple[int, np.ndarray]]) -> Normalization:
    frames = [frame for _, win in windows for frame in win]
    return compute_normalization(frames)


# ---------------------------------------------------------------- labels ----


@dataclass(frozen=True)
class LabelRow:
    clip_id: str
    scene_id: str
    zone_id: int
    target_mbps: float
    label: int


def zone_label_targets(zone_table: ZoneTable) -> dict[int, float]:
    """One representative labeling bitrate per zone: the range midpoint."""
    return {z.id: (z.low_mbps + z.high_mbps) / 2.0 for z in zone_table.zones}


def hull_labels(
    rq_groups: Mapping[SceneKey, list[RQPoint]],
    zone_table: ZoneTable,
    metric: str = "vmaf",
    targets: Mapping[int, float] | None = None,
) -> list[LabelRow]:
    """Ground-truth label per (scene, zone) from each scene's convex hull."""
    targets = targets or zone_label_targets(zone_table)
    rows = []
    for (clip_id, scene_id), points in sorted(rq_groups.items()):
        hull = upper_convex_hull(points, metric)
        for zone in zone_table.zones:
            target = targets[zone.id]
            rows.append(
                LabelRow(clip_id, scene_id, zone.id, target, ground_truth_label(hull, target, zone))
            )
    return rows


def labels_by_scene(rows: Iterable[LabelRow]) -> dict[str, dict[int, int]]:
    """scene_id -> zone_id -> label (for the oracle policy and training joins)."""
    out: dict[str, dict[int, int]] = {}
    for row in rows:
        out.setdefault(row.scene_id, {})[row.zone_id] = row.label
    return out


# -------------------------------------------------------------- training ----


def train_zone_bundles(
    frames: Sequence[FrameStats],
    label_rows: Iterable[LabelRow],
    zone_table: ZoneTable,
    config: TrainConfig | None = None,
    seed: int = 42,
    zones: Sequence[int] | None = None,
) -> dict[int, tuple[WeightBundle, list[float]]]:
    """Train one classifier per zone from a stats log plus hull labels.

    Windows come from the log's scenes (ids assigned by position); each zone
    trains on every labeled scene with a full window, with a per-zone seed
    derived from `seed`.
    """
    windows = scene_windows(frames)
    if not windows:
        raise DataError("stats log contains no scene with a full 60-frame window")
    norm = normalization_from_windows(windows)
    by_scene = labels_by_scene(label_rows)
    zone_ids = list(zones) if zones is not None else [z.id for z in zone_table.zones]

    results: dict[int, tuple[WeightBundle, list[float]]] = {}
    for zone_id in zone_ids:
        xs, ys = [], []
        for index, win in windows:
            scene_labels = by_scene.get(scene_id_for_index(index))
            if scene_labels is None or zone_id not in scene_labels:
                continue
            xs.append(win)
            ys.append(scene_labels[zone_id])
        if not xs:
            raise DataError(f"no labeled scenes for zone {zone_id}")
        bundle, history = train(
            np.stack(xs),
            np.array(ys, dtype=np.float64),
            zone_id=zone_id,
            normalization=norm,
            config=config,
            seed=seed * 1000 + zone_id,
        )
        results[zone_id] = (bundle, history)
    return results


@dataclass(frozen=True)
class Prediction:
    scene_index: int
    scene_id: str
    zone_id: int
    label: int
    probability: float
    resolution: Resolution


def predict_scenes(
    frames: Sequence[FrameStats],
    bundles: Mapping[int, WeightBundle],
    zone_table: ZoneTable,
) -> list[Prediction]:
    """Per-scene zone predictions from end-of-scene windows."""
    predictions = []
    for index, win in scene_windows(frames):
        for zone_id, bundle in sorted(bundles.items()):
            prob = forward_flat(bundle, flatten_input(standardize(win, bundle.normalization), bundle.layout))
            label = int(prob >= bundle.threshold)
            predictions.append(
                Prediction(
                    scene_index=index,
                    scene_id=scene_id_for_index(index),
                    zone_id=zone_id,
                    label=label,
                    probability=prob,
                    resolution=zone_table.zone_by_id(zone_id).candidate_for_label(label),
                )
            )
    return predictions


# ------------------------------------------------------------- decisions ----


def decisions_from_zone_labels(
    scene_keys: Iterable[SceneKey],
    labels: Mapping[str, Mapping[int, int]],
    targets: Sequence[float],
    zone_table: ZoneTable,
):
    """Expand per-(scene, zone) labels into per-(scene, target) resolutions."""
    decisions = {}
    for clip_id, scene_id in scene_keys:
        zone_labels = labels.get(scene_id)
        if zone_labels is None:
            raise MissingMeasurement(f"no labels for scene {scene_id}")
        per_target = {}
        for target in targets:
            zone = zone_for_bitrate(zone_table, target).zone
            if zone.id not in zone_labels:
                raise MissingMeasurement(f"no label for scene {scene_id} zone {zone.id}")
            per_target[float(target)] = zone.candidate_for_label(zone_labels[zone.id])
        decisions[(clip_id, scene_id)] = per_target
    return decisions


def static_decisions(scene_keys: Iterable[SceneKey], targets: Sequence[float], zone_table: ZoneTable):
    decisions = {}
    for key in scene_keys:
        decisions[key] = {
            float(t): zone_for_bitrate(zone_table, t).zone.static_resolution for t in targets
        }
    return decisions


def optimal_decisions(
    rq_groups: Mapping[SceneKey, list[RQPoint]],
    targets: Sequence[float],
    zone_table: ZoneTable,
    metric: str = "vmaf",
):
    """Best-of-pair a-posteriori selection per scene and target."""
    decisions = {}
    for key, points in rq_groups.items():
        ladder = optimal_ladder(points, list(targets), zone_table, metric)
        decisions[key] = {e.target_bitrate_mbps: e.resolution for e in ladder.entries}
    return decisions


# ------------------------------------------------------------ file forms ----


LABEL_HEADER = ("clip_id", "scene_id", "zone_id", "target_mbps", "label")
PREDICTION_HEADER = ("scene_index", "scene_id", "zone_id", "label", "probability", "resolution")
DECISION_HEADER = ("clip_id", "scene_id", "target_mbps", "resolution")
COMPLEXITY_HEADER = ("clip_id", "scene_id", "complexity")
CC_HEADER = ("frame_index", "cc_mbps")


def write_labels(path, rows: Iterable[LabelRow]) -> None:
    fileio.write_csv(
        path,
        LABEL_HEADER,
        [[r.clip_id, r.scene_id, r.zone_id, fileio.fmt(r.target_mbps), r.label] for r in rows],
    )


def read_labels(path) -> list[LabelRow]:
    rows = []
    for rec in fileio.read_csv_rows(path):
        try:
            rows.append(
                LabelRow(rec["clip_id"], rec["scene_id"], int(rec["zone_id"]),
                         float(rec["target_mbps"]), int(rec["label"]))
            )
        except (KeyError, ValueError) as exc:
            raise DataError(f"bad label row {rec}: {exc}", path=str(path)) from None
    return rows


def write_predictions(path, rows: Iterable[Prediction]) -> None:
    fileio.write_csv(
        path,
        PREDICTION_HEADER,
        [
            [r.scene_index, r.scene_id, r.zone_id, r.label, fileio.fmt(r.probability), r.resolution.label]
            for r in rows
        ],
    )


def write_decisions(path, decisions) -> None:
    rows = []
    for (clip_id, scene_id), per_target in sorted(decisions.items()):
        for target, resolution in sorted(per_target.items()):
            rows.append([clip_id, scene_id, fileio.fmt(target), resolution.label])
    fileio.write_csv(path, DECISION_HEADER, rows)


def read_decisions(path):
    decisions: dict[SceneKey, dict[float, Resolution]] = {}
    for rec in fileio.read_csv_rows(path):
        try:
            key = (rec["clip_id"], rec["scene_id"])
            decisions.setdefault(key, {})[float(rec["target_mbps"])] = Resolution.from_label(rec["resolution"])
        except (KeyError, ValueError) as exc:
            raise DataError(f"bad decision row {rec}: {exc}", path=str(path)) from None
    return decisions


def write_complexities(path, session: SyntheticSession) -> None:
    fileio.write_csv(
        path,
        COMPLEXITY_HEADER,
        [
            [session.config.clip_id, sid, fileio.fmt(session.complexities[sid])]
            for sid in session.scene_ids
        ],
    )


def write_cc_trace(path, cc_trace: np.ndarray) -> None:
    fileio.write_csv(path, CC_HEADER, [[i, fileio.fmt(v)] for i, v in enumerate(cc_trace)])


def read_cc_trace(path) -> np.ndarray:
    rows = fileio.read_csv_rows(path)
    try:
        return np.array([float(r["cc_mbps"]) for r in rows])
    except (KeyError, ValueError) as exc:
        raise DataError(f"bad cc trace: {exc}", path=str(path)) from None


def sizes_header() -> tuple[str, ...]:
    return ("frame_index",) + tuple(f"bytes_{r.label}" for r in LADDER_RESOLUTIONS)


def write_frame_sizes(path, size_model: FrameSizeModel) -> None:
    rows = [[i] + [fileio.fmt(v) for v in row] for i, row in enumerate(size_model.sizes)]
    fileio.write_csv(path, sizes_header(), rows)


def read_frame_sizes(path) -> FrameSizeModel:
    rows = fileio.read_csv_rows(path)
    try:
        table = np.array(
            [[float(r[f"bytes_{res.label}"]) for res in LADDER_RESOLUTIONS] for r in rows]
        )
    except (KeyError, ValueError) as exc:
        raise DataError(f"bad frame size table: {exc}", path=str(path)) from None
    return FrameSizeModel(table.reshape(-1, len(LADDER_RESOLUTIONS)))


def eval_targets_for(zone_table: ZoneTable, targets: Sequence[float] | None = None) -> list[float]:
    """Evaluation bitrates, defaulting to the standard five-target grid."""
    chosen = list(targets) if targets else list(EVAL_TARGETS)
    low, high = zone_table.overall_range
    for t in chosen:
        if not (low <= t <= high):
            raise DataError(f"evaluation target {t:g} Mbps outside zone table range [{low:g}, {high:g}]")
    return [float(t) for t in chosen]
