"""Online per-session decision engine and sender-side channel simulation.

Resolution changes happen only at scene changes, where the encoder emits an
IDR frame anyway. At a scene change the active zone comes from the current
congestion-control bitrate; with a full stats window the zone's classifier
picks between the two candidate resolutions, otherwise the engine falls back
to the zone's static resolution. The channel is a single leaky-bucket queue:
a frame is dropped when it would push queued delay past the drop threshold.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

from .cnn import WeightBundle, forward
from .errors import MissingBundle, StreamLengthMismatch
from .statslog import FrameStats
from .synthetic import FrameSizeModel
from .window import StatsWindow, assemble_tensor
from .zones import DEFAULT_ZONE_TABLE, Resolution, Zone, ZoneTable, zone_for_bitrate

SOURCE_CAE = "cae"
SOURCE_FALLBACK = "static-fallback"
SOURCE_UNCHANGED = "unchanged"


@dataclass(frozen=True)
class Decision:
    frame_index: int
    resolution: Resolution
    idr: bool
    source: str
    probability: float | None = None
    zone_id: int | None = None
    clamped: bool = False


class SessionState:
    """Single-writer state for one streaming session."""

    def __init__(
        self,
        bundles: Mapping[int, WeightBundle],
        zone_table: ZoneTable = DEFAULT_ZONE_TABLE,
        initial_resolution: Resolution | None = None,
    ):
        self.zone_table = zone_table
        self.bundles = dict(bundles)
        self.window = StatsWindow()
        self.current_resolution = initial_resolution or zone_table.zones[-1].static_resolution
        self.frame_counter = 0
        self.decisions: list[Decision] = []


def static_policy(zone: Zone) -> Resolution:
    return zone.static_resolution


def on_frame(state: SessionState, frame: FrameStats, cc_bitrate_mbps: float) -> Decision:
    """Ingest one frame's stats and decide the encode resolution.

    Non-scene-change frames keep the current resolution (P frame). Scene
    changes trigger an IDR plus either a classifier decision (full window) or
    the static-ladder fallback (cold start).
    """
    state.window.push(frame)
    state.frame_counter += 1
    if not frame.scene_change:
        decision = Decision(frame.frame_index, state.current_resolution, idr=False, source=SOURCE_UNCHANGED)
        state.decisions.append(decision)
        return decision

    zone, clamped = zone_for_bitrate(state.zone_table, cc_bitrate_mbps)
    if state.window.is_full:
        bundle = state.bundles.get(zone.id)
        if bundle is None:
            raise MissingBundle(f"no weights for zone {zone.id}")
        prob = forward(bundle, assemble_tensor(state.window, bundle.normalization))
        resolution = zone.candidate_for_label(int(prob >= bundle.threshold))
        decision = Decision(
            frame.frame_index, resolution, idr=True, source=SOURCE_CAE,
            probability=prob, zone_id=zone.id, clamped=clamped,
        )
    else:
        decision = Decision(
            frame.frame_index, zone.static_resolution, idr=True, source=SOURCE_FALLBACK,
            zone_id=zone.id, clamped=clamped,
        )
    state.current_resolution = decision.resolution
    state.decisions.append(decision)
    return decision


@dataclass
class ChannelModel:
    """Leaky-bucket sender queue with a queued-delay drop threshold."""

    capacity_mbps: float
    fps: float = 60.0
    drop_threshold: float = 2.0  # frame intervals of queued delay
    queue_bytes: float = 0.0
    delivered: int = 0
    dropped: int = 0

    @property
    def drain_bytes_per_frame(self) -> float:
        return self.capacity_mbps * 1e6 / (8.0 * self.fps)

    @property
    def drop_pct(self) -> float:
        total = self.delivered + self.dropped
        return 100.0 * self.dropped / total if total else 0.0


def step_channel(model: ChannelModel, frame_size_bytes: float) -> bool:
    """Advance one frame interval; returns True if the frame was delivered."""
    drain = model.drain_bytes_per_frame
    model.queue_bytes = max(0.0, model.queue_bytes - drain)
    if model.queue_bytes + frame_size_bytes > model.drop_threshold * drain:
        model.dropped += 1
        return False
    model.queue_bytes += frame_size_bytes
    model.delivered += 1
    return True


@dataclass
class SceneSummary:
    scene_index: int
    scene_id: str
    resolution: Resolution
    source: str
    probability: float | None
    zone_id: int | None


@dataclass
class SessionReport:
    policy: str
    decisions: list[Decision]
    delivered_flags: list[bool]
    scenes: list[SceneSummary]
    dropped: int
    drop_pct: float


POLICY_CAE = "cae"
POLICY_STATIC = "static"
POLICY_ORACLE = "oracle"


def simulate_session(
    frames: Sequence[FrameStats],
    cc_trace: Sequence[float],
    policy: str,
    channel: ChannelModel,
    size_model: FrameSizeModel,
    zone_table: ZoneTable = DEFAULT_ZONE_TABLE,
    bundles: Mapping[int, WeightBundle] | None = None,
    oracle_labels: Mapping[str, Mapping[int, int]] | None = None,
    scene_ids: Sequence[str] | None = None,
) -> SessionReport:
    """Replay a stats stream through a policy and the channel queue.

    The CAE policy runs the full decision engine; 'static' follows the zone
    table; 'oracle' applies externally supplied per-scene/zone labels at scene
    changes. Frame sizes for whichever resolution was chosen come from the
    size model. Channel capacity tracks the congestion-control trace.
    """
    if len(frames) != len(cc_trace):
        raise StreamLengthMismatch(f"{len(frames)} frames vs {len(cc_trace)} congestion-control samples")
    if len(frames) > len(size_model):
        raise StreamLengthMismatch(f"{len(frames)} frames vs {len(size_model)} size rows")
    if policy not in (POLICY_CAE, POLICY_STATIC, POLICY_ORACLE):
        raise ValueError(f"unknown policy {policy!r}")
    if policy == POLICY_CAE and not bundles:
        raise MissingBundle("CAE policy requires weight bundles")
    if policy == POLICY_ORACLE and oracle_labels is None:
        raise MissingBundle("oracle policy requires labels")

    state = SessionState(bundles or {}, zone_table)
    current = zone_table.zones[-1].static_resolution
    scene_index = -1
    decisions: list[Decision] = []
    delivered_flags: list[bool] = []
    scenes: list[SceneSummary] = []

    for i, frame in enumerate(frames):
        cc = float(cc_trace[i])
        if frame.scene_change:
            scene_index += 1
        if policy == POLICY_CAE:
            decision = on_frame(state, frame, cc)
        elif frame.scene_change:
            zone, clamped = zone_for_bitrate(zone_table, cc)
            if policy == POLICY_STATIC:
                current = static_policy(zone)
            else:
                sid = scene_ids[scene_index] if scene_ids else str(scene_index)
                zone_labels = oracle_labels.get(sid)
                if zone_labels is None or zone.id not in zone_labels:
                    raise MissingBundle(f"oracle labels missing for scene {sid} zone {zone.id}")
                current = zone.candidate_for_label(zone_labels[zone.id])
            decision = Decision(frame.frame_index, current, idr=True, source=policy,
                                zone_id=zone.id, clamped=clamped)
        else:
            decision = Decision(frame.frame_index, current, idr=False, source=SOURCE_UNCHANGED)
        decisions.append(decision)
        if frame.scene_change:
            sid = scene_ids[scene_index] if scene_ids else str(scene_index)
            scenes.append(
                SceneSummary(scene_index, sid, decision.resolution, decision.source,
                             decision.probability, decision.zone_id)
            )
        channel.capacity_mbps = cc
        delivered_flags.append(step_channel(channel, size_model.size(frame.frame_index, decision.resolution)))

    return SessionReport(
        policy=policy,
        decisions=decisions,
        delivered_flags=delivered_flags,
        scenes=scenes,
        dropped=channel.dropped,
        drop_pct=channel.drop_pct,
    )
