"""Ladder-versus-ladder comparison reports.

Per scene and metric, each policy's chosen (rate, quality) points pass the
convexity filter and become an RD curve; BD deltas are averaged over the
scenes where both curves survive with overlapping ranges. Per-bitrate
significance uses the raw paired qualities across scenes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .bd import RDCurve, bd_quality, bd_rate
from .errors import DataError, GridMismatch, NoOverlap, TooFewPoints
from .hulls import enforce_convexity
from .rqtable import METRICS, RQPoint, SceneKey
from .stats_tests import classify_effect_size, cohens_d, wilcoxon_signed_rank
from .zones import Resolution

#: decisions[scene_key][target_mbps] = chosen resolution
PolicyDecisions = dict[SceneKey, dict[float, Resolution]]


@dataclass(frozen=True)
class BDSummary:
    metric: str
    bd_rate_pct: float
    bd_quality: float
    scenes_used: int
    scenes_skipped: int


@dataclass(frozen=True)
class SignificanceEntry:
    target_mbps: float
    metric: str
    n: int
    p_value: float
    effect_size: float
    classification: str
    significant: bool


@dataclass
class ComparisonReport:
    bd: dict[str, BDSummary]
    significance: list[SignificanceEntry]
    delta_framedrops_pct: float | None = None
    reference_drop_pct: float | None = None
    test_drop_pct: float | None = None


def _quality_index(points: list[RQPoint]) -> dict[tuple[Resolution, float], RQPoint]:
    return {(p.resolution, p.target_bitrate_mbps): p for p in points}


def _policy_curve(
    scene_points: list[RQPoint],
    decisions: dict[float, Resolution],
    metric: str,
) -> RDCurve:
    index = _quality_index(scene_points)
    chosen = []
    for target, resolution in sorted(decisions.items()):
        point = index.get((resolution, target))
        if point is None:
            raise DataError(f"no measurement for {resolution.label} at {target:g} Mbps")
        chosen.append(point)
    filtered = enforce_convexity(chosen, metric)
    return RDCurve(
        rates=np.array([p.measured_bitrate_mbps for p in filtered]),
        qualities=np.array([p.quality(metric) for p in filtered]),
        metric=metric,
    )


def evaluate_ladders(
    rq_groups: dict[SceneKey, list[RQPoint]],
    reference: PolicyDecisions,
    test: PolicyDecisions,
    metrics: tuple[str, ...] = METRICS,
    reference_drop_pct: float | None = None,
    test_drop_pct: float | None = None,
) -> ComparisonReport:
    """Compare two policies evaluated on the same (scene, bitrate) grid.

    BD values are per-scene and averaged arithmetically; scenes whose filtered
    curves are degenerate or non-overlapping are skipped and counted.
    """
    if set(reference) != set(test):
        raise GridMismatch("policies cover different scene sets")
    for key in reference:
        if set(reference[key]) != set(test[key]):
            raise GridMismatch(f"policies cover different bitrates for scene {key}")
    missing = [k for k in reference if k not in rq_groups]
    if missing:
        raise GridMismatch(f"no RQ measurements for scenes: {missing[:5]}")

    bd: dict[str, BDSummary] = {}
    for metric in metrics:
        rates, quals = [], []
        skipped = 0
        for key in sorted(reference):
            try:
                ref_curve = _policy_curve(rq_groups[key], reference[key], metric)
                test_curve = _policy_curve(rq_groups[key], test[key], metric)
                rates.append(bd_rate(ref_curve, test_curve))
                quals.append(bd_quality(ref_curve, test_curve))
            except (TooFewPoints, NoOverlap):
                skipped += 1
        if not rates:
            raise TooFewPoints(f"no scene yields a valid BD comparison for {metric}")
        bd[metric] = BDSummary(
            metric=metric,
            bd_rate_pct=float(np.mean(rates)),
            bd_quality=float(np.mean(quals)),
            scenes_used=len(rates),
            scenes_skipped=skipped,
        )

    targets = sorted({t for d in reference.values() for t in d})
    significance: list[SignificanceEntry] = []
    for target in sorted(targets, reverse=True):
        for metric in metrics:
            ref_q, test_q = [], []
            for key in sorted(reference):
                if target not in reference[key]:
                    continue
                index = _quality_index(rq_groups[key])
                rp = index.get((reference[key][target], target))
                tp = index.get((test[key][target], target))
                if rp is None or tp is None:
                    raise GridMismatch(f"missing measurement at {target:g} Mbps for scene {key}")
                ref_q.append(rp.quality(metric))
                test_q.append(tp.quality(metric))
            if len(ref_q) < 2:
                continue
            result = wilcoxon_signed_rank(test_q, ref_q, alternative="greater")
            diffs = np.asarray(test_q) - np.asarray(ref_q)
            d = 0.0 if diffs.std(ddof=1) == 0 else float(cohens_d(test_q, ref_q))
            significance.append(
                SignificanceEntry(
                    target_mbps=target,
                    metric=metric,
                    n=result.n_effective,
                    p_value=result.p_value,
                    effect_size=d,
                    classification=classify_effect_size(d),
                    significant=result.p_value < 0.05,
                )
            )

    delta = None
    if reference_drop_pct is not None and test_drop_pct is not None:
        delta = test_drop_pct - reference_drop_pct
    return ComparisonReport(
        bd=bd,
        significance=significance,
        delta_framedrops_pct=delta,
        reference_drop_pct=reference_drop_pct,
        test_drop_pct=test_drop_pct,
    )


def report_text(report: ComparisonReport) -> str:
    """Human-readable rendering of a comparison report."""
    lines = ["== BD metrics (test vs reference) =="]
    for metric, summary in report.bd.items():
        lines.append(
            f"  {metric:8s}  BD-Rate {summary.bd_rate_pct:+7.2f}%   "
            f"BD-quality {summary.bd_quality:+8.4f}   "
            f"(scenes used {summary.scenes_used}, skipped {summary.scenes_skipped})"
        )
    if report.delta_framedrops_pct is not None:
        lines.append(
            f"  framedrops  {report.reference_drop_pct:.2f}% -> {report.test_drop_pct:.2f}% "
            f"(delta {report.delta_framedrops_pct:+.2f}%)"
        )
    lines.append("== per-bitrate significance (Wilcoxon one-sided, Cohen's d) ==")
    lines.append("  Mbps    metric    n     p-value       d  effect    significant")
    for e in report.significance:
        lines.append(
            f"  {e.target_mbps:5.1f}  {e.metric:8s} {e.n:4d}  {e.p_value:10.3e} "
            f"{e.effect_size:+7.2f}  {e.classification:7s} {'yes' if e.significant else 'no'}"
        )
    return "\n".join(lines) + "\n"


def report_rows(report: ComparisonReport) -> tuple[list[str], list[list]]:
    """Machine-readable rows mirroring the BD and significance tables."""
    header = ["section", "metric", "target_mbps", "value_a", "value_b", "value_c"]
    rows: list[list] = []
    for metric, s in report.bd.items():
        rows.append(["bd", metric, "", repr(s.bd_rate_pct), repr(s.bd_quality), s.scenes_used])
    if report.delta_framedrops_pct is not None:
        rows.append(
            ["framedrops", "", "", repr(report.reference_drop_pct), repr(report.test_drop_pct),
             repr(report.delta_framedrops_pct)]
        )
    for e in report.significance:
        rows.append(["significance", e.metric, repr(e.target_mbps), repr(e.p_value), repr(e.effect_size),
                     e.classification])
    return header, rows
