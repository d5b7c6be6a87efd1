"""Accuracy harness: match alerts to incident tickets and score the result.

An incident counts as detected when at least one alert from the same
datacenter lands within the tolerance (default five minutes) of its start
time. Alerts are first deduplicated to one per (datacenter, step window) and
incidents that duplicate each other inside the tolerance are merged. Matching
uses datacenter and time only, never the affected devices.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .timeutil import MS_PER_SECOND, parse_iso8601_ms

DEFAULT_TOLERANCE_S = 300


@dataclass
class IncidentTicket:
    datacenter: str
    start_ms: int
    description: str = ""
    devices: list[str] | None = None

    def validate(self) -> None:
        if not self.datacenter:
            raise ValueError("incident.datacenter: must be non-empty")


@dataclass
class AlertEvent:
    """The subset of an alert record that matching needs."""

    datacenter: str
    window_end_ms: int


@dataclass
class EvalCounts:
    true_positives: int = 0
    false_positives: int = 0
    false_negatives: int = 0


@dataclass
class EvalMetrics:
    precision: float
    recall: float
    f1: float


@dataclass
class MatchReport:
    counts: EvalCounts
    detected: list[tuple[IncidentTicket, AlertEvent]] = field(default_factory=list)
    missed: list[IncidentTicket] = field(default_factory=list)
    false_alerts: list[AlertEvent] = field(default_factory=list)
    merged_incidents: int = 0
    deduplicated_alerts: int = 0


def dedup_alerts(alerts: list[AlertEvent]) -> list[AlertEvent]:
    seen: set[tuple[str, int]] = set()
    out: list[AlertEvent] = []
    for alert in alerts:
        key = (alert.datacenter, alert.window_end_ms)
        if key not in seen:
            seen.add(key)
            out.append(alert)
    return out


def merge_incidents(incidents: list[IncidentTicket], tolerance_ms: int) -> tuple[list[IncidentTicket], int]:
    """Collapse tickets of the same datacenter starting within the tolerance."""
    merged: list[IncidentTicket] = []
    dropped = 0
    for inc in sorted(incidents, key=lambda i: (i.datacenter, i.start_ms)):
        last = merged[-1] if merged else None
        if (
            last is not None
            and last.datacenter == inc.datacenter
            and inc.start_ms - last.start_ms <= tolerance_ms
        ):
            dropped += 1
            if inc.devices:
                last.devices = sorted(set(last.devices or []) | set(inc.devices))
            continue
        merged.append(
            IncidentTicket(inc.datacenter, inc.start_ms, inc.description,
                           list(inc.devices) if inc.devices else None)
        )
    return merged, dropped


def match(
    alerts: list[AlertEvent],
    incidents: list[IncidentTicket],
    tolerance_s: int = DEFAULT_TOLERANCE_S,
) -> MatchReport:
    """Count TP/FP/FN under the same-datacenter, +/- tolerance matching rule."""
    tolerance_ms = tolerance_s * MS_PER_SECOND
    unique_alerts = dedup_alerts(sorted(alerts, key=lambda a: (a.datacenter, a.window_end_ms)))
    merged, dropped = merge_incidents(incidents, tolerance_ms)

    report = MatchReport(EvalCounts(), merged_incidents=dropped,
                         deduplicated_alerts=len(alerts) - len(unique_alerts))
    alert_used = [False] * len(unique_alerts)
    for inc in merged:
        hit: AlertEvent | None = None
        for i, alert in enumerate(unique_alerts):
            if alert.datacenter != inc.datacenter:
                continue
            if abs(alert.window_end_ms - inc.start_ms) <= tolerance_ms:
                alert_used[i] = True
                if hit is None:
                    hit = alert
        if hit is None:
            report.counts.false_negatives += 1
            report.missed.append(inc)
        else:
            report.counts.true_positives += 1
            report.detected.append((inc, hit))
    for used, alert in zip(alert_used, unique_alerts):
        if not used:
            report.counts.false_positives += 1
            report.false_alerts.append(alert)
    return report


def metrics(counts: EvalCounts) -> EvalMetrics:
    tp, fp, fn = counts.true_positives, counts.false_positives, counts.false_negatives
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2.0 * precision * recall / (precision + recall) if precision + recall else 0.0
    return EvalMetrics(precision, recall, f1)


def weighted_mean(per_dc: list[tuple[EvalMetrics, int]]) -> EvalMetrics:
    """Mean of per-datacenter metrics weighted by incident counts."""
    total = sum(n for _, n in per_dc)
    if total <= 0:
        raise ValueError("weighted_mean: incident counts sum to zero")
    return EvalMetrics(
        precision=sum(m.precision * n for m, n in per_dc) / total,
        recall=sum(m.recall * n for m, n in per_dc) / total,
        f1=sum(m.f1 * n for m, n in per_dc) / total,
    )


def apply_split(
    alerts: list[AlertEvent],
    incidents: list[IncidentTicket],
    fraction: float,
) -> tuple[list[AlertEvent], list[IncidentTicket]]:
    """Score only the trailing part of the period (e.g. 0.5 = second half)."""
    if not 0.0 <= fraction < 1.0:
        raise ValueError("split fraction must be in [0, 1)")
    times = [a.window_end_ms for a in alerts] + [i.start_ms for i in incidents]
    if not times or fraction == 0.0:
        return alerts, incidents
    lo, hi = min(times), max(times)
    cutoff = lo + (hi - lo) * fraction
    return (
        [a for a in alerts if a.window_end_ms >= cutoff],
        [i for i in incidents if i.start_ms >= cutoff],
    )


def load_incidents(path: str | Path) -> list[IncidentTicket]:
    incidents: list[IncidentTicket] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                doc = json.loads(line)
                ticket = IncidentTicket(
                    datacenter=str(doc["dc"]),
                    start_ms=parse_iso8601_ms(str(doc["start_time"])),
                    description=str(doc.get("description", "")),
                    devices=list(doc["devices"]) if doc.get("devices") else None,
                )
                ticket.validate()
            except (ValueError, KeyError, TypeError) as exc:
                raise ValueError(f"{path}:{lineno}: bad incident ticket: {exc}") from exc
            incidents.append(ticket)
    return incidents


def load_alerts(path: str | Path) -> list[AlertEvent]:
    alerts: list[AlertEvent] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                doc = json.loads(line)
                alerts.append(AlertEvent(str(doc["dc"]), parse_iso8601_ms(str(doc["window_end"]))))
            except (ValueError, KeyError, TypeError) as exc:
                raise ValueError(f"{path}:{lineno}: bad alert record: {exc}") from exc
    return alerts


@dataclass
class DatacenterResult:
    datacenter: str
    metrics: EvalMetrics
    counts: EvalCounts
    incidents: int


def evaluate_streams(
    alerts: list[AlertEvent],
    incidents: list[IncidentTicket],
    tolerance_s: int = DEFAULT_TOLERANCE_S,
    split: float = 0.0,
) -> tuple[list[DatacenterResult], EvalMetrics]:
    """Per-datacenter precision/recall/F1 plus the incident-weighted mean."""
    alerts, incidents = apply_split(alerts, incidents, split)
    datacenters = sorted({i.datacenter for i in incidents} | {a.datacenter for a in alerts})
    results: list[DatacenterResult] = []
    for dc in datacenters:
        report = match(
            [a for a in alerts if a.datacenter == dc],
            [i for i in incidents if i.datacenter == dc],
            tolerance_s,
        )
        n_incidents = report.counts.true_positives + report.counts.false_negatives
        results.append(DatacenterResult(dc, metrics(report.counts), report.counts, n_incidents))
    weighable = [(r.metrics, r.incidents) for r in results if r.incidents > 0]
    wm = weighted_mean(weighable) if weighable else EvalMetrics(0.0, 0.0, 0.0)
    return results, wm


def render_report(results: list[DatacenterResult], wm: EvalMetrics) -> str:
    lines = [f"{'':12s} {'F1 %':>7s} {'P %':>7s} {'R %':>7s} {'TP':>5s} {'FP':>5s} {'FN':>5s}"]
    for r in results:
        m, c = r.metrics, r.counts
        lines.append(
            f"{r.datacenter:12s} {m.f1 * 100:7.1f} {m.precision * 100:7.1f} "
            f"{m.recall * 100:7.1f} {c.true_positives:5d} {c.false_positives:5d} "
            f"{c.false_negatives:5d}"
        )
    lines.append(
        f"{'WM':12s} {wm.f1 * 100:7.1f} {wm.precision * 100:7.1f} {wm.recall * 100:7.1f}"
    )
    return "\n".join(lines)


def report_document(results: list[DatacenterResult], wm: EvalMetrics) -> dict:
    return {
        "per_datacenter": [
            {
                "dc": r.datacenter,
                "f1_pct": round(r.metrics.f1 * 100, 3),
                "precision_pct": round(r.metrics.precision * 100, 3),
                "recall_pct": round(r.metrics.recall * 100, 3),
                "tp": r.counts.true_positives,
                "fp": r.counts.false_positives,
                "fn": r.counts.false_negatives,
                "incidents": r.incidents,
            }
            for r in results
        ],
        "weighted_mean": {
            "f1_pct": round(wm.f1 * 100, 3),
            "precision_pct": round(wm.precision * 100, 3),
            "recall_pct": round(wm.recall * 100, 3),
        },
    }
