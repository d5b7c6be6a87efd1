"""End-to-end detection pipeline: source -> templates -> counts -> scores -> alerts.

Each datacenter runs its own miner, aggregator, detector and window evaluator;
datacenters are processed sequentially by default (deterministic output order)
or in a thread pool with --parallel, in which case per-datacenter outputs are
still concatenated in configured order.
"""

from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .aggregate import CountAggregator, CountPoint
from .config import RunConfig
from .detector import AnomalousPoint, StreamDetector
from .hierarchy import Alert, NodeScore, WindowEvaluator
from .ingest import Checkpoint, open_source
from .templates import TemplateMiner
from .timeutil import format_iso8601_ms
from .topology import load_topology

logger = logging.getLogger(__name__)


@dataclass
class DatacenterSummary:
    datacenter: str
    parsed: int = 0
    malformed: int = 0
    late: int = 0
    templates: int = 0
    signals: int = 0
    points_scored: int = 0
    anomalies: int = 0
    windows: int = 0
    alerts: int = 0

    def as_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class PipelineSummary:
    per_datacenter: list[DatacenterSummary] = field(default_factory=list)

    def total(self, name: str) -> int:
        return sum(getattr(dc, name) for dc in self.per_datacenter)

    def as_dict(self) -> dict:
        totals = {
            name: self.total(name)
            for name in ("parsed", "malformed", "late", "templates", "signals",
                         "points_scored", "anomalies", "windows", "alerts")
        }
        return {"datacenters": [dc.as_dict() for dc in self.per_datacenter], "totals": totals}


def _anomaly_line(point: AnomalousPoint) -> str:
    return json.dumps({
        "ts": format_iso8601_ms(point.timestamp_ms),
        "score": point.score,
        "dc": point.key.datacenter,
        "device": point.key.device,
        "template_id": point.key.template_id,
    })


def _score_line(score: NodeScore) -> str:
    return json.dumps({
        "window_end": format_iso8601_ms(score.window_end_ms),
        "node_id": score.node_id,
        "depth": score.depth,
        "raw": score.raw,
        "rank": score.rank,
        "normalized": score.normalized,
    })


def _alert_line(alert: Alert) -> str:
    return json.dumps({
        "window_end": format_iso8601_ms(alert.window_end_ms),
        "dc": alert.datacenter,
        "normalized_root": alert.normalized_root,
        "contributor_path": [
            {"node_id": node_id, "raw": raw} for node_id, raw in alert.contributor_path
        ],
    })


def _count_line(point: CountPoint) -> str:
    return json.dumps({
        "dc": point.key.datacenter,
        "device": point.key.device,
        "template_id": point.key.template_id,
        "bucket_start": format_iso8601_ms(point.bucket_start_ms),
        "count": point.count,
    })


class _DatacenterRun:
    """One datacenter's pipeline instance; collects output lines per sink."""

    def __init__(self, source_cfg, config: RunConfig, topology_doc: dict, write) -> None:
        self.config = config
        self.source_cfg = source_cfg
        self.write = write
        self.miner = TemplateMiner(config.miner)
        self.aggregator = CountAggregator(config.aggregator)
        self.detector = StreamDetector(
            config.signal, config.aggregator.bucket_width_s, config.signal_overrides
        )
        self.topology = load_topology(topology_doc, config.topology)
        self.evaluator = WindowEvaluator(
            self.topology,
            config.window,
            datacenter=source_cfg.datacenter,
            collect_scores=config.output.scores is not None,
        )
        self.summary = DatacenterSummary(source_cfg.datacenter)

    def _advance(self, watermark_ms: int | None) -> None:
        flushed = self.aggregator.flush(watermark_ms)
        if self.config.output.counts is not None:
            for point in flushed:
                self.write("counts", _count_line(point))
        anomalies = self.detector.advance(watermark_ms, flushed)
        det = self.detector
        if det.first_bucket_ms is not None:
            self.evaluator.observe_bucket(det.first_bucket_ms, det.bucket_width_ms)
        if det.last_bucket_ms is not None:
            self.evaluator.observe_bucket(det.last_bucket_ms, det.bucket_width_ms)
        if anomalies:
            self.summary.anomalies += len(anomalies)
            for point in anomalies:
                self.write("anomalies", _anomaly_line(point))
            self.evaluator.ingest(anomalies)
        if watermark_ms is not None:
            self._emit(*self.evaluator.evaluate_due(watermark_ms))

    def _emit(self, scores: list[NodeScore], alerts: list[Alert]) -> None:
        if self.config.output.scores is not None:
            for score in scores:
                self.write("scores", _score_line(score))
        for alert in alerts:
            self.write("alerts", _alert_line(alert))
        self.summary.alerts += len(alerts)

    def run(self, resume: Checkpoint | None = None) -> DatacenterSummary:
        source = open_source(self.source_cfg, resume)
        width_ms = self.aggregator.config.bucket_width_ms
        last_boundary: int | None = None
        for record, is_late in source.records():
            if is_late:
                continue
            template_id, _ = self.miner.assign(record.message)
            self.aggregator.add(record, template_id)
            boundary = source.watermark_ms // width_ms
            if last_boundary is None or boundary > last_boundary:
                last_boundary = boundary
                self._advance(source.watermark_ms)
        self._advance(None)
        self._emit(*self.evaluator.drain())

        counters = source.counters
        summary = self.summary
        summary.parsed = counters.parsed
        summary.malformed = counters.malformed
        summary.late = counters.late
        summary.templates = len(self.miner.templates)
        summary.signals = self.detector.signal_count
        summary.points_scored = self.detector.points_processed
        summary.windows = self.evaluator.windows_evaluated
        return summary


class _SinkSet:
    """JSONL writers keyed by sink name; unconfigured sinks discard."""

    def __init__(self, config: RunConfig) -> None:
        self._paths = {
            "anomalies": config.output.anomalies,
            "scores": config.output.scores,
            "alerts": config.output.alerts,
            "counts": config.output.counts,
        }
        self._handles: dict[str, object] = {}

    def __enter__(self) -> "_SinkSet":
        for name, path in self._paths.items():
            if path is None:
                continue
            Path(path).parent.mkdir(parents=True, exist_ok=True)
            self._handles[name] = open(path, "w", encoding="utf-8")
        return self

    def __exit__(self, *exc) -> None:
        for handle in self._handles.values():
            handle.close()

    def writer_for(self, buffer: list[tuple[str, str]] | None):
        if buffer is None:
            def write(name: str, line: str) -> None:
                handle = self._handles.get(name)
                if handle is not None:
                    handle.write(line + "\n")
        else:
            def write(name: str, line: str) -> None:
                buffer.append((name, line))
        return write

    def flush_buffer(self, buffer: list[tuple[str, str]]) -> None:
        for name, line in buffer:
            handle = self._handles.get(name)
            if handle is not None:
                handle.write(line + "\n")


def run_detect(config: RunConfig, parallel: bool = False) -> PipelineSummary:
    """Run the full pipeline over every configured source."""
    config.validate()
    topology_path = Path(config.topology)
    if not topology_path.exists():
        raise FileNotFoundError(f"topology file not found: {topology_path}")
    topology_doc = yaml.safe_load(topology_path.read_text(encoding="utf-8"))

    summary = PipelineSummary()
    with _SinkSet(config) as sinks:
        if parallel and len(config.sources) > 1:
            buffers: list[list[tuple[str, str]]] = [[] for _ in config.sources]
            with ThreadPoolExecutor(max_workers=len(config.sources)) as pool:
                futures = [
                    pool.submit(
                        _DatacenterRun(src, config, topology_doc, sinks.writer_for(buf)).run
                    )
                    for src, buf in zip(config.sources, buffers)
                ]
                for future, buf in zip(futures, buffers):
                    summary.per_datacenter.append(future.result())
                    sinks.flush_buffer(buf)
        else:
            for src in config.sources:
                run = _DatacenterRun(src, config, topology_doc, sinks.writer_for(None))
                summary.per_datacenter.append(run.run())
    return summary
