"""Scaling benchmark for the two scoring stages.

Builds a deterministic synthetic count matrix, then an exact 2x copy in which
every signal is duplicated under a dummy device id, and times the per-signal
scoring stage and the hierarchical window stage separately on both. Memory is
measured in a second pass under tracemalloc so allocation tracking does not
pollute the timings.
"""

from __future__ import annotations

import time
import tracemalloc
from dataclasses import dataclass

import numpy as np

from .aggregate import SignalKey
from .detector import AnomalousPoint, SignalConfig, StreamDetector
from .hierarchy import WindowConfig, WindowEvaluator
from .timeutil import MS_PER_SECOND
from .topology import load_topology

_START_MS = 1609459200000  # 2021-01-01T00:00:00Z
_DATACENTER = "dc-bench"


@dataclass
class StageStats:
    points: int
    seconds: float
    ms_per_1k_points: float
    mem_current_bytes: int
    mem_peak_bytes: int


def build_workload(
    n_devices: int, n_templates: int, n_buckets: int, seed: int
) -> tuple[list[SignalKey], np.ndarray]:
    """Poisson(1.0) counts, shape (signals, buckets); one key per signal row."""
    rng = np.random.default_rng(seed)
    keys = [
        SignalKey(_DATACENTER, f"bench-{d:03d}", t)
        for d in range(n_devices)
        for t in range(n_templates)
    ]
    counts = rng.poisson(1.0, size=(len(keys), n_buckets))
    return keys, counts


def double_workload(
    keys: list[SignalKey], counts: np.ndarray
) -> tuple[list[SignalKey], np.ndarray]:
    """Duplicate every signal under a dummy device id: exactly 2x the points."""
    doubled = keys + [
        SignalKey(k.datacenter, f"{k.device}-dummy", k.template_id) for k in keys
    ]
    return doubled, np.vstack([counts, counts])


def _bucket_dicts(keys: list[SignalKey], counts: np.ndarray) -> list[dict]:
    cols = counts.T.tolist()
    return [dict(zip(keys, col)) for col in cols]


def _run_signal_stage(
    bucket_counts: list[dict], width_ms: int
) -> tuple[StreamDetector, list[list[AnomalousPoint]], float]:
    detector = StreamDetector(SignalConfig(), width_ms // MS_PER_SECOND)
    per_bucket: list[list[AnomalousPoint]] = []
    start = time.perf_counter()
    for i, counts in enumerate(bucket_counts):
        per_bucket.append(detector.process_bucket(_START_MS + i * width_ms, counts))
    elapsed = time.perf_counter() - start
    return detector, per_bucket, elapsed


def _run_window_stage(
    per_bucket: list[list[AnomalousPoint]], width_ms: int
) -> tuple[WindowEvaluator, float]:
    topology = load_topology({"nodes": [{"id": _DATACENTER, "kind": "root"}]})
    evaluator = WindowEvaluator(
        topology, WindowConfig(), datacenter=_DATACENTER, collect_scores=False
    )
    start = time.perf_counter()
    for i, anomalies in enumerate(per_bucket):
        bucket_ms = _START_MS + i * width_ms
        evaluator.observe_bucket(bucket_ms, width_ms)
        evaluator.ingest(anomalies)
        evaluator.evaluate_due(bucket_ms + width_ms)
    evaluator.drain()
    elapsed = time.perf_counter() - start
    return evaluator, elapsed


def _measure(run, points: int) -> StageStats:
    """Timing pass first, then a separate tracemalloc pass for memory."""
    _, elapsed = run()
    tracemalloc.start()
    run()
    current, peak = tracemalloc.get_traced_memory()
    tracemalloc.stop()
    return StageStats(
        points=points,
        seconds=elapsed,
        ms_per_1k_points=elapsed / points * 1000.0 * 1000.0,
        mem_current_bytes=current,
        mem_peak_bytes=peak,
    )


def run_bench(
    n_devices: int = 40,
    n_templates: int = 25,
    n_buckets: int = 1000,
    seed: int = 7,
    bucket_width_s: int = 60,
) -> dict:
    """Time both stages at 1x and 2x scale; report ratios and throughput."""
    width_ms = bucket_width_s * MS_PER_SECOND
    base_keys, base_counts = build_workload(n_devices, n_templates, n_buckets, seed)
    dbl_keys, dbl_counts = double_workload(base_keys, base_counts)
    scales = {
        "base": (base_keys, base_counts),
        "double": (dbl_keys, dbl_counts),
    }

    report: dict = {
        "seed": seed,
        "bucket_width_s": bucket_width_s,
        "points": {name: int(counts.size) for name, (_, counts) in scales.items()},
        "stages": {"signal_scoring": {}, "window_aggregation": {}},
    }
    for name, (keys, counts) in scales.items():
        bucket_counts = _bucket_dicts(keys, counts)
        points = int(counts.size)

        anomalies_box: list[list[list[AnomalousPoint]]] = []

        def signal_run():
            _, per_bucket, elapsed = _run_signal_stage(bucket_counts, width_ms)
            anomalies_box.append(per_bucket)
            return None, elapsed

        report["stages"]["signal_scoring"][name] = _measure(signal_run, points).__dict__

        per_bucket = anomalies_box[0]
        n_anomalies = sum(len(b) for b in per_bucket)

        def window_run():
            _, elapsed = _run_window_stage(per_bucket, width_ms)
            return None, elapsed

        stats = _measure(window_run, points)
        entry = stats.__dict__
        entry["anomalous_points"] = n_anomalies
        report["stages"]["window_aggregation"][name] = entry

    for stage, data in report["stages"].items():
        base, double = data["base"], data["double"]
        data["time_ratio"] = double["seconds"] / base["seconds"]
        data["mem_ratio"] = double["mem_current_bytes"] / max(base["mem_current_bytes"], 1)
    report["doubling_exact"] = report["points"]["double"] == 2 * report["points"]["base"]
    return report


def render_bench_report(report: dict) -> str:
    lines = [
        f"points: base={report['points']['base']:,} double={report['points']['double']:,} "
        f"(exact 2x: {report['doubling_exact']})"
    ]
    for stage, data in report["stages"].items():
        lines.append(f"{stage}:")
        for scale in ("base", "double"):
            s = data[scale]
            lines.append(
                f"  {scale:6s} {s['seconds']:8.2f} s  {s['ms_per_1k_points']:8.3f} ms/1k pts  "
                f"mem {s['mem_current_bytes'] / 1e6:7.1f} MB"
            )
        lines.append(
            f"  ratio  time x{data['time_ratio']:.2f}  mem x{data['mem_ratio']:.2f}"
        )
    return "\n".join(lines)
