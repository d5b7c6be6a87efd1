"""Synthetic log workload with injected incident bursts, for desk-scale runs.

Baseline traffic draws a Poisson count per (device, template, bucket) and
renders each occurrence as a structured log line. An incident multiplies the
rates of a few randomly chosen devices for its burst duration and writes a
matching ticket. Everything is a pure function of the seed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .timeutil import MS_PER_SECOND, format_iso8601_ms

# Digit-free event vocabulary: the leading word pins the template identity
# while the varying counter exercises wildcard generalization in the miner.
_EVENT_WORDS = [
    "alpha", "bravo", "charlie", "delta", "echo", "foxtrot", "golf", "hotel",
    "india", "juliet", "kilo", "lima", "mike", "november", "oscar", "papa",
    "quebec", "romeo", "sierra", "tango", "uniform", "victor", "whiskey",
    "xray", "yankee", "zulu",
]

DEFAULT_START_MS = 1609459200000  # 2021-01-01T00:00:00Z


@dataclass
class SynthConfig:
    n_devices: int = 50
    n_templates: int = 20
    duration_s: int = 7 * 86400
    baseline_rate: float = 0.2  # Poisson mean per (device, template) per bucket
    n_incidents: int = 20
    burst_multiplier: float = 10.0
    burst_duration_s: int = 600
    devices_per_incident: int = 3
    seed: int = 0
    datacenter: str = "dc-synth"
    bucket_width_s: int = 60
    start_ms: int = DEFAULT_START_MS
    incident_margin_s: int = 3600   # keep-out zone at both ends of the run
    incident_min_gap_s: int = 1800  # minimum spacing between incident starts

    def validate(self) -> None:
        if self.n_devices < 1 or self.n_templates < 1:
            raise ValueError("synth: n_devices and n_templates must be >= 1")
        if self.duration_s < self.bucket_width_s:
            raise ValueError("synth: duration_s must cover at least one bucket")
        if self.baseline_rate <= 0:
            raise ValueError("synth: baseline_rate must be > 0")
        if self.n_incidents < 0:
            raise ValueError("synth: n_incidents must be >= 0")
        if self.burst_multiplier <= 1.0:
            raise ValueError("synth: burst_multiplier must be > 1")
        if self.devices_per_incident < 1 or self.devices_per_incident > self.n_devices:
            raise ValueError("synth: devices_per_incident must be in [1, n_devices]")
        if self.burst_duration_s < self.bucket_width_s:
            raise ValueError("synth: burst_duration_s must cover at least one bucket")


@dataclass
class SynthIncident:
    start_ms: int
    end_ms: int
    devices: list[str]


@dataclass
class SynthResult:
    lines_written: int
    incidents: list[SynthIncident]
    log_path: Path
    ticket_path: Path


def _device_name(i: int) -> str:
    return f"host-{i:03d}"


def _template_message(t: int, counter: int) -> str:
    word = _EVENT_WORDS[t % len(_EVENT_WORDS)]
    suffix = t // len(_EVENT_WORDS)
    name = word if suffix == 0 else f"{word}{'x' * suffix}"
    return f"{name} queue depth reached {counter} entries"


def _plan_incidents(cfg: SynthConfig, rng: np.random.Generator) -> list[SynthIncident]:
    if cfg.n_incidents == 0:
        return []
    width_ms = cfg.bucket_width_s * MS_PER_SECOND
    usable_start = cfg.start_ms + cfg.incident_margin_s * MS_PER_SECOND
    usable_end = (
        cfg.start_ms + cfg.duration_s * MS_PER_SECOND
        - (cfg.incident_margin_s + cfg.burst_duration_s) * MS_PER_SECOND
    )
    span = usable_end - usable_start
    if span <= 0:
        raise ValueError("synth: duration too short for the incident margins")
    slot = span // cfg.n_incidents
    needed = (cfg.burst_duration_s + cfg.incident_min_gap_s) * MS_PER_SECOND
    if slot < needed:
        raise ValueError("synth: too many incidents for the duration and spacing")
    incidents = []
    for i in range(cfg.n_incidents):
        jitter = int(rng.integers(0, max(slot - needed, 1)))
        start = usable_start + i * slot + jitter
        start = (start // width_ms) * width_ms  # align bursts to the bucket grid
        devices = sorted(
            _device_name(int(d))
            for d in rng.choice(cfg.n_devices, size=cfg.devices_per_incident, replace=False)
        )
        incidents.append(
            SynthIncident(start, start + cfg.burst_duration_s * MS_PER_SECOND, devices)
        )
    return incidents


def generate(cfg: SynthConfig, log_path: str | Path, ticket_path: str | Path) -> SynthResult:
    """Write time-ordered structured log lines plus the incident ticket file."""
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    width_ms = cfg.bucket_width_s * MS_PER_SECOND
    n_buckets = cfg.duration_s * MS_PER_SECOND // width_ms
    n_signals = cfg.n_devices * cfg.n_templates

    incidents = _plan_incidents(cfg, rng)
    device_index = {_device_name(i): i for i in range(cfg.n_devices)}

    base_rates = np.full(n_signals, cfg.baseline_rate)
    devices = [_device_name(i) for i in range(cfg.n_devices)]
    log_path, ticket_path = Path(log_path), Path(ticket_path)
    log_path.parent.mkdir(parents=True, exist_ok=True)
    ticket_path.parent.mkdir(parents=True, exist_ok=True)

    lines_written = 0
    counter = 0
    with open(log_path, "w", encoding="utf-8") as fh:
        for b in range(int(n_buckets)):
            bucket_ms = cfg.start_ms + b * width_ms
            rates = base_rates
            active = [
                inc for inc in incidents if inc.start_ms <= bucket_ms < inc.end_ms
            ]
            if active:
                rates = base_rates.copy()
                for inc in active:
                    for dev in inc.devices:
                        d = device_index[dev]
                        rates[d * cfg.n_templates:(d + 1) * cfg.n_templates] *= cfg.burst_multiplier
            counts = rng.poisson(rates)
            total = int(counts.sum())
            if total == 0:
                continue
            offsets = np.sort(rng.integers(0, width_ms, size=total))
            entries = []
            for sig in np.flatnonzero(counts):
                dev = devices[sig // cfg.n_templates]
                tmpl = int(sig % cfg.n_templates)
                for _ in range(int(counts[sig])):
                    counter += 1
                    entries.append((dev, tmpl, counter))
            order = rng.permutation(total)
            for off, idx in zip(offsets, order):
                dev, tmpl, n = entries[int(idx)]
                ts = format_iso8601_ms(bucket_ms + int(off))
                fh.write(json.dumps({"ts": ts, "host": dev, "msg": _template_message(tmpl, n)}) + "\n")
                lines_written += 1

    with open(ticket_path, "w", encoding="utf-8") as fh:
        for i, inc in enumerate(incidents):
            fh.write(json.dumps({
                "dc": cfg.datacenter,
                "start_time": format_iso8601_ms(inc.start_ms),
                "description": f"synthetic burst {i + 1} ({cfg.burst_multiplier:g}x rates)",
                "devices": inc.devices,
            }) + "\n")

    return SynthResult(lines_written, incidents, log_path, ticket_path)
