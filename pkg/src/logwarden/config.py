"""Run configuration: YAML document plus dotted-name flag overrides.

The effective configuration printed at startup round-trips: parsing the
printed YAML yields an identical RunConfig.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .aggregate import AggregatorConfig
from .detector import SignalConfig, SignalOverride
from .hierarchy import WindowConfig
from .ingest import SourceConfig
from .templates import MinerConfig


class ConfigError(ValueError):
    """Invalid run configuration; the message names the offending field."""


@dataclass
class OutputConfig:
    anomalies: str | None = "out/anomalies.jsonl"
    alerts: str | None = "out/alerts.jsonl"
    scores: str | None = None  # one record per (node, window); large
    counts: str | None = None  # optional bucket-count dump for offline checks


@dataclass
class RunConfig:
    sources: list[SourceConfig] = field(default_factory=list)
    topology: str = "topology.yaml"
    miner: MinerConfig = field(default_factory=MinerConfig)
    aggregator: AggregatorConfig = field(default_factory=AggregatorConfig)
    signal: SignalConfig = field(default_factory=SignalConfig)
    signal_overrides: list[SignalOverride] = field(default_factory=list)
    window: WindowConfig = field(default_factory=WindowConfig)
    output: OutputConfig = field(default_factory=OutputConfig)
    verbosity: str = "info"

    def validate(self) -> None:
        if not self.sources:
            raise ConfigError("sources: at least one source is required")
        for i, src in enumerate(self.sources):
            try:
                src.validate()
            except ValueError as exc:
                raise ConfigError(f"sources[{i}].{exc}") from exc
        seen = set()
        for src in self.sources:
            if src.datacenter in seen:
                raise ConfigError(
                    f"sources: datacenter {src.datacenter!r} appears twice; "
                    "one pipeline per datacenter"
                )
            seen.add(src.datacenter)
        for section, cfg in (
            ("miner", self.miner), ("aggregator", self.aggregator),
            ("signal", self.signal), ("window", self.window),
        ):
            try:
                cfg.validate()
            except ValueError as exc:
                raise ConfigError(str(exc)) from exc
        if self.window.step_s % self.aggregator.bucket_width_s != 0:
            raise ConfigError(
                "aggregator.bucket_width_s: must divide window.step_s "
                f"({self.aggregator.bucket_width_s} vs {self.window.step_s})"
            )
        if not self.topology:
            raise ConfigError("topology: path is required")
        if self.verbosity not in ("debug", "info", "warning", "error"):
            raise ConfigError(f"verbosity: unknown level {self.verbosity!r}")


_SECTION_TYPES = {
    "miner": MinerConfig,
    "aggregator": AggregatorConfig,
    "signal": SignalConfig,
    "window": WindowConfig,
    "output": OutputConfig,
}


def _build_section(cls, doc: dict, section: str):
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(doc) - names
    if unknown:
        raise ConfigError(f"{section}: unknown keys {sorted(unknown)}")
    kwargs = dict(doc)
    if cls is SignalConfig and isinstance(kwargs.get("bounds"), list):
        kwargs["bounds"] = tuple(kwargs["bounds"])
    if cls is MinerConfig and "masking" in kwargs:
        kwargs["masking"] = [tuple(rule) for rule in kwargs["masking"]]
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ConfigError(f"{section}: {exc}") from exc


def run_config_from_dict(doc: dict) -> RunConfig:
    if not isinstance(doc, dict):
        raise ConfigError("config document must be a mapping")
    known = {"sources", "topology", "signal_overrides", "verbosity", *_SECTION_TYPES}
    unknown = set(doc) - known
    if unknown:
        raise ConfigError(f"unknown top-level keys {sorted(unknown)}")

    sources = [
        _build_section(SourceConfig, entry, f"sources[{i}]")
        for i, entry in enumerate(doc.get("sources", []))
    ]
    overrides = []
    for i, entry in enumerate(doc.get("signal_overrides", [])):
        names = {"device", "template_id", "config"}
        unknown = set(entry) - names
        if unknown:
            raise ConfigError(f"signal_overrides[{i}]: unknown keys {sorted(unknown)}")
        cfg = dict(entry.get("config", {}))
        if isinstance(cfg.get("bounds"), list):
            cfg["bounds"] = tuple(cfg["bounds"])
        overrides.append(
            SignalOverride(entry.get("device"), entry.get("template_id"), cfg)
        )

    config = RunConfig(
        sources=sources,
        topology=str(doc.get("topology", "topology.yaml")),
        signal_overrides=overrides,
        verbosity=str(doc.get("verbosity", "info")),
    )
    for section, cls in _SECTION_TYPES.items():
        if section in doc:
            setattr(config, section, _build_section(cls, doc[section] or {}, section))
    return config


def run_config_to_dict(config: RunConfig) -> dict:
    doc = {
        "sources": [dataclasses.asdict(src) for src in config.sources],
        "topology": config.topology,
        "miner": dataclasses.asdict(config.miner),
        "aggregator": dataclasses.asdict(config.aggregator),
        "signal": dataclasses.asdict(config.signal),
        "window": dataclasses.asdict(config.window),
        "output": dataclasses.asdict(config.output),
        "verbosity": config.verbosity,
    }
    doc["miner"]["masking"] = [list(rule) for rule in config.miner.masking]
    if config.signal.bounds is not None:
        doc["signal"]["bounds"] = list(config.signal.bounds)
    if config.signal_overrides:
        doc["signal_overrides"] = [
            {
                "device": ov.device,
                "template_id": ov.template_id,
                "config": {
                    k: (list(v) if isinstance(v, tuple) else v) for k, v in ov.config.items()
                },
            }
            for ov in config.signal_overrides
        ]
    return doc


def load_run_config(path: str | Path) -> RunConfig:
    try:
        doc = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from exc
    return run_config_from_dict(doc or {})


def render_effective_config(config: RunConfig) -> str:
    return yaml.safe_dump(run_config_to_dict(config), sort_keys=True, default_flow_style=False)


def flag_specs() -> list[tuple[str, str]]:
    """(dotted name, help) pairs for every overridable scalar config field."""
    specs: list[tuple[str, str]] = []
    for name in ("kind", "path", "address", "input_format", "datacenter",
                 "allowed_lateness_s", "replay_speed", "syslog_year"):
        specs.append((f"source.{name}", f"override sources[0].{name}"))
    for section, cls in _SECTION_TYPES.items():
        for f in dataclasses.fields(cls):
            specs.append((f"{section}.{f.name}", f"override {section}.{f.name}"))
    specs.append(("topology", "override the topology document path"))
    specs.append(("verbosity", "override the log level"))
    return specs


def _coerce(raw: str):
    try:
        return json.loads(raw)
    except ValueError:
        return raw


def apply_override(config: RunConfig, dotted: str, raw: str) -> None:
    value = _coerce(raw)
    if dotted == "topology":
        config.topology = str(value)
        return
    if dotted == "verbosity":
        config.verbosity = str(value)
        return
    section, _, name = dotted.partition(".")
    if not name:
        raise ConfigError(f"unknown override {dotted!r}")
    if section == "source":
        if not config.sources:
            config.sources.append(SourceConfig())
        target = config.sources[0]
    elif section in _SECTION_TYPES:
        target = getattr(config, section)
    else:
        raise ConfigError(f"unknown override section {section!r}")
    if name not in {f.name for f in dataclasses.fields(target)}:
        raise ConfigError(f"unknown override field {dotted!r}")
    if name in ("bounds", "masking") and isinstance(value, list):
        value = tuple(value) if name == "bounds" else [tuple(v) for v in value]
    setattr(target, name, value)
