"""Command line entry point: detect, mine, gen, eval and bench subcommands."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import bench as bench_mod
from . import evaluation
from .config import (
    ConfigError,
    RunConfig,
    apply_override,
    flag_specs,
    load_run_config,
    render_effective_config,
)
from .ingest import SourceConfig, open_source
from .pipeline import run_detect
from .synth import SynthConfig, generate
from .templates import TemplateMiner
from .timeutil import format_iso8601_ms

logger = logging.getLogger("logwarden")

_LEVELS = {"debug": logging.DEBUG, "info": logging.INFO,
           "warning": logging.WARNING, "error": logging.ERROR}


def _add_override_flags(parser: argparse.ArgumentParser) -> None:
    for dotted, help_text in flag_specs():
        parser.add_argument(f"--{dotted}", dest=f"ov::{dotted}", metavar="VALUE", help=help_text)


def _collect_overrides(args: argparse.Namespace, config: RunConfig) -> None:
    for key, value in vars(args).items():
        if key.startswith("ov::") and value is not None:
            apply_override(config, key[4:], value)


def cmd_detect(args: argparse.Namespace) -> int:
    if args.config:
        config = load_run_config(args.config)
    else:
        config = RunConfig(sources=[SourceConfig()])
    _collect_overrides(args, config)
    config.validate()
    logging.getLogger().setLevel(_LEVELS[config.verbosity])
    print("effective configuration:")
    print(render_effective_config(config))
    summary = run_detect(config, parallel=args.parallel)
    doc = summary.as_dict()
    totals = doc["totals"]
    print(
        f"records={totals['parsed']} malformed={totals['malformed']} late={totals['late']} "
        f"templates={totals['templates']} signals={totals['signals']} "
        f"anomalies={totals['anomalies']} windows={totals['windows']} alerts={totals['alerts']}"
    )
    if args.summary_json:
        Path(args.summary_json).write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
    return 0


def cmd_mine(args: argparse.Namespace) -> int:
    source = open_source(SourceConfig(
        path=args.input,
        input_format=args.format,
        datacenter=args.datacenter,
        syslog_year=args.syslog_year,
    ))
    miner = TemplateMiner()
    for record, _ in source.records():
        miner.assign(record.message)
    doc = miner.export_templates()
    Path(args.output).write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
    counters = source.counters
    print(
        f"lines={counters.total} parsed={counters.parsed} malformed={counters.malformed} "
        f"templates={len(doc)} -> {args.output}"
    )
    return 0


def cmd_gen(args: argparse.Namespace) -> int:
    cfg = SynthConfig(
        n_devices=args.devices,
        n_templates=args.templates,
        duration_s=args.duration_s,
        baseline_rate=args.rate,
        n_incidents=args.incidents,
        burst_multiplier=args.burst_multiplier,
        burst_duration_s=args.burst_duration_s,
        devices_per_incident=args.devices_per_incident,
        seed=args.seed,
        datacenter=args.datacenter,
    )
    out_dir = Path(args.output_dir)
    result = generate(cfg, out_dir / "logs.jsonl", out_dir / "incidents.jsonl")
    print(
        f"wrote {result.lines_written} log lines and {len(result.incidents)} incident "
        f"tickets under {out_dir}"
    )
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    if args.from_metrics:
        doc = json.loads(Path(args.from_metrics).read_text(encoding="utf-8"))
        results = []
        for entry in doc:
            m = evaluation.EvalMetrics(entry["precision"], entry["recall"], 0.0)
            m.f1 = (
                2.0 * m.precision * m.recall / (m.precision + m.recall)
                if m.precision + m.recall else 0.0
            )
            results.append(evaluation.DatacenterResult(
                entry["dc"], m, evaluation.EvalCounts(), entry["incidents"],
            ))
        wm = evaluation.weighted_mean([(r.metrics, r.incidents) for r in results])
    else:
        alerts = evaluation.load_alerts(args.alerts)
        incidents = evaluation.load_incidents(args.incidents)
        results, wm = evaluation.evaluate_streams(
            alerts, incidents, tolerance_s=args.tolerance_s, split=args.split
        )
    print(evaluation.render_report(results, wm))
    if args.json_out:
        Path(args.json_out).write_text(
            json.dumps(evaluation.report_document(results, wm), indent=2) + "\n",
            encoding="utf-8",
        )
    return 0


def cmd_bench(args: argparse.Namespace) -> int:
    report = bench_mod.run_bench(
        n_devices=args.devices,
        n_templates=args.templates,
        n_buckets=args.buckets,
        seed=args.seed,
    )
    print(bench_mod.render_bench_report(report))
    if args.json_out:
        Path(args.json_out).write_text(json.dumps(report, indent=2) + "\n", encoding="utf-8")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="logwarden",
        description="Streaming log anomaly detection with hierarchical aggregation",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("detect", help="run the full detection pipeline over configured sources")
    p.add_argument("--config", help="YAML run configuration")
    p.add_argument("--parallel", action="store_true", help="process datacenters in parallel")
    p.add_argument("--summary-json", help="write the run summary to this path")
    _add_override_flags(p)
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("mine", help="mine templates from a log file")
    p.add_argument("--input", required=True)
    p.add_argument("--format", default="structured-lines",
                   choices=["structured-lines", "classic-syslog"])
    p.add_argument("--datacenter", default="default")
    p.add_argument("--syslog-year", type=int, default=None)
    p.add_argument("--output", default="templates.json")
    p.set_defaults(func=cmd_mine)

    p = sub.add_parser("gen", help="generate a synthetic log + incident workload")
    p.add_argument("--output-dir", required=True)
    p.add_argument("--devices", type=int, default=50)
    p.add_argument("--templates", type=int, default=20)
    p.add_argument("--duration-s", type=int, default=7 * 86400)
    p.add_argument("--rate", type=float, default=0.2)
    p.add_argument("--incidents", type=int, default=20)
    p.add_argument("--burst-multiplier", type=float, default=10.0)
    p.add_argument("--burst-duration-s", type=int, default=600)
    p.add_argument("--devices-per-incident", type=int, default=3)
    p.add_argument("--datacenter", default="dc-synth")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("eval", help="score an alert stream against incident tickets")
    p.add_argument("--alerts")
    p.add_argument("--incidents")
    p.add_argument("--tolerance-s", type=int, default=evaluation.DEFAULT_TOLERANCE_S)
    p.add_argument("--split", type=float, default=0.0,
                   help="score only the trailing fraction of the period (0.5 = second half)")
    p.add_argument("--from-metrics",
                   help="JSON list of {dc, precision, recall, incidents} instead of streams")
    p.add_argument("--json-out")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bench", help="scaling benchmark: time stages at 1x and 2x volume")
    p.add_argument("--devices", type=int, default=40)
    p.add_argument("--templates", type=int, default=25)
    p.add_argument("--buckets", type=int, default=1000)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--json-out")
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "eval" and not args.from_metrics:
        if not args.alerts or not args.incidents:
            parser.error("eval requires --alerts and --incidents (or --from-metrics)")
    try:
        return args.func(args)
    except (ConfigError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
