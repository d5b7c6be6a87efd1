"""Streaming log anomaly detection with hierarchical, weighted score aggregation.

Pipeline: ingest log lines, mine templates online, bucket per-signal counts,
score each signal's counts statistically, then correlate anomalies over a
weighted topology tree into system-level scores and alerts. An evaluation
harness matches alerts against incident tickets and a synthetic generator
supports desk-scale experiments.
"""

from .aggregate import AggregatorConfig, CountAggregator, CountPoint, SignalKey
from .config import OutputConfig, RunConfig, load_run_config
from .detector import (
    AnomalousPoint,
    SignalConfig,
    SignalOverride,
    SignalState,
    StreamDetector,
)
from .evaluation import (
    AlertEvent,
    EvalCounts,
    EvalMetrics,
    IncidentTicket,
    match,
    metrics,
    weighted_mean,
)
from .hierarchy import (
    Alert,
    NodeScore,
    PercentileHistory,
    WindowConfig,
    WindowEvaluator,
    effective_weight,
    implicit_weights,
    normalize_rank,
    percentile_rank,
    select_max,
    window_assign,
    wpm,
)
from .ingest import (
    Checkpoint,
    LogRecord,
    MalformedLine,
    SourceConfig,
    open_source,
    parse_line,
)
from .pipeline import PipelineSummary, run_detect
from .synth import SynthConfig, generate
from .templates import LogTemplate, MinerConfig, TemplateMiner
from .topology import Topology, TopologyError, TopologyNode, load_topology

__version__ = "0.1.0"

__all__ = [
    "AggregatorConfig", "CountAggregator", "CountPoint", "SignalKey",
    "OutputConfig", "RunConfig", "load_run_config",
    "AnomalousPoint", "SignalConfig", "SignalOverride", "SignalState", "StreamDetector",
    "AlertEvent", "EvalCounts", "EvalMetrics", "IncidentTicket",
    "match", "metrics", "weighted_mean",
    "Alert", "NodeScore", "PercentileHistory", "WindowConfig", "WindowEvaluator",
    "effective_weight", "implicit_weights", "normalize_rank", "percentile_rank",
    "select_max", "window_assign", "wpm",
    "Checkpoint", "LogRecord", "MalformedLine", "SourceConfig", "open_source", "parse_line",
    "PipelineSummary", "run_detect",
    "SynthConfig", "generate",
    "LogTemplate", "MinerConfig", "TemplateMiner",
    "Topology", "TopologyError", "TopologyNode", "load_topology",
    "__version__",
]
