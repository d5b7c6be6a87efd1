"""Sliding-window hierarchical score aggregation over the topology tree.

Anomalous points are correlated in overlapping windows (size ``d``, step
``s``): within a window each signal is represented by its maximum-score point,
leaf scores are attenuated by the squared geometric mean of their path
weights, and parents combine children with a weighted power mean whose
weights are either the children's own normalized weights or, when no child
declares one, equal implicit weights. Every node's raw score is then ranked
against the recent history of its tree depth and ranks above a threshold are
stretched to a human-friendly [0, 100] scale; a root score past the alert
threshold raises an alert carrying the strongest contributor chain.
"""

from __future__ import annotations

import logging
from bisect import bisect_right, insort
from collections import deque
from dataclasses import dataclass, field

from .aggregate import SignalKey
from .detector import AnomalousPoint
from .timeutil import MS_PER_SECOND, ceil_to_grid
from .topology import Topology

logger = logging.getLogger(__name__)


@dataclass
class WindowConfig:
    window_s: int = 900
    step_s: int = 300
    percentile_threshold: float = 90.0
    wpm_exponent: float = 2.0
    alert_threshold: float = 50.0
    history_capacity: int = 10000

    def validate(self) -> None:
        if self.step_s <= 0 or self.window_s <= 0:
            raise ValueError("window.window_s/step_s: must be > 0")
        if self.step_s > self.window_s:
            raise ValueError("window.step_s: must be <= window_s")
        if self.window_s % self.step_s != 0:
            raise ValueError("window.step_s: must divide window_s")
        if not 0.0 <= self.percentile_threshold < 100.0:
            raise ValueError("window.percentile_threshold: must be in [0, 100)")
        if self.wpm_exponent < 1.0:
            raise ValueError("window.wpm_exponent: must be >= 1")
        if not 0.0 <= self.alert_threshold <= 100.0:
            raise ValueError("window.alert_threshold: must be in [0, 100]")
        if self.history_capacity < 1:
            raise ValueError("window.history_capacity: must be >= 1")

    @property
    def window_ms(self) -> int:
        return self.window_s * MS_PER_SECOND

    @property
    def step_ms(self) -> int:
        return self.step_s * MS_PER_SECOND


@dataclass(slots=True)
class NodeScore:
    node_id: str
    depth: int
    window_end_ms: int
    raw: float
    rank: float
    normalized: float
    contributors: list[tuple[str, float]] = field(default_factory=list)


@dataclass(slots=True)
class Alert:
    window_end_ms: int
    datacenter: str
    normalized_root: float
    contributor_path: list[tuple[str, float]]


def window_assign(ts_ms: int, window_ms: int, step_ms: int) -> list[int]:
    """Ascending start times of every window [k*s, k*s + d) containing ts."""
    if window_ms % step_ms != 0:
        raise ValueError("step must divide window size")
    base = (ts_ms // step_ms) * step_ms
    n = window_ms // step_ms
    return [base - (n - 1 - j) * step_ms for j in range(n)]


def select_max(points: list[AnomalousPoint]) -> list[AnomalousPoint]:
    """One point per signal: highest score, ties to the earliest timestamp."""
    best: dict[SignalKey, AnomalousPoint] = {}
    for p in points:
        cur = best.get(p.key)
        if cur is None or p.score > cur.score or (p.score == cur.score and p.timestamp_ms < cur.timestamp_ms):
            best[p.key] = p
    return list(best.values())


def effective_weight(path_weights: list[float]) -> float:
    """Squared geometric mean of the path weights, normalized into [0, 1]."""
    if not path_weights:
        raise ValueError("need at least one weight")
    prod = 1.0
    for w in path_weights:
        if not 0.0 <= w <= 100.0:
            raise ValueError(f"weight {w} outside [0, 100]")
        prod *= w / 100.0
    return prod ** (2.0 / len(path_weights))


def wpm(children: list[tuple[float, float]], p: float) -> float:
    """Weighted power mean with weights used as given (no sum normalization)."""
    if not children:
        return 0.0
    total = 0.0
    for score, weight in children:
        if score < 0.0:
            raise ValueError("scores must be >= 0")
        if weight <= 0.0:
            raise ValueError("weights must be > 0")
        total += weight * score ** p
    return total ** (1.0 / p)


def implicit_weights(n_children: int) -> float:
    """Equal per-sibling weight, invariant to how many children a parent has."""
    if n_children < 1:
        raise ValueError("need at least one child")
    return 1.0 / n_children


class PercentileHistory:
    """Bounded multiset of historical raw scores for one tree depth."""

    def __init__(self, capacity: int) -> None:
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self._ring: deque[float] = deque()
        self._sorted: list[float] = []

    def __len__(self) -> int:
        return len(self._ring)

    def rank(self, raw: float) -> float:
        n = len(self._sorted)
        if n == 0:
            return 0.0
        return 100.0 * bisect_right(self._sorted, raw) / n

    def add(self, raw: float) -> None:
        if len(self._ring) >= self.capacity:
            oldest = self._ring.popleft()
            idx = bisect_right(self._sorted, oldest) - 1
            del self._sorted[idx]
        self._ring.append(raw)
        insort(self._sorted, raw)

    def values(self) -> list[float]:
        return list(self._ring)


def percentile_rank(raw: float, history: PercentileHistory) -> float:
    """Rank a score against its depth history, then append it."""
    rank = history.rank(raw)
    history.add(raw)
    return rank


def normalize_rank(rank: float, threshold: float) -> float:
    """0 below the threshold; linear stretch of [threshold, 100] onto [0, 100]."""
    if rank < threshold:
        return 0.0
    return 100.0 * (rank - threshold) / (100.0 - threshold)


class WindowEvaluator:
    """Per-datacenter evaluator: single writer for window state and histories."""

    def __init__(
        self,
        topology: Topology,
        config: WindowConfig | None = None,
        datacenter: str = "default",
        collect_scores: bool = True,
    ) -> None:
        self.topology = topology
        self.config = config or WindowConfig()
        self.config.validate()
        self.datacenter = datacenter
        self.collect_scores = collect_scores
        self._window_ms = self.config.window_ms
        self._step_ms = self.config.step_ms
        self._points: deque[tuple[int, str, AnomalousPoint]] = deque()
        self._histories: dict[int, PercentileHistory] = {}
        self._next_eval_ms: int | None = None
        self._last_bucket_start_ms: int | None = None
        self._mixed_weight_warned: set[str] = set()
        self.windows_evaluated = 0
        self.points_filtered = 0
        self.points_ingested = 0

    def observe_bucket(self, bucket_start_ms: int, bucket_width_ms: int) -> None:
        """Anchor the evaluation grid on closed buckets (with or without points)."""
        if self._next_eval_ms is None:
            self._next_eval_ms = ceil_to_grid(bucket_start_ms + bucket_width_ms, self._step_ms)
        if self._last_bucket_start_ms is None or bucket_start_ms > self._last_bucket_start_ms:
            self._last_bucket_start_ms = bucket_start_ms

    def ingest(self, points: list[AnomalousPoint]) -> None:
        for p in points:
            if not self.topology.keep(p):
                self.points_filtered += 1
                continue
            leaf = self.topology.resolve_leaf(p.key)
            self._points.append((p.timestamp_ms, leaf, p))
            self.points_ingested += 1

    def evaluate_due(self, watermark_ms: int) -> tuple[list[NodeScore], list[Alert]]:
        """Evaluate every step boundary T <= watermark, in order."""
        scores: list[NodeScore] = []
        alerts: list[Alert] = []
        while self._next_eval_ms is not None and self._next_eval_ms <= watermark_ms:
            window_scores, alert = self.evaluate_window(self._next_eval_ms)
            scores.extend(window_scores)
            if alert is not None:
                alerts.append(alert)
            self._next_eval_ms += self._step_ms
        return scores, alerts

    def drain(self) -> tuple[list[NodeScore], list[Alert]]:
        """Evaluate the remaining boundaries so every point gets full coverage."""
        if self._next_eval_ms is None or self._last_bucket_start_ms is None:
            return [], []
        t_last = ((self._last_bucket_start_ms + self._window_ms) // self._step_ms) * self._step_ms
        return self.evaluate_due(t_last)

    def _history(self, depth: int) -> PercentileHistory:
        hist = self._histories.get(depth)
        if hist is None:
            hist = self._histories[depth] = PercentileHistory(self.config.history_capacity)
        return hist

    def evaluate_window(self, window_end_ms: int) -> tuple[list[NodeScore], Alert | None]:
        """Score every tree node for the window [end - d, end)."""
        window_start_ms = window_end_ms - self._window_ms
        buf = self._points
        while buf and buf[0][0] < window_start_ms:
            buf.popleft()
        # Max anomaly per signal within the window; later buckets may already
        # be buffered, so stop at the window end rather than draining.
        best: dict[SignalKey, tuple[AnomalousPoint, str]] = {}
        for ts, leaf, p in buf:
            if ts >= window_end_ms:
                break
            cur = best.get(p.key)
            if (
                cur is None
                or p.score > cur[0].score
                or (p.score == cur[0].score and p.timestamp_ms < cur[0].timestamp_ms)
            ):
                best[p.key] = (p, leaf)

        topo = self.topology
        leaf_scores: dict[str, float] = {}
        for p, leaf in best.values():
            leaf_scores[leaf] = p.score * effective_weight(topo.path_weights(leaf))

        exponent = self.config.wpm_exponent
        threshold = self.config.percentile_threshold
        raws: dict[str, float] = {}
        scores: list[NodeScore] = []
        root_score: NodeScore | None = None

        def visit(node_id: str) -> float:
            nonlocal root_score
            kids = topo.children[node_id]
            contributors: list[tuple[str, float]] = []
            if not kids:
                raw = leaf_scores.get(node_id, 0.0)
            else:
                explicit = any(topo.nodes[k].explicit_weight for k in kids)
                if explicit:
                    if (
                        not all(topo.nodes[k].explicit_weight for k in kids)
                        and node_id not in self._mixed_weight_warned
                    ):
                        self._mixed_weight_warned.add(node_id)
                        logger.warning(
                            "node %s mixes explicit and implicit child weights; "
                            "missing weights treated as the default", node_id,
                        )
                    pairs = [(visit(k), topo.nodes[k].weight / 100.0) for k in kids]
                else:
                    w = implicit_weights(len(kids))
                    pairs = [(visit(k), w) for k in kids]
                raw = wpm(pairs, exponent)
                contributors = sorted(
                    ((k, s) for k, (s, _) in zip(kids, pairs) if s > 0.0),
                    key=lambda item: -item[1],
                )[:5]
            raws[node_id] = raw
            rank = percentile_rank(raw, self._history(topo.depth[node_id]))
            normalized = normalize_rank(rank, threshold)
            if self.collect_scores or node_id == topo.root_id:
                record = NodeScore(
                    node_id, topo.depth[node_id], window_end_ms, raw, rank, normalized, contributors
                )
                scores.append(record)
                if node_id == topo.root_id:
                    root_score = record
            return raw

        visit(topo.root_id)
        self.windows_evaluated += 1

        alert = None
        if root_score is not None and root_score.normalized >= self.config.alert_threshold:
            path = []
            node_id = topo.root_id
            while True:
                path.append((node_id, raws[node_id]))
                kids = topo.children[node_id]
                if not kids:
                    break
                best_raw = max(raws[k] for k in kids)
                node_id = next(k for k in kids if raws[k] == best_raw)
            alert = Alert(window_end_ms, self.datacenter, root_score.normalized, path)
        return scores, alert
