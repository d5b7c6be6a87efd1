"""Per-signal streaming anomaly scoring over bucketed counts.

Each (datacenter, device, template) signal keeps O(1) state: exponentially
weighted mean/variance of its counts, plus short- and long-memory statistics
over its own past anomaly levels. A point's score is

    score = z * tail * (1 + gain * min(consecutive, cap))

where ``z`` is the direction-clamped z-score of the count, ``tail`` rescales
it by how unusual the recent anomaly level is against the signal's long
background window (twice the normal CDF of the background-normalized recent
level, neutral at 1.0), and the last factor boosts runs of consecutive
anomalous buckets. New signals start with an assumed all-zero history, so the
first nonzero count of a fresh template scores high by construction. Gaps are
filled with synthesized zero counts so statistics decay during silence.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Iterable, NamedTuple

from .aggregate import CountPoint, SignalKey
from .timeutil import MS_PER_DAY, MS_PER_SECOND

DIRECTION_POSITIVE = "positive"
DIRECTION_NEGATIVE = "negative"
DIRECTION_BOTH = "both"

_SQRT1_2 = math.sqrt(0.5)


class AnomalousPoint(NamedTuple):
    """An emitted anomaly: bucket timestamp, score, and the signal it came from."""

    timestamp_ms: int
    score: float
    key: SignalKey


@dataclass
class SignalConfig:
    """Scoring parameters; one set per signal (overridable by pattern)."""

    alpha_short: float = 0.3          # count mean/variance memory
    alpha_recent: float = 0.3         # recent anomaly-level memory (~5 min of buckets)
    alpha_background: float | None = None  # long background memory; None = 24 h of buckets
    sigma_min: float = 1.0            # floor for the z denominator, in counts
    direction: str = DIRECTION_POSITIVE
    bounds: tuple[float, float] | None = None  # counts inside [lo, hi] are never anomalous
    z_emit: float = 3.0
    continuity_gain: float = 0.1
    continuity_cap: int = 10
    warmup_buckets: int = 30          # buckets before the background tail engages

    def validate(self) -> None:
        for name in ("alpha_short", "alpha_recent"):
            a = getattr(self, name)
            if not 0.0 < a <= 1.0:
                raise ValueError(f"signal.{name}: must be in (0, 1]")
        if self.alpha_background is not None and not 0.0 < self.alpha_background <= 1.0:
            raise ValueError("signal.alpha_background: must be in (0, 1]")
        if self.sigma_min <= 0.0:
            raise ValueError("signal.sigma_min: must be > 0")
        if self.direction not in (DIRECTION_POSITIVE, DIRECTION_NEGATIVE, DIRECTION_BOTH):
            raise ValueError(f"signal.direction: unknown direction {self.direction!r}")
        if self.z_emit <= 0.0:
            raise ValueError("signal.z_emit: must be > 0")
        if self.continuity_gain < 0.0:
            raise ValueError("signal.continuity_gain: must be >= 0")
        if self.continuity_cap < 1:
            raise ValueError("signal.continuity_cap: must be >= 1")
        if self.warmup_buckets < 0:
            raise ValueError("signal.warmup_buckets: must be >= 0")
        if self.bounds is not None and self.bounds[0] > self.bounds[1]:
            raise ValueError("signal.bounds: lo must be <= hi")

    def resolved_background_alpha(self, bucket_width_ms: int) -> float:
        if self.alpha_background is not None:
            return self.alpha_background
        buckets_per_day = max(MS_PER_DAY // bucket_width_ms, 1)
        return 2.0 / (buckets_per_day + 1)


@dataclass
class SignalOverride:
    """Config overrides applied to signals matching a device/template rule."""

    device: str | None = None        # literal or trailing-* prefix pattern
    template_id: int | None = None
    config: dict = field(default_factory=dict)

    def matches(self, key: SignalKey) -> bool:
        if self.device is not None:
            if self.device.endswith("*"):
                if not key.device.startswith(self.device[:-1]):
                    return False
            elif key.device != self.device:
                return False
        if self.template_id is not None and key.template_id != self.template_id:
            return False
        return True


class SignalState:
    """Mutable per-signal statistics; owned by exactly one detector."""

    __slots__ = (
        "key", "mean", "var", "bg_mean", "bg_var", "recent",
        "consecutive", "first_seen_ms", "last_bucket_ms", "buckets_seen",
    )

    def __init__(self, key: SignalKey, first_seen_ms: int) -> None:
        self.key = key
        # Zero-history seed: a fresh template behaves as if it had always been 0.
        self.mean = 0.0
        self.var = 0.0
        self.bg_mean = 0.0
        self.bg_var = 0.0
        self.recent = 0.0
        self.consecutive = 0
        self.first_seen_ms = first_seen_ms
        self.last_bucket_ms: int | None = None
        self.buckets_seen = 0


def ewma_update(mean: float, var: float, x: float, alpha: float) -> tuple[float, float]:
    """One exponentially weighted mean/variance step."""
    diff = x - mean
    incr = alpha * diff
    return mean + incr, (1.0 - alpha) * (var + diff * incr)


def raw_zscore(
    x: float,
    mean: float,
    var: float,
    sigma_min: float,
    direction: str = DIRECTION_POSITIVE,
    bounds: tuple[float, float] | None = None,
) -> float:
    """Direction-clamped z-score of a count against the signal's running stats."""
    if bounds is not None and bounds[0] <= x <= bounds[1]:
        return 0.0
    sd = math.sqrt(var)
    z = (x - mean) / (sd if sd > sigma_min else sigma_min)
    if direction == DIRECTION_POSITIVE:
        return z if z > 0.0 else 0.0
    if direction == DIRECTION_NEGATIVE:
        return -z if z < 0.0 else 0.0
    return abs(z)


def tail_context(recent: float, bg_mean: float, bg_var: float, sigma_min: float) -> float:
    """Normal CDF of the recent anomaly level against the background window.

    0.5 when the recent level matches background, toward 1 when far above it.
    The caller doubles this so the neutral case multiplies scores by 1.0.
    """
    floor = sigma_min * 0.1
    sd = math.sqrt(bg_var)
    g = (recent - bg_mean) / (sd if sd > floor else floor)
    return 0.5 * (1.0 + math.erf(g * _SQRT1_2))


def continuity_boost(score: float, consecutive: int, gain: float, cap: int) -> float:
    run = consecutive if consecutive < cap else cap
    return score * (1.0 + gain * run)


class StreamDetector:
    """Scores closed buckets in order, synthesizing zeros for silent signals."""

    def __init__(
        self,
        config: SignalConfig | None = None,
        bucket_width_s: int = 60,
        overrides: list[SignalOverride] | None = None,
    ) -> None:
        self.config = config or SignalConfig()
        self.config.validate()
        self._width_ms = bucket_width_s * MS_PER_SECOND
        self._overrides = overrides or []
        self._base = replace(
            self.config,
            alpha_background=self.config.resolved_background_alpha(self._width_ms),
        )
        self._states: dict[SignalKey, SignalState] = {}
        self._configs: dict[SignalKey, SignalConfig] = {}
        self._pending: dict[int, dict[SignalKey, int]] = {}
        self._frontier_ms: int | None = None
        self.first_bucket_ms: int | None = None
        self.last_bucket_ms: int | None = None
        self.points_processed = 0

    @property
    def bucket_width_ms(self) -> int:
        return self._width_ms

    @property
    def signal_count(self) -> int:
        return len(self._states)

    def config_for(self, key: SignalKey) -> SignalConfig:
        for override in self._overrides:
            if override.matches(key):
                cfg = replace(self._base, **override.config)
                cfg.validate()
                if override.config.get("alpha_background") is None:
                    cfg.alpha_background = self._base.alpha_background
                return cfg
        return self._base

    def score_point(self, state: SignalState, bucket_start_ms: int, count: float) -> AnomalousPoint | None:
        """Score one in-order bucket for one signal and update its state."""
        if state.last_bucket_ms is not None and bucket_start_ms != state.last_bucket_ms + self._width_ms:
            raise ValueError(
                f"out-of-order bucket for {state.key}: got {bucket_start_ms}, "
                f"expected {state.last_bucket_ms + self._width_ms}"
            )
        cfg = self._configs.get(state.key)
        if cfg is None:
            cfg = self._configs.setdefault(state.key, self.config_for(state.key))

        z = raw_zscore(count, state.mean, state.var, cfg.sigma_min, cfg.direction, cfg.bounds)
        state.recent = cfg.alpha_recent * z + (1.0 - cfg.alpha_recent) * state.recent
        if state.buckets_seen >= cfg.warmup_buckets:
            tail = 2.0 * tail_context(state.recent, state.bg_mean, state.bg_var, cfg.sigma_min)
        else:
            tail = 1.0
        state.consecutive = state.consecutive + 1 if z >= cfg.z_emit else 0
        score = continuity_boost(z * tail, state.consecutive, cfg.continuity_gain, cfg.continuity_cap)

        state.mean, state.var = ewma_update(state.mean, state.var, count, cfg.alpha_short)
        state.bg_mean, state.bg_var = ewma_update(state.bg_mean, state.bg_var, z, cfg.alpha_background)
        state.buckets_seen += 1
        state.last_bucket_ms = bucket_start_ms
        self.points_processed += 1

        if score >= cfg.z_emit:
            return AnomalousPoint(bucket_start_ms, score, state.key)
        return None

    def process_bucket(self, bucket_start_ms: int, counts: dict[SignalKey, int]) -> list[AnomalousPoint]:
        """Score one closed bucket: observed counts plus zeros for silent signals."""
        states = self._states
        for key in counts:
            if key not in states:
                states[key] = SignalState(key, bucket_start_ms)
        out: list[AnomalousPoint] = []
        get = counts.get
        for key, state in states.items():
            emitted = self.score_point(state, bucket_start_ms, get(key, 0))
            if emitted is not None:
                out.append(emitted)
        return out

    def advance(
        self, watermark_ms: int | None, flushed: Iterable[CountPoint]
    ) -> list[AnomalousPoint]:
        """Process every bucket closed under the watermark (None = close all)."""
        for point in flushed:
            self._pending.setdefault(point.bucket_start_ms, {})[point.key] = point.count
        if self._frontier_ms is None:
            if not self._pending:
                return []
            self._frontier_ms = min(self._pending)
        if watermark_ms is None:
            last_closed = max(self._pending, default=self._frontier_ms - self._width_ms)
        else:
            last_closed = ((watermark_ms - self._width_ms) // self._width_ms) * self._width_ms
        out: list[AnomalousPoint] = []
        bucket = self._frontier_ms
        if bucket <= last_closed and self.first_bucket_ms is None:
            self.first_bucket_ms = bucket
        while bucket <= last_closed:
            out.extend(self.process_bucket(bucket, self._pending.pop(bucket, {})))
            self.last_bucket_ms = bucket
            bucket += self._width_ms
        self._frontier_ms = bucket
        return out
