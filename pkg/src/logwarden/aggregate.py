"""Bucketed event counting: one count series per (datacenter, device, template).

Open buckets accumulate counts as records arrive; ``flush`` emits and drops
every bucket that has fully closed under the given watermark. Zero counts are
never emitted here; the detector synthesizes zeros for known signals.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, NamedTuple

from .ingest import LogRecord
from .timeutil import MS_PER_SECOND


class SignalKey(NamedTuple):
    datacenter: str
    device: str
    template_id: int


class CountPoint(NamedTuple):
    key: SignalKey
    bucket_start_ms: int
    count: int


@dataclass
class AggregatorConfig:
    bucket_width_s: int = 60

    def validate(self) -> None:
        if self.bucket_width_s <= 0:
            raise ValueError("aggregator.bucket_width_s: must be > 0")
        # The nominal 5-minute recent scoring window must align to buckets.
        if 300 % self.bucket_width_s != 0:
            raise ValueError("aggregator.bucket_width_s: must divide 300 s")

    @property
    def bucket_width_ms(self) -> int:
        return self.bucket_width_s * MS_PER_SECOND


class CountAggregator:
    """One instance per datacenter pipeline."""

    def __init__(self, config: AggregatorConfig | None = None) -> None:
        self.config = config or AggregatorConfig()
        self.config.validate()
        self._width_ms = self.config.bucket_width_ms
        self._open: dict[int, dict[SignalKey, int]] = {}
        self.added = 0

    def add(self, record: LogRecord, template_id: int) -> None:
        key = SignalKey(record.datacenter, record.device, template_id)
        bucket = (record.event_time_ms // self._width_ms) * self._width_ms
        counts = self._open.setdefault(bucket, {})
        counts[key] = counts.get(key, 0) + 1
        self.added += 1

    def flush(self, watermark_ms: int | None) -> list[CountPoint]:
        """Emit every bucket closed under the watermark, ordered by (bucket, key).

        ``None`` closes everything (end of stream).
        """
        due = sorted(
            b for b in self._open
            if watermark_ms is None or b + self._width_ms <= watermark_ms
        )
        out: list[CountPoint] = []
        for bucket in due:
            counts = self._open.pop(bucket)
            for key in sorted(counts):
                out.append(CountPoint(key, bucket, counts[key]))
        return out

    @property
    def open_buckets(self) -> int:
        return len(self._open)


def group_by_bucket(points: Iterable[CountPoint]) -> list[tuple[int, dict[SignalKey, int]]]:
    """Group an ordered flush result back into per-bucket count maps."""
    grouped: dict[int, dict[SignalKey, int]] = {}
    for point in points:
        grouped.setdefault(point.bucket_start_ms, {})[point.key] = point.count
    return sorted(grouped.items())
