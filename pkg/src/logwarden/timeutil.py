"""Timestamp helpers. All internal timestamps are UTC epoch milliseconds (int)."""

from __future__ import annotations

from datetime import datetime, timezone

MS_PER_SECOND = 1000
MS_PER_MINUTE = 60 * MS_PER_SECOND
MS_PER_HOUR = 60 * MS_PER_MINUTE
MS_PER_DAY = 24 * MS_PER_HOUR


def parse_iso8601_ms(text: str) -> int:
    """Parse an ISO-8601 timestamp (naive values are taken as UTC) to epoch ms."""
    cleaned = text.strip()
    if cleaned.endswith(("Z", "z")):
        cleaned = cleaned[:-1] + "+00:00"
    dt = datetime.fromisoformat(cleaned)
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return round(dt.timestamp() * MS_PER_SECOND)


def format_iso8601_ms(ts_ms: int) -> str:
    dt = datetime.fromtimestamp(ts_ms / MS_PER_SECOND, tz=timezone.utc)
    return dt.strftime("%Y-%m-%dT%H:%M:%S.") + f"{ts_ms % MS_PER_SECOND:03d}Z"


def bucket_floor(ts_ms: int, width_ms: int) -> int:
    return (ts_ms // width_ms) * width_ms


def ceil_to_grid(ts_ms: int, grid_ms: int) -> int:
    return -((-ts_ms) // grid_ms) * grid_ms
