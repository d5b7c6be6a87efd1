"""Log line ingestion: replay files or a line socket into a watermarked record stream.

A source parses raw lines into :class:`LogRecord`, tracks an event-time
watermark (max event time seen minus the allowed lateness) and flags records
that arrive behind it. Malformed lines are counted and skipped, never fatal.
Byte-offset checkpoints allow exact resume on file sources.
"""

from __future__ import annotations

import json
import logging
import re
import socket
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterator

from .timeutil import MS_PER_SECOND, format_iso8601_ms, parse_iso8601_ms

logger = logging.getLogger(__name__)

FORMAT_CLASSIC = "classic-syslog"
FORMAT_STRUCTURED = "structured-lines"

KIND_FILE = "file-replay"
KIND_SOCKET = "line-socket"


class MalformedLine(ValueError):
    """A line that cannot be parsed into a LogRecord."""


class SourceError(RuntimeError):
    """I/O or configuration failure that terminates a stream."""


class CheckpointError(RuntimeError):
    """Checkpoint file unusable; caller must start fresh explicitly."""


@dataclass(frozen=True, slots=True)
class LogRecord:
    """One parsed log line: when, which device, and the message body."""

    event_time_ms: int
    device: str
    message: str
    datacenter: str


@dataclass
class SourceConfig:
    kind: str = KIND_FILE
    path: str | None = None
    address: str | None = None  # "host:port" for line-socket
    input_format: str = FORMAT_STRUCTURED
    datacenter: str = "default"
    allowed_lateness_s: int = 60
    replay_speed: str = "as-fast-as-possible"  # or "real-time"
    syslog_year: int | None = None  # classic-syslog lines carry no year

    def validate(self) -> None:
        if self.kind not in (KIND_FILE, KIND_SOCKET):
            raise ValueError(f"source.kind: unknown kind {self.kind!r}")
        if self.kind == KIND_FILE and not self.path:
            raise ValueError("source.path: required for file-replay sources")
        if self.kind == KIND_SOCKET and not self.address:
            raise ValueError("source.address: required for line-socket sources")
        if self.input_format not in (FORMAT_CLASSIC, FORMAT_STRUCTURED):
            raise ValueError(f"source.input_format: unknown format {self.input_format!r}")
        if self.allowed_lateness_s < 0:
            raise ValueError("source.allowed_lateness_s: must be >= 0")
        if self.replay_speed not in ("as-fast-as-possible", "real-time"):
            raise ValueError(f"source.replay_speed: unknown mode {self.replay_speed!r}")


@dataclass
class StreamCounters:
    parsed: int = 0
    malformed: int = 0
    late: int = 0

    @property
    def total(self) -> int:
        return self.parsed + self.malformed + self.late

    def as_dict(self) -> dict:
        return {"parsed": self.parsed, "malformed": self.malformed, "late": self.late}


@dataclass
class Checkpoint:
    """Resumable source position plus the watermark and counters at save time."""

    position: int
    watermark_ms: int | None
    counters: StreamCounters = field(default_factory=StreamCounters)

    def save(self, path: str | Path) -> None:
        doc = {
            "position": self.position,
            "watermark": None if self.watermark_ms is None else format_iso8601_ms(self.watermark_ms),
            "counters": self.counters.as_dict(),
        }
        Path(path).write_text(json.dumps(doc) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "Checkpoint":
        try:
            doc = json.loads(Path(path).read_text(encoding="utf-8"))
            position = doc["position"]
            wm = doc["watermark"]
            counters = StreamCounters(**doc["counters"])
        except (OSError, ValueError, KeyError, TypeError) as exc:
            raise CheckpointError(f"unusable checkpoint {path}: {exc}") from exc
        if not isinstance(position, int) or position < 0:
            raise CheckpointError(f"unusable checkpoint {path}: bad position {position!r}")
        return cls(position, None if wm is None else parse_iso8601_ms(wm), counters)


_MONTHS = {
    "Jan": 1, "Feb": 2, "Mar": 3, "Apr": 4, "May": 5, "Jun": 6,
    "Jul": 7, "Aug": 8, "Sep": 9, "Oct": 10, "Nov": 11, "Dec": 12,
}

# Optional <PRI>, "MMM dd HH:mm:ss", hostname token, message remainder.
_CLASSIC_RE = re.compile(
    r"^(?:<\d{1,3}>)?([A-Z][a-z]{2}) {1,2}(\d{1,2}) (\d{2}):(\d{2}):(\d{2}) (\S+) (.*)$"
)


def parse_line(line: str, input_format: str, datacenter: str, year: int) -> LogRecord:
    """Parse one input line into a LogRecord; raises MalformedLine on failure."""
    if input_format == FORMAT_CLASSIC:
        return _parse_classic(line, datacenter, year)
    if input_format == FORMAT_STRUCTURED:
        return _parse_structured(line, datacenter)
    raise ValueError(f"unknown input format {input_format!r}")


def _parse_classic(line: str, datacenter: str, year: int) -> LogRecord:
    m = _CLASSIC_RE.match(line.rstrip("\r\n"))
    if m is None:
        raise MalformedLine(f"no syslog timestamp/host: {line[:80]!r}")
    mon_name, day, hh, mm, ss, host, message = m.groups()
    mon = _MONTHS.get(mon_name)
    if mon is None:
        raise MalformedLine(f"bad month {mon_name!r}")
    try:
        dt = datetime(year, mon, int(day), int(hh), int(mm), int(ss), tzinfo=timezone.utc)
    except ValueError as exc:
        raise MalformedLine(f"bad timestamp fields: {exc}") from exc
    if not message.strip():
        raise MalformedLine("empty message")
    return LogRecord(
        event_time_ms=round(dt.timestamp() * MS_PER_SECOND),
        device=host,
        message=message,
        datacenter=datacenter,
    )


def _parse_structured(line: str, datacenter: str) -> LogRecord:
    try:
        doc = json.loads(line)
    except ValueError as exc:
        raise MalformedLine(f"not a JSON object: {exc}") from exc
    if not isinstance(doc, dict):
        raise MalformedLine("line is not an object")
    try:
        ts, host, msg = doc["ts"], doc["host"], doc["msg"]
    except KeyError as exc:
        raise MalformedLine(f"missing key {exc}") from exc
    try:
        event_ms = parse_iso8601_ms(str(ts))
    except ValueError as exc:
        raise MalformedLine(f"bad ts {ts!r}: {exc}") from exc
    if not str(host):
        raise MalformedLine("empty host")
    if not str(msg).strip():
        raise MalformedLine("empty msg")
    return LogRecord(event_time_ms=event_ms, device=str(host), message=str(msg), datacenter=datacenter)


class _BaseSource:
    """Shared watermark/counter mechanics for the concrete sources."""

    def __init__(self, config: SourceConfig) -> None:
        config.validate()
        self.config = config
        self.counters = StreamCounters()
        self.watermark_ms: int | None = None
        self._lateness_ms = config.allowed_lateness_s * MS_PER_SECOND

    def _admit(self, record: LogRecord) -> bool:
        """Update watermark state; returns True when the record is late."""
        is_late = self.watermark_ms is not None and record.event_time_ms < self.watermark_ms
        candidate = record.event_time_ms - self._lateness_ms
        if self.watermark_ms is None or candidate > self.watermark_ms:
            self.watermark_ms = candidate
        if is_late:
            self.counters.late += 1
        else:
            self.counters.parsed += 1
        return is_late

    def records(self) -> Iterator[tuple[LogRecord, bool]]:
        raise NotImplementedError

    def checkpoint(self) -> Checkpoint:
        raise NotImplementedError


class FileReplaySource(_BaseSource):
    """Replays a line-delimited log file in order, tracking byte offsets."""

    def __init__(self, config: SourceConfig, resume: Checkpoint | None = None) -> None:
        super().__init__(config)
        self._path = Path(config.path)
        if not self._path.exists():
            raise SourceError(f"input file not found: {self._path}")
        self._position = 0
        if resume is not None:
            if resume.position > self._path.stat().st_size:
                raise CheckpointError(
                    f"checkpoint position {resume.position} beyond end of {self._path}"
                )
            self._position = resume.position
            self.watermark_ms = resume.watermark_ms
            self.counters = StreamCounters(**resume.counters.as_dict())
        self._year = config.syslog_year
        if self._year is None:
            mtime = datetime.fromtimestamp(self._path.stat().st_mtime, tz=timezone.utc)
            self._year = mtime.year

    def records(self) -> Iterator[tuple[LogRecord, bool]]:
        realtime = self.config.replay_speed == "real-time"
        last_event_ms: int | None = None
        try:
            with open(self._path, "rb") as fh:
                fh.seek(self._position)
                for raw in fh:
                    self._position = fh.tell()
                    line = raw.decode("utf-8", errors="replace")
                    if not line.strip():
                        self.counters.malformed += 1
                        continue
                    try:
                        record = parse_line(
                            line, self.config.input_format, self.config.datacenter, self._year
                        )
                    except MalformedLine as exc:
                        self.counters.malformed += 1
                        logger.debug("malformed line skipped: %s", exc)
                        continue
                    if realtime and last_event_ms is not None:
                        delta = (record.event_time_ms - last_event_ms) / MS_PER_SECOND
                        if delta > 0:
                            time.sleep(delta)
                    last_event_ms = record.event_time_ms
                    yield record, self._admit(record)
        except OSError as exc:
            raise SourceError(f"read failure on {self._path}: {exc}") from exc

    def checkpoint(self) -> Checkpoint:
        return Checkpoint(
            position=self._position,
            watermark_ms=self.watermark_ms,
            counters=StreamCounters(**self.counters.as_dict()),
        )


class LineSocketSource(_BaseSource):
    """Accepts one connection on a TCP address and reads newline-delimited logs.

    The checkpoint position is a delivered-line sequence number; resuming skips
    that many lines of a replayed connection.
    """

    def __init__(self, config: SourceConfig, resume: Checkpoint | None = None) -> None:
        super().__init__(config)
        host, _, port = config.address.rpartition(":")
        try:
            self._bind = (host or "127.0.0.1", int(port))
        except ValueError as exc:
            raise SourceError(f"bad address {config.address!r}") from exc
        self._skip = 0
        if resume is not None:
            self._skip = resume.position
            self.watermark_ms = resume.watermark_ms
            self.counters = StreamCounters(**resume.counters.as_dict())
        self._seq = self._skip
        self._year = config.syslog_year or datetime.now(timezone.utc).year
        self._server = socket.create_server(self._bind)
        self.bound_address = self._server.getsockname()

    def records(self) -> Iterator[tuple[LogRecord, bool]]:
        try:
            conn, peer = self._server.accept()
            logger.info("line-socket connection from %s", peer)
            with conn, conn.makefile("rb") as fh:
                skipped = 0
                for raw in fh:
                    if skipped < self._skip:
                        skipped += 1
                        continue
                    self._seq += 1
                    line = raw.decode("utf-8", errors="replace")
                    if not line.strip():
                        self.counters.malformed += 1
                        continue
                    try:
                        record = parse_line(
                            line, self.config.input_format, self.config.datacenter, self._year
                        )
                    except MalformedLine as exc:
                        self.counters.malformed += 1
                        logger.debug("malformed line skipped: %s", exc)
                        continue
                    yield record, self._admit(record)
        except OSError as exc:
            raise SourceError(f"socket failure on {self.config.address}: {exc}") from exc
        finally:
            self._server.close()

    def checkpoint(self) -> Checkpoint:
        return Checkpoint(
            position=self._seq,
            watermark_ms=self.watermark_ms,
            counters=StreamCounters(**self.counters.as_dict()),
        )


def open_source(config: SourceConfig, resume: Checkpoint | None = None) -> _BaseSource:
    if config.kind == KIND_FILE:
        return FileReplaySource(config, resume)
    if config.kind == KIND_SOCKET:
        return LineSocketSource(config, resume)
    raise ValueError(f"unknown source kind {config.kind!r}")
