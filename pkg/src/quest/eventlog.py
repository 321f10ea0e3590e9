"""Append-only JSON-lines event log.

One event per line: ``{"kind": ..., "payload": ..., "recorded_at": ..., "seq": ...}``.
Sequence numbers are contiguous from 1, so any gap, reordering, or
half-written trailing line is detectable as corruption, reported with the
byte offset where the bad record starts. Nothing ever rewrites existing
bytes; all state is a fold over the events.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

_REQUIRED_KEYS = frozenset({"seq", "kind", "payload", "recorded_at"})


class LogCorruptError(Exception):
    def __init__(self, offset: int, reason: str):
        super().__init__(f"corrupt event at byte offset {offset}: {reason}")
        self.offset = offset
        self.reason = reason


@dataclass(frozen=True)
class LogEvent:
    seq: int
    kind: str
    payload: dict
    recorded_at: str

    def to_json(self) -> dict:
        return {
            "seq": self.seq,
            "kind": self.kind,
            "payload": self.payload,
            "recorded_at": self.recorded_at,
        }


def _parse_line(raw: bytes, offset: int, expected_seq: int) -> LogEvent:
    try:
        doc = json.loads(raw.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise LogCorruptError(offset, f"not a JSON line ({exc})") from None
    if not isinstance(doc, dict):
        raise LogCorruptError(offset, f"event must be a JSON object, got {type(doc).__name__}")
    missing = _REQUIRED_KEYS - set(doc)
    if missing:
        raise LogCorruptError(offset, f"event lacks keys {sorted(missing)}")
    extra = set(doc) - _REQUIRED_KEYS
    if extra:
        raise LogCorruptError(offset, f"event carries unknown keys {sorted(extra)}")
    seq = doc["seq"]
    if not isinstance(seq, int) or isinstance(seq, bool):
        raise LogCorruptError(offset, f"seq must be an integer, got {seq!r}")
    if seq != expected_seq:
        raise LogCorruptError(offset, f"seq {seq} where {expected_seq} was expected")
    if not isinstance(doc["kind"], str):
        raise LogCorruptError(offset, "kind must be a string")
    if not isinstance(doc["payload"], dict):
        raise LogCorruptError(offset, "payload must be a JSON object")
    if not isinstance(doc["recorded_at"], str):
        raise LogCorruptError(offset, "recorded_at must be a string")
    return LogEvent(seq, doc["kind"], doc["payload"], doc["recorded_at"])


def read_events(path: Path | str) -> list[LogEvent]:
    """Parse and fully validate a log file. Missing file means empty log."""
    path = Path(path)
    if not path.exists():
        return []
    data = path.read_bytes()
    events: list[LogEvent] = []
    offset = 0
    while offset < len(data):
        newline = data.find(b"\n", offset)
        if newline == -1:
            raise LogCorruptError(offset, "truncated record (no trailing newline)")
        events.append(_parse_line(data[offset:newline], offset, len(events) + 1))
        offset = newline + 1
    return events


class EventLog:
    """Writer over one log file; validates any existing content on open."""

    def __init__(self, path: Path | str):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._next_seq = len(read_events(self.path)) + 1

    def append(self, kind: str, payload: dict) -> LogEvent:
        event = LogEvent(
            seq=self._next_seq,
            kind=kind,
            payload=payload,
            recorded_at=datetime.now(timezone.utc).isoformat(),
        )
        line = json.dumps(event.to_json(), separators=(",", ":"), sort_keys=True)
        with open(self.path, "a", encoding="utf-8") as fh:
            fh.write(line + "\n")
            fh.flush()
        self._next_seq += 1
        return event

    def read_all(self) -> list[LogEvent]:
        return read_events(self.path)
