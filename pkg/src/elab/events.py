"""Append-only event log: one JSON object per line, gap-free global seq.

Every state change of the service is appended (and fsynced) before the
caller is acknowledged, so replaying the log after a crash reconstructs
everything that was ever acknowledged.
"""

from __future__ import annotations

import json
import os
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Mapping


class CorruptLog(ValueError):
    def __init__(self, message: str, bad_seq: int | None = None, line_no: int | None = None):
        super().__init__(message)
        self.bad_seq = bad_seq
        self.line_no = line_no


@dataclass(frozen=True)
class Event:
    seq: int
    at: float
    stream: str  # RUN | SESSION | DEVICE | ADMIN
    stream_id: str
    kind: str
    actor: str
    payload: Mapping[str, object] = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(
            {
                "seq": self.seq,
                "at": self.at,
                "stream": self.stream,
                "stream_id": self.stream_id,
                "kind": self.kind,
                "actor": self.actor,
                "payload": dict(self.payload),
            },
            sort_keys=True,
            separators=(",", ":"),
        )

    @classmethod
    def from_json(cls, line: str) -> "Event":
        data = json.loads(line)
        return cls(
            seq=data["seq"],
            at=data["at"],
            stream=data["stream"],
            stream_id=data["stream_id"],
            kind=data["kind"],
            actor=data["actor"],
            payload=data.get("payload", {}),
        )


class EventLog:
    """Single serialized appender over <data_dir>/events.log."""

    def __init__(self, path: Path | str):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()
        self._events: list[Event] = []
        if self.path.exists():
            self._events = list(read_log(self.path))
        self._fh = open(self.path, "a", encoding="utf-8")

    @property
    def last_seq(self) -> int:
        with self._lock:
            return self._events[-1].seq if self._events else 0

    def append(
        self,
        stream: str,
        stream_id: str,
        kind: str,
        actor: str,
        payload: Mapping[str, object],
        at: float,
    ) -> Event:
        with self._lock:
            seq = (self._events[-1].seq if self._events else 0) + 1
            event = Event(seq, at, stream, stream_id, kind, actor, dict(payload))
            self._fh.write(event.to_json() + "\n")
            self._fh.flush()
            os.fsync(self._fh.fileno())
            self._events.append(event)
            return event

    def events(self, since: int = 0) -> list[Event]:
        """Events with seq > since."""
        with self._lock:
            if since <= 0:
                return list(self._events)
            # seq is dense: events[k] has seq k+1
            return list(self._events[since:])

    def close(self) -> None:
        with self._lock:
            self._fh.close()


def read_log(path: Path | str) -> Iterator[Event]:
    """Parse and verify a log file; raises CorruptLog on a gap or bad line."""
    expected = 1
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                event = Event.from_json(line)
            except (json.JSONDecodeError, KeyError) as exc:
                raise CorruptLog(
                    f"unparsable event at line {line_no}: {exc}", line_no=line_no
                ) from exc
            if event.seq != expected:
                raise CorruptLog(
                    f"sequence gap at line {line_no}: expected {expected}, got {event.seq}",
                    bad_seq=event.seq,
                    line_no=line_no,
                )
            expected += 1
            yield event
