"""Crash-safe append-only response log.

One JSON object per line, each carrying a checksum over its canonical
form. Appends are serialized through a lock and fsynced before the call
returns; committed lines are never rewritten. Reads tolerate torn or
corrupted lines (a crash mid-append leaves at most one), skipping them
with a report instead of failing the replay.
"""

from __future__ import annotations

import hashlib
import json
import os
import threading
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterator, Mapping

LOG_SCHEMA_VERSION = 1

_RECORD_KEYS = {"schema", "seq", "participant", "scenario", "page", "payload", "ts", "sha256"}


@dataclass(frozen=True)
class LogRecord:
    seq: int
    participant: str
    scenario: str
    page: int
    payload: Mapping[str, object]
    ts: str


@dataclass(frozen=True)
class LogReadReport:
    records_read: int
    skipped: tuple[tuple[int, str], ...]  # (line number, reason)


def _canonical(body: Mapping[str, object]) -> str:
    return json.dumps(body, sort_keys=True, separators=(",", ":"))


def _checksum(body: Mapping[str, object]) -> str:
    return hashlib.sha256(_canonical(body).encode("utf-8")).hexdigest()


class ResponseLog:
    """Single-writer append-only log of survey submissions."""

    def __init__(self, path: str | Path):
        self._path = Path(path)
        self._lock = threading.Lock()
        records, _ = self.read_all()
        self._next_seq = max((r.seq for r in records), default=0) + 1

    @property
    def path(self) -> Path:
        return self._path

    def append(
        self, participant: str, scenario: str, page: int, payload: Mapping[str, object]
    ) -> LogRecord:
        """Durably append one record; returns it with its assigned sequence."""
        with self._lock:
            record = LogRecord(
                seq=self._next_seq,
                participant=participant,
                scenario=scenario,
                page=page,
                payload=dict(payload),
                ts=datetime.now(timezone.utc).isoformat(),
            )
            body = {
                "schema": LOG_SCHEMA_VERSION,
                "seq": record.seq,
                "participant": record.participant,
                "scenario": record.scenario,
                "page": record.page,
                "payload": record.payload,
                "ts": record.ts,
            }
            line = _canonical({**body, "sha256": _checksum(body)})
            self._path.parent.mkdir(parents=True, exist_ok=True)
            with open(self._path, "a", encoding="utf-8") as fh:
                fh.write(line + "\n")
                fh.flush()
                os.fsync(fh.fileno())
            self._next_seq += 1
            return record

    def read_all(self) -> tuple[tuple[LogRecord, ...], LogReadReport]:
        """Replay the log from disk, skipping corrupt lines with a report."""
        records: list[LogRecord] = []
        skipped: list[tuple[int, str]] = []
        if not self._path.exists():
            return (), LogReadReport(0, ())
        with open(self._path, encoding="utf-8") as fh:
            for line_no, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    doc = json.loads(line)
                except json.JSONDecodeError:
                    skipped.append((line_no, "malformed JSON"))
                    continue
                if not isinstance(doc, dict) or set(doc) != _RECORD_KEYS:
                    skipped.append((line_no, "unexpected record shape"))
                    continue
                claimed = doc.pop("sha256")
                if _checksum(doc) != claimed:
                    skipped.append((line_no, "checksum mismatch"))
                    continue
                if doc["schema"] != LOG_SCHEMA_VERSION:
                    skipped.append((line_no, f"unsupported schema {doc['schema']!r}"))
                    continue
                records.append(
                    LogRecord(
                        seq=int(doc["seq"]),
                        participant=str(doc["participant"]),
                        scenario=str(doc["scenario"]),
                        page=int(doc["page"]),
                        payload=doc["payload"],
                        ts=str(doc["ts"]),
                    )
                )
        return tuple(records), LogReadReport(len(records), tuple(skipped))

    def __iter__(self) -> Iterator[LogRecord]:
        records, _ = self.read_all()
        return iter(records)
