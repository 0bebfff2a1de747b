"""Crash-safe append-only record log.

One JSON record per line, each followed by a tab and the CRC-32 of the JSON
text (8 hex digits).  Recovery reads the longest valid prefix and truncates
anything after it, so a torn write from a crash never survives into the
reopened log.
"""

from __future__ import annotations

import json
import os
import zlib
from pathlib import Path


def _checksum(payload: str) -> str:
    return f"{zlib.crc32(payload.encode('utf-8')) & 0xFFFFFFFF:08x}"


def encode_record(record: dict) -> str:
    payload = json.dumps(record, sort_keys=True, separators=(",", ":"))
    return f"{payload}\t{_checksum(payload)}\n"


def decode_line(line: str) -> dict | None:
    """Return the record, or None if the line is torn or corrupt."""
    body = line.rstrip("\n")
    payload, sep, checksum = body.rpartition("\t")
    if not sep or _checksum(payload) != checksum:
        return None
    try:
        return json.loads(payload)
    except json.JSONDecodeError:
        return None


def read_records(path) -> list:
    """All records of the valid prefix of the log (empty for a missing file)."""
    path = Path(path)
    if not path.exists():
        return []
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            record = decode_line(line)
            if record is None or not line.endswith("\n"):
                break
            records.append(record)
    return records


class AppendLog:
    """Single-writer append log with recovery on open."""

    def __init__(self, path, fsync: bool = True):
        self.path = Path(path)
        self.fsync = fsync
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self.records = self._recover()
        self._fh = open(self.path, "a", encoding="utf-8")

    def _recover(self) -> list:
        if not self.path.exists():
            return []
        records = []
        good_bytes = 0
        with open(self.path, "rb") as fh:
            for raw in fh:
                try:
                    line = raw.decode("utf-8")
                except UnicodeDecodeError:
                    break
                record = decode_line(line)
                if record is None or not line.endswith("\n"):
                    break
                records.append(record)
                good_bytes += len(raw)
        if good_bytes != self.path.stat().st_size:
            with open(self.path, "r+b") as fh:
                fh.truncate(good_bytes)
        return records

    def append(self, record: dict) -> None:
        self._fh.write(encode_record(record))
        self._fh.flush()
        if self.fsync:
            os.fsync(self._fh.fileno())
        self.records.append(record)

    def close(self) -> None:
        if not self._fh.closed:
            self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
