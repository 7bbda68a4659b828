"""Message-log recording and replay for offline testing.

File layout: 8-byte file magic, then per record a 2-byte sync marker,
u32 payload length, u64 timestamp_us, payload. Corrupt records are skipped
by scanning to the next sync marker (skips are counted on the stream).
"""

from __future__ import annotations

import struct
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator

FILE_MAGIC = b"VLOG0001"
SYNC = 0xA55A
_RECORD_HEAD = struct.Struct("<HIQ")


class MessageLogWriter:
    def __init__(self, path):
        self._f = open(path, "wb")
        self._f.write(FILE_MAGIC)

    def write(self, timestamp_us: int, payload: bytes) -> None:
        self._f.write(_RECORD_HEAD.pack(SYNC, len(payload), timestamp_us))
        self._f.write(payload)

    def close(self):
        self._f.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


@dataclass
class ReplayStream:
    records: list[tuple[int, bytes]]
    corrupt_skipped: int = 0

    def __iter__(self) -> Iterator[tuple[int, bytes]]:
        return iter(self.records)

    def timed(self, speed: float = 1.0,
              sleep=time.sleep) -> Iterator[tuple[int, bytes]]:
        """Yield records preserving the original inter-message gaps."""
        prev = None
        for ts, payload in self.records:
            if prev is not None and ts > prev:
                sleep((ts - prev) / 1e6 / speed)
            prev = ts
            yield ts, payload


def replay_log(path) -> ReplayStream:
    data = Path(path).read_bytes()
    if data[:8] != FILE_MAGIC:
        raise ValueError("not a message log (bad file magic)")
    records: list[tuple[int, bytes]] = []
    corrupt = 0
    pos = 8
    n = len(data)
    while pos < n:
        if pos + _RECORD_HEAD.size > n:
            corrupt += 1
            break
        sync, length, ts = _RECORD_HEAD.unpack_from(data, pos)
        if sync != SYNC or pos + _RECORD_HEAD.size + length > n:
            # scan forward to the next plausible record boundary
            corrupt += 1
            nxt = data.find(SYNC.to_bytes(2, "little"), pos + 1)
            if nxt < 0:
                break
            pos = nxt
            continue
        pos += _RECORD_HEAD.size
        records.append((ts, data[pos:pos + length]))
        pos += length
    return ReplayStream(records, corrupt)
