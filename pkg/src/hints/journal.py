"""Append-only mutation journal on top of the hash chain.

One line per entry: ``<seq> <entry-digest hex> <payload hex>``.  The entry
digest links each line to its predecessor, so any altered, dropped or
reordered line is reported as CorruptJournal with its line number.
"""

from __future__ import annotations

import os
from pathlib import Path
from typing import Iterator, Optional

from .encoding import ZERO_DIGEST, digest
from .errors import CorruptJournal
from .integrity import ChainedEntry, HashChain, link_digest


def render_line(entry: ChainedEntry, payload: bytes) -> str:
    return f"{entry.seq} {entry.entry_digest.hex()} {payload.hex()}"


def parse_lines(data: str | bytes) -> Iterator[tuple[ChainedEntry, bytes]]:
    """Parse and check journal text; raw bytes are accepted so bad encodings land on a line."""
    prev = ZERO_DIGEST
    raw_lines = data.encode("utf-8").split(b"\n") if isinstance(data, str) else data.split(b"\n")
    if raw_lines and raw_lines[-1] == b"":
        raw_lines.pop()
    for n, raw in enumerate(raw_lines, 1):
        try:
            line = raw.decode("ascii")
            seq_s, dig_s, pay_s = line.split(" ")
            seq = int(seq_s)
            stored = bytes.fromhex(dig_s)
            payload = bytes.fromhex(pay_s)
        except (UnicodeDecodeError, ValueError):
            raise CorruptJournal(f"journal line {n} is unreadable", line=n) from None
        expected_digest = link_digest(seq, digest(payload), prev)
        entry = ChainedEntry(seq, digest(payload), prev, expected_digest)
        if seq != n - 1 or stored != expected_digest or render_line(entry, payload) != line:
            raise CorruptJournal(f"journal line {n} fails its digest check", line=n)
        prev = expected_digest
        yield entry, payload


class Journal:
    """A HashChain mirrored line by line to a file (or kept in memory)."""

    def __init__(self, path: str | os.PathLike | None = None, sync: bool = True):
        self.path = Path(path) if path is not None else None
        self.sync = sync
        self.chain = HashChain()
        self._lines: list[str] = []
        self._fh = None
        if self.path is not None and self.path.exists():
            for entry, payload in parse_lines(self.path.read_bytes()):
                self.chain.entries.append(entry)
                self.chain.payloads.append(payload)
                self._lines.append(render_line(entry, payload))

    def __len__(self):
        return len(self.chain)

    def payloads(self) -> list[bytes]:
        return list(self.chain.payloads)

    def append(self, payload: bytes) -> ChainedEntry:
        entry = self.chain.append(payload)
        line = render_line(entry, payload)
        self._lines.append(line)
        if self.path is not None:
            if self._fh is None:
                self._fh = open(self.path, "a")
            self._fh.write(line + "\n")
            self._fh.flush()
            if self.sync:
                os.fsync(self._fh.fileno())
        return entry

    def text(self) -> str:
        return "".join(line + "\n" for line in self._lines)

    def flush(self) -> None:
        if self._fh is not None:
            self._fh.flush()
            os.fsync(self._fh.fileno())

    def close(self) -> None:
        if self._fh is not None:
            self.flush()
            self._fh.close()
            self._fh = None


def read_journal(path: str | os.PathLike) -> list[bytes]:
    p = Path(path)
    if not p.exists():
        return []
    return [payload for _, payload in parse_lines(p.read_bytes())]


def open_journal(path: Optional[str | os.PathLike], sync: bool = True) -> Journal:
    return Journal(path, sync=sync)
