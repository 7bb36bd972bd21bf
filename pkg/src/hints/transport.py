"""Challenge and notification delivery, plus clocks."""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass
from datetime import date
from pathlib import Path
from typing import Optional, Protocol

from .errors import ClockRegression
from .histname import PrimaryName


@dataclass(frozen=True)
class Message:
    to: PrimaryName
    kind: str  # "challenge" | "severance-notice"
    sent_on: date
    challenge_id: Optional[str] = None
    nonce: Optional[str] = None
    text: str = ""

    def to_json(self) -> str:
        d = asdict(self)
        d["to"] = str(self.to)
        d["sent_on"] = self.sent_on.isoformat()
        return json.dumps(d, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "Message":
        d = json.loads(text)
        d["to"] = PrimaryName.parse(d["to"])
        d["sent_on"] = date.fromisoformat(d["sent_on"])
        return cls(**d)


class Transport(Protocol):
    def send(self, to: PrimaryName, message: Message) -> bool:
        """Hand ``message`` to the mail system; False when undeliverable."""


class Clock(Protocol):
    def today(self) -> date: ...


class SystemClock:
    def today(self) -> date:
        return date.today()


class VirtualClock:
    """Manually advanced day clock; never moves backwards."""

    def __init__(self, today: date):
        self._today = today

    def today(self) -> date:
        return self._today

    def set(self, day: date) -> None:
        if day < self._today:
            raise ClockRegression(f"clock cannot move from {self._today} back to {day}")
        self._today = day


class OutboxTransport:
    """Drops every message into ``<dir>/<address>.jsonl``; stands in for mail."""

    def __init__(self, directory: str | os.PathLike):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)

    def _path(self, to: PrimaryName) -> Path:
        return self.directory / f"{to}.jsonl"

    def send(self, to: PrimaryName, message: Message) -> bool:
        with open(self._path(to), "a") as fh:
            fh.write(message.to_json() + "\n")
        return True

    def inbox(self, to: PrimaryName) -> list[Message]:
        p = self._path(to)
        if not p.exists():
            return []
        return [Message.from_json(line) for line in p.read_text().splitlines() if line]


class MemoryTransport:
    """Delivers to any address and keeps the messages; handy in tests."""

    def __init__(self, unreachable: tuple[str, ...] = ()):
        self.sent: list[Message] = []
        self.unreachable = set(unreachable)

    def send(self, to: PrimaryName, message: Message) -> bool:
        if to.namespace in self.unreachable:
            return False
        self.sent.append(message)
        return True

    def inbox(self, to: PrimaryName) -> list[Message]:
        return [m for m in self.sent if m.to == to]
