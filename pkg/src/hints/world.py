"""Deterministic simulated world: providers, mailboxes, people, a virtual clock.

The world is the historian's transport.  Providers own mailboxes and loan
them to simulated people; a person answers a challenge only while holding
the mailbox and only for names they chose to link.  Revocation is silent,
so the historian learns of it only through an unanswered challenge.
"""

from __future__ import annotations

import heapq
import random
import re
import shlex
from dataclasses import dataclass, field
from datetime import date, timedelta
from importlib import resources
from typing import Optional

from .dates import Duration, ONE_DAY
from .errors import (
    AlreadyHeld,
    ClockRegression,
    CooldownViolation,
    HintsError,
    NotHeld,
    ScriptError,
    UnknownProvider,
)
from .historian import Historian, HistorianConfig
from .histname import PrimaryName, parse_historic_name
from .journal import Journal
from .transport import Message, VirtualClock


@dataclass(frozen=True)
class ProviderPolicy:
    namespace: str
    reassignment_cooldown: Duration = Duration()
    assignment_duration: Optional[Duration] = None  # None = unlimited


@dataclass
class Mailbox:
    address: PrimaryName
    holder: Optional[str] = None
    inbox: list[Message] = field(default_factory=list)
    assigned_on: Optional[date] = None
    released_on: Optional[date] = None


@dataclass
class SimPerson:
    name: str
    account_id: str
    secret: str
    respond_delay: Optional[int] = 1  # days; None never answers
    intends: set = field(default_factory=set)


@dataclass(frozen=True)
class Event:
    on: date
    kind: str
    detail: str

    def __str__(self):
        return f"{self.on} {self.kind} {self.detail}"


class World:
    def __init__(
        self,
        start: date,
        config: HistorianConfig = HistorianConfig(kdf_iterations=1),
        seed: int = 0,
        journal: Journal | None = None,
    ):
        self.clock = VirtualClock(start)
        self.rng = random.Random(seed)
        self.providers: dict[str, ProviderPolicy] = {}
        self.mailboxes: dict[PrimaryName, Mailbox] = {}
        self.people: dict[str, SimPerson] = {}
        self._due: list = []  # heap of (date, order, person, challenge_id, nonce, name)
        self._order = 0
        self._revokes: dict[date, list[PrimaryName]] = {}
        self.tenures: list[list] = []  # [name, person, assigned_on, released_on or None]
        self.historian = Historian(self, config, clock=self.clock, journal=journal, randbytes=self.rng.randbytes)

    def today(self) -> date:
        return self.clock.today()

    # -- transport ----------------------------------------------------------

    def send(self, to: PrimaryName, message: Message) -> bool:
        if to.namespace not in self.providers:
            return False
        box = self.mailbox(to)
        box.inbox.append(message)
        if message.kind == "challenge" and box.holder is not None:
            person = self.people[box.holder]
            if person.respond_delay is not None and to in person.intends:
                due = self.today() + timedelta(days=person.respond_delay)
                heapq.heappush(self._due, (due, self._order, person.name, message.challenge_id, message.nonce, to))
                self._order += 1
        return True

    def mailbox(self, name: PrimaryName) -> Mailbox:
        if name.namespace not in self.providers:
            raise UnknownProvider(name.namespace)
        return self.mailboxes.setdefault(name, Mailbox(name))

    # -- providers ----------------------------------------------------------

    def add_provider(self, policy: ProviderPolicy) -> None:
        self.providers[policy.namespace.lower()] = policy

    def provider_assign(self, namespace: str, local: str, person: str) -> None:
        name = PrimaryName(local, namespace)
        box = self.mailbox(name)
        if person not in self.people:
            raise ScriptError(f"unknown person {person!r}")
        if box.holder is not None:
            raise AlreadyHeld(f"{name} is held by {box.holder}")
        policy = self.providers[name.namespace]
        if box.released_on is not None and policy.reassignment_cooldown.after(box.released_on) > self.today():
            raise CooldownViolation(
                f"{name} cannot be reassigned before {policy.reassignment_cooldown.after(box.released_on)}"
            )
        box.holder = person
        box.assigned_on = self.today()
        self.tenures.append([name, person, self.today(), None])

    def provider_revoke(self, namespace: str, local: str) -> None:
        box = self.mailbox(PrimaryName(local, namespace))
        if box.holder is None:
            raise NotHeld(str(box.address))
        self._release(box)

    def schedule_revoke(self, name: PrimaryName, day: date) -> None:
        """Revoke ``name`` at the start of ``day``, before any challenge responses that day."""
        if day <= self.today():
            raise ClockRegression(f"revocation day {day} is not in the future")
        self._revokes.setdefault(day, []).append(name)

    def _release(self, box: Mailbox) -> None:
        for t in reversed(self.tenures):
            if t[0] == box.address and t[3] is None:
                t[3] = self.today()
                break
        box.holder = None
        box.released_on = self.today()

    # -- people -------------------------------------------------------------

    def add_person(self, name: str, respond_delay: Optional[int] = 1) -> SimPerson:
        secret = self.rng.randbytes(16).hex()
        acct = self.historian.create_account(secret, display_hint=None)
        p = SimPerson(name, acct, secret, respond_delay)
        self.people[name] = p
        return p

    def link(self, person: str, name: PrimaryName) -> str:
        p = self.people[person]
        p.intends.add(name)
        cid = self.historian.request_link(p.account_id, name)
        self._fire_due()
        return cid

    def sever(self, person: str, name: PrimaryName) -> None:
        p = self.people[person]
        p.intends.discard(name)
        self.historian.sever_link(p.account_id, name)

    def confirm(self, person: str, name: PrimaryName, bad: bool = False):
        """Have ``person`` answer the newest challenge in ``name``'s mailbox by hand."""
        box = self.mailbox(name)
        if box.holder != person:
            raise NotHeld(f"{person} does not hold {name}")
        for msg in reversed(box.inbox):
            if msg.kind == "challenge" and msg.challenge_id in self.historian.open_challenges:
                nonce = "00" * 16 if bad else msg.nonce
                return self.historian.confirm_link(msg.challenge_id, nonce)
        raise ScriptError(f"no open challenge in {name}'s mailbox")

    # -- time ---------------------------------------------------------------

    def _fire_due(self) -> list[Event]:
        events = []
        today = self.today()
        while self._due and self._due[0][0] <= today:
            _, _, person, cid, nonce, name = heapq.heappop(self._due)
            if self.mailboxes[name].holder != person or cid not in self.historian.open_challenges:
                continue
            rec = self.historian.confirm_link(cid, nonce)
            events.append(Event(today, "confirmed" if rec else "rejected", f"{name} by {person}"))
        return events

    def _expire_assignments(self) -> list[Event]:
        events = []
        for box in self.mailboxes.values():
            policy = self.providers[box.address.namespace]
            if box.holder and policy.assignment_duration and policy.assignment_duration.after(box.assigned_on) <= self.today():
                events.append(Event(self.today(), "assignment-ended", f"{box.address} from {box.holder}"))
                self._release(box)
        for name in self._revokes.pop(self.today(), []):
            box = self.mailbox(name)
            if box.holder is not None:
                events.append(Event(self.today(), "revoked", f"{name} from {box.holder}"))
                self._release(box)
        return events

    def advance_clock(self, to: date) -> list[Event]:
        if to < self.today():
            raise ClockRegression(f"cannot move from {self.today()} back to {to}")
        events: list[Event] = []
        while self.today() < to:
            self.clock.set(self.today() + ONE_DAY)
            events += self._expire_assignments()
            events += self._fire_due()
            for a in self.historian.reestablish_sweep(self.today()):
                events.append(Event(self.today(), a.kind, f"{a.name} {a.detail}".rstrip()))
            events += self._fire_due()
        return events


# -- scenario scripts -------------------------------------------------------


@dataclass
class ScriptResult:
    world: World
    log: list[str]
    failures: list[str]

    @property
    def ok(self) -> bool:
        return not self.failures


_COMMENT = re.compile(r"(?:^|\s)#(?:\s|$)")


def _parse_delay(text: str) -> Optional[int]:
    if text == "never":
        return None
    d = Duration.parse(text)
    if d.months:
        raise ScriptError(f"respond delay must be in days: {text!r}")
    return d.days


def _options(args: list[str]) -> tuple[list[str], dict[str, str]]:
    pos, opts = [], {}
    for a in args:
        if "=" in a and not a.startswith("="):
            k, v = a.split("=", 1)
            opts[k] = v
        else:
            pos.append(a)
    return pos, opts


def run_script(
    text: str,
    config: HistorianConfig = HistorianConfig(kdf_iterations=1),
    seed: int = 0,
    journal: Journal | None = None,
) -> ScriptResult:
    """Run a scenario script.

    Each line is ``[YYYY-MM-DD] command args``; a leading date advances the
    clock first.  ``#`` followed by a space starts a comment.  ``resolve X => expected`` records a
    failure when the rendered answer differs.
    """
    world: Optional[World] = None
    log: list[str] = []
    failures: list[str] = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = _COMMENT.split(raw, 1)[0].strip()
        if not line:
            continue
        try:
            expected = None
            if "=>" in line:
                line, expected = (s.strip() for s in line.split("=>", 1))
            words = shlex.split(line)
            when = None
            try:
                when = date.fromisoformat(words[0])
                words = words[1:]
            except ValueError:
                pass
            if world is None:
                if when is None:
                    raise ScriptError("the first command needs a date")
                world = World(when, config, seed, journal)
            elif when is not None:
                log += [str(e) for e in world.advance_clock(when)]
            if not words:
                continue
            cmd, args = words[0], words[1:]
            pos, opts = _options(args)
            out = _run_command(world, cmd, pos, opts)
            if out is not None:
                log.append(f"{world.today()} {cmd} {' '.join(args)} -> {out}")
                if expected is not None and out != expected:
                    failures.append(f"line {lineno}: expected {expected!r}, got {out!r}")
        except ScriptError as e:
            raise ScriptError(f"line {lineno}: {e}") from None
        except (HintsError, ValueError, KeyError, IndexError) as e:
            raise ScriptError(f"line {lineno}: {type(e).__name__}: {e}") from None
    if world is None:
        raise ScriptError("empty script")
    return ScriptResult(world, log, failures)


def _run_command(world: World, cmd: str, pos: list[str], opts: dict[str, str]) -> Optional[str]:
    if cmd == "provider":
        (ns,) = pos
        dur = opts.get("duration")
        world.add_provider(
            ProviderPolicy(
                ns.lower(),
                Duration.parse(opts.get("cooldown", "0d")),
                Duration.parse(dur) if dur else None,
            )
        )
    elif cmd == "person":
        (name,) = pos
        world.add_person(name, _parse_delay(opts.get("respond", "1d")))
    elif cmd == "assign":
        addr, person = pos
        n = PrimaryName.parse(addr)
        world.provider_assign(n.namespace, n.local, person)
    elif cmd == "revoke":
        (addr,) = pos
        n = PrimaryName.parse(addr)
        world.provider_revoke(n.namespace, n.local)
    elif cmd == "link":
        person, addr = pos
        world.link(person, PrimaryName.parse(addr))
    elif cmd == "confirm":
        person, addr, *rest = pos
        rec = world.confirm(person, PrimaryName.parse(addr), bad=rest == ["bad"])
        return "confirmed" if rec else "rejected"
    elif cmd == "sever":
        person, addr = pos
        world.sever(person, PrimaryName.parse(addr))
    elif cmd == "resolve":
        (h,) = pos
        return world.historian.resolve(parse_historic_name(h)).render()
    elif cmd == "periods":
        (addr,) = pos
        ps = world.historian.list_association_periods(PrimaryName.parse(addr))
        return "; ".join(f"#{p.holder} {p.start}..{p.end}" for p in ps) or "none"
    elif cmd == "advance":
        (to,) = pos
        try:
            target = date.fromisoformat(to)
        except ValueError:
            target = Duration.parse(to).after(world.today())
        world.advance_clock(target)
    else:
        raise ScriptError(f"unknown command {cmd!r}")
    return None


def builtin_scenario(name: str) -> str:
    return resources.files("hints").joinpath("scenarios", f"{name}.hints").read_text()
