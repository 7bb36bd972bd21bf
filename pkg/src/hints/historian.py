"""The trusted name historian.

Keeps association records binding primary names to internal person
accounts, indexed on [name, start] and [person, start].  Links are
established by challenge/response (a nonce mailed to the name), severed on
request, and periodically re-established by ``reestablish_sweep``.

Every state change is a mutation record applied through ``_commit``: it is
appended to the journal first, then applied, so replaying a journal
rebuilds exactly the same state.
"""

from __future__ import annotations

import bisect
import hashlib
import hmac
import secrets
import threading
from dataclasses import dataclass, field, replace
from datetime import date, timedelta
from enum import Enum
from typing import Callable, Iterable, Optional, Union

from .dates import Duration, ONE_DAY
from .encoding import decode, encode, record
from .errors import (
    AuthError,
    StaleChallenge,
    TransportDown,
    UnknownAccount,
    UnknownChallenge,
)
from .histname import HistoricName, PrimaryName
from .journal import Journal
from .transport import Clock, Message, SystemClock, Transport

_REF_DAY = date(2001, 1, 31)


@dataclass(frozen=True)
class HistorianConfig:
    link_ttl: Duration = Duration(months=2)
    challenge_timeout: Duration = Duration(days=7)
    reconfirm_lead: Duration = Duration(days=2)
    loose: bool = False
    kdf_iterations: int = 100_000

    def __post_init__(self):
        for name in ("link_ttl", "challenge_timeout", "reconfirm_lead"):
            if getattr(self, name).is_zero():
                raise ValueError(f"{name} must be positive")
        if self.reconfirm_lead.before(self.link_ttl.after(_REF_DAY)) <= _REF_DAY:
            raise ValueError("reconfirm_lead must be shorter than link_ttl")
        if self.kdf_iterations < 1:
            raise ValueError("kdf_iterations must be positive")


@record(0x50)
@dataclass(frozen=True)
class AssociationRecord:
    rid: int
    name: PrimaryName
    person: str
    start: date
    end: date
    expiration: date
    next_link: date
    next_assign: date

    def __post_init__(self):
        if not self.start <= self.end <= self.expiration:
            raise ValueError(f"record {self.rid} violates start <= end <= expiration")

    def active(self, now: date) -> bool:
        return self.expiration > now


# -- journal mutations ------------------------------------------------------


@record(0x51)
@dataclass(frozen=True)
class AccountCreated:
    account_id: str
    salt: bytes
    secret_digest: bytes
    kdf_iterations: int
    display_hint: Optional[str] = None


@record(0x52)
@dataclass(frozen=True)
class ChallengeIssued:
    challenge_id: str
    account_id: str
    name: PrimaryName
    nonce: bytes
    issued: date
    deadline: date
    origin: str  # "request" | "sweep"


@record(0x53)
@dataclass(frozen=True)
class ChallengeClosed:
    challenge_id: str
    on: date
    outcome: str  # confirmed | rejected | timeout | cancelled


@record(0x54)
@dataclass(frozen=True)
class RecordPut:
    record: AssociationRecord


@record(0x55)
@dataclass(frozen=True)
class RelinkDemanded:
    account_id: str
    name: PrimaryName
    rid: int
    due: date


@record(0x56)
@dataclass(frozen=True)
class SweepDone:
    on: date


Mutation = Union[AccountCreated, ChallengeIssued, ChallengeClosed, RecordPut, RelinkDemanded, SweepDone]


@dataclass
class PersonAccount:
    account_id: str
    salt: bytes = field(repr=False)
    secret_digest: bytes = field(repr=False)
    kdf_iterations: int = 1
    display_hint: Optional[str] = None


# -- results ----------------------------------------------------------------


class Outcome(str, Enum):
    RESOLVED = "resolved"
    MULTIVALENT = "multivalent"
    NO_HISTORY = "no-history"
    NO_CURRENT_NAME = "no-current-name"


@dataclass(frozen=True)
class Holder:
    """One (anonymous) person found behind a historic name."""

    first: date
    last: date
    current: Optional[PrimaryName]


@dataclass(frozen=True)
class ResolutionResult:
    outcome: Outcome
    holders: tuple[Holder, ...] = ()

    @property
    def name(self) -> Optional[PrimaryName]:
        return self.holders[0].current if self.outcome is Outcome.RESOLVED else None

    def to_dict(self) -> dict:
        return {
            "outcome": self.outcome.value,
            "name": str(self.name) if self.name else None,
            "holders": [
                {
                    "person": f"#{i}",
                    "first": h.first.isoformat(),
                    "last": h.last.isoformat(),
                    "current": str(h.current) if h.current else None,
                }
                for i, h in enumerate(self.holders, 1)
            ],
        }

    def render(self) -> str:
        if self.outcome is Outcome.RESOLVED:
            return str(self.name)
        if self.outcome is Outcome.NO_HISTORY:
            return "no-history"
        if self.outcome is Outcome.NO_CURRENT_NAME:
            return "no-current-name"
        parts = [
            f"#{i} {h.first}..{h.last} -> {h.current if h.current else 'no-current-name'}"
            for i, h in enumerate(self.holders, 1)
        ]
        return "multivalent: " + "; ".join(parts)


@dataclass(frozen=True)
class Period:
    start: date
    end: date
    holder: int
    active: bool

    def to_dict(self) -> dict:
        return {
            "start": self.start.isoformat(),
            "end": self.end.isoformat(),
            "person": f"#{self.holder}",
            "active": self.active,
        }


@dataclass(frozen=True)
class Action:
    kind: str  # challenge | relink-demand | archive | timeout | undeliverable
    name: PrimaryName
    detail: str = ""


def matched_holders(spans, first: date, last: date, loose: bool) -> dict:
    """Which persons a historic interval designates, and over which days.

    ``spans`` are (start, end, person) sorted by start.  On each day t the
    candidates are the spans with the greatest start <= t; unless ``loose``,
    a candidate also needs t <= end.  Returns {person: (first_day, last_day)}
    in order of first appearance.
    """
    out: dict = {}
    n = len(spans)
    i = 0
    while i < n:
        s = spans[i][0]
        if s > last:
            break
        j = i
        while j < n and spans[j][0] == s:
            j += 1
        lo = max(s, first)
        hi = last if j == n else min(last, spans[j][0] - ONE_DAY)
        if lo <= hi:
            for k in range(i, j):
                _, e, person = spans[k]
                h = hi if loose else min(hi, e)
                if lo <= h:
                    if person in out:
                        f0, l0 = out[person]
                        out[person] = (min(f0, lo), max(l0, h))
                    else:
                        out[person] = (lo, h)
        i = j
    return out


def build_result(found: dict, current_of: Callable) -> ResolutionResult:
    if not found:
        return ResolutionResult(Outcome.NO_HISTORY)
    holders = tuple(
        sorted(
            (Holder(f, l, current_of(p)) for p, (f, l) in found.items()),
            key=lambda h: (h.first, h.last, str(h.current)),
        )
    )
    if len(holders) > 1:
        return ResolutionResult(Outcome.MULTIVALENT, holders)
    if holders[0].current is None:
        return ResolutionResult(Outcome.NO_CURRENT_NAME, holders)
    return ResolutionResult(Outcome.RESOLVED, holders)


def _far(d: date):
    return (d, 1 << 62)


class Historian:
    def __init__(
        self,
        transport: Transport,
        config: HistorianConfig = HistorianConfig(),
        clock: Clock | None = None,
        journal: Journal | None = None,
        randbytes: Callable[[int], bytes] = secrets.token_bytes,
    ):
        self.transport = transport
        self.config = config
        self.clock = clock or SystemClock()
        self.journal = journal
        self.randbytes = randbytes
        self._lock = threading.RLock()
        self.accounts: dict[str, PersonAccount] = {}
        self.records: dict[int, AssociationRecord] = {}
        self.index_by_name: list[tuple] = []
        self.index_by_person: list[tuple] = []
        self.open_challenges: dict[str, ChallengeIssued] = {}
        self._closed: set[str] = set()
        self._pair_challenges: dict[tuple, list[str]] = {}
        self.demands: dict[tuple, RelinkDemanded] = {}
        self._live: set[int] = set()
        self.last_sweep: Optional[date] = None
        self._next_rid = 0

    # pickling / deepcopy support: locks do not copy
    def __getstate__(self):
        state = self.__dict__.copy()
        del state["_lock"]
        return state

    def __setstate__(self, state):
        self.__dict__.update(state)
        self._lock = threading.RLock()

    @classmethod
    def replay(cls, payloads: Iterable[bytes], transport: Transport, **kwargs) -> "Historian":
        """Rebuild a historian from journal payloads (without re-journaling)."""
        journal = kwargs.pop("journal", None)
        h = cls(transport, **kwargs)
        for raw in payloads:
            h._apply(decode(raw))
        h.journal = journal
        return h

    def today(self) -> date:
        return self.clock.today()

    # -- mutation plumbing --------------------------------------------------

    def _commit(self, m) -> None:
        if self.journal is not None:
            self.journal.append(encode(m))
        self._apply(m)

    def _apply(self, m) -> None:
        if isinstance(m, RecordPut):
            self._apply_put(m.record)
        elif isinstance(m, ChallengeIssued):
            self.open_challenges[m.challenge_id] = m
            self._pair_challenges.setdefault((m.account_id, m.name), []).append(m.challenge_id)
        elif isinstance(m, ChallengeClosed):
            c = self.open_challenges.pop(m.challenge_id)
            self._closed.add(m.challenge_id)
            self._pair_challenges[(c.account_id, c.name)].remove(m.challenge_id)
        elif isinstance(m, AccountCreated):
            self.accounts[m.account_id] = PersonAccount(
                m.account_id, m.salt, m.secret_digest, m.kdf_iterations, m.display_hint
            )
        elif isinstance(m, RelinkDemanded):
            self.demands[(m.account_id, m.name)] = m
        elif isinstance(m, SweepDone):
            for rid in sorted(self._live):
                r = self.records[rid]
                if r.expiration <= m.on:
                    self._live.discard(rid)
                    d = self.demands.get((r.person, r.name))
                    if d is not None and d.rid == rid:
                        del self.demands[(r.person, r.name)]
            self.last_sweep = m.on
        else:
            raise TypeError(f"not a historian mutation: {type(m).__name__}")

    def _apply_put(self, r: AssociationRecord) -> None:
        old = self.records.get(r.rid)
        if old is not None:
            self.index_by_name.remove((str(old.name), old.start, old.rid))
            self.index_by_person.remove((old.person, old.start, old.rid))
        self.records[r.rid] = r
        bisect.insort(self.index_by_name, (str(r.name), r.start, r.rid))
        bisect.insort(self.index_by_person, (r.person, r.start, r.rid))
        self._next_rid = max(self._next_rid, r.rid + 1)
        self.demands.pop((r.person, r.name), None)
        if self.last_sweep is None or r.expiration > self.last_sweep:
            self._live.add(r.rid)
        else:
            self._live.discard(r.rid)

    # -- accounts -----------------------------------------------------------

    def _digest_secret(self, secret, salt: bytes, iterations: int) -> bytes:
        if isinstance(secret, str):
            secret = secret.encode("utf-8")
        return hashlib.pbkdf2_hmac("sha256", secret, salt, iterations)

    def create_account(self, secret, display_hint: Optional[str] = None) -> str:
        if not secret:
            raise ValueError("account secret must be non-empty")
        with self._lock:
            while True:
                account_id = "acct-" + self.randbytes(12).hex()
                if account_id not in self.accounts:
                    break
            salt = self.randbytes(16)
            it = self.config.kdf_iterations
            self._commit(AccountCreated(account_id, salt, self._digest_secret(secret, salt, it), it, display_hint))
            return account_id

    def authenticate(self, account_id: str, secret) -> None:
        acct = self.accounts.get(account_id)
        if acct is None:
            raise AuthError("unknown account or wrong secret")
        if not secret or not hmac.compare_digest(
            self._digest_secret(secret, acct.salt, acct.kdf_iterations), acct.secret_digest
        ):
            raise AuthError("unknown account or wrong secret")

    def _require_account(self, account_id: str) -> None:
        if account_id not in self.accounts:
            raise UnknownAccount(account_id)

    # -- linking ------------------------------------------------------------

    def _issue_challenge(self, account_id: str, name: PrimaryName, origin: str) -> Optional[str]:
        now = self.today()
        cid = "ch-" + self.randbytes(8).hex()
        nonce = self.randbytes(16)
        msg = Message(
            to=name,
            kind="challenge",
            sent_on=now,
            challenge_id=cid,
            nonce=nonce.hex(),
            text=f"Confirm that {name} is assigned to the historian account requesting it "
            f"by answering challenge {cid} with the nonce.",
        )
        if not self.transport.send(name, msg):
            return None
        self._commit(
            ChallengeIssued(cid, account_id, name, nonce, now, self.config.challenge_timeout.after(now), origin)
        )
        return cid

    def request_link(self, account_id: str, name: PrimaryName) -> str:
        with self._lock:
            self._require_account(account_id)
            cid = self._issue_challenge(account_id, name, "request")
            if cid is None:
                raise TransportDown(f"cannot deliver a challenge to {name}")
            return cid

    def latest_record(self, name: PrimaryName, person: str) -> Optional[AssociationRecord]:
        key = str(name)
        lo = bisect.bisect_left(self.index_by_name, (key,))
        hi = bisect.bisect_right(self.index_by_name, (key, date.max, 1 << 62))
        for _, _, rid in reversed(self.index_by_name[lo:hi]):
            r = self.records[rid]
            if r.person == person:
                return r
        return None

    def confirm_link(self, challenge_id: str, response_nonce) -> Optional[AssociationRecord]:
        """Answer a challenge.  Returns the stored record, or None if rejected."""
        if isinstance(response_nonce, str):
            try:
                response_nonce = bytes.fromhex(response_nonce)
            except ValueError:
                response_nonce = b""
        with self._lock:
            now = self.today()
            c = self.open_challenges.get(challenge_id)
            if c is None:
                raise UnknownChallenge(challenge_id)
            if now > c.deadline:
                self._commit(ChallengeClosed(challenge_id, now, "timeout"))
                raise StaleChallenge(f"challenge {challenge_id} timed out on {c.deadline}")
            if not hmac.compare_digest(response_nonce, c.nonce):
                self._commit(ChallengeClosed(challenge_id, now, "rejected"))
                return None
            self._commit(ChallengeClosed(challenge_id, now, "confirmed"))
            return self._link_confirmed(c.account_id, c.name, now)

    def _link_confirmed(self, account_id: str, name: PrimaryName, now: date) -> AssociationRecord:
        expiration = self.config.link_ttl.after(now)
        due = self.config.reconfirm_lead.before(expiration)
        latest = self.latest_record(name, account_id)
        if latest is None or latest.expiration <= now:
            rid = self._next_rid
            r = AssociationRecord(rid, name, account_id, now, now, expiration, due, due)
        else:
            r = replace(latest, end=now, expiration=expiration, next_link=due, next_assign=due)
        self._commit(RecordPut(r))
        return r

    def sever_link(self, account_id: str, name: PrimaryName) -> None:
        with self._lock:
            self._require_account(account_id)
            now = self.today()
            self.transport.send(
                name,
                Message(to=name, kind="severance-notice", sent_on=now, text=f"{name} was unlinked from a historian account."),
            )
            for cid in list(self._pair_challenges.get((account_id, name), [])):
                self._commit(ChallengeClosed(cid, now, "cancelled"))
            latest = self.latest_record(name, account_id)
            if latest is not None and latest.expiration > now:
                self._commit(RecordPut(replace(latest, end=now, expiration=now, next_link=now, next_assign=now)))

    def pending_demands(self, account_id: str) -> list[PrimaryName]:
        with self._lock:
            return sorted((n for (a, n) in self.demands if a == account_id), key=str)

    # -- periodic reestablishment -------------------------------------------

    def reestablish_sweep(self, now: Optional[date] = None) -> list[Action]:
        with self._lock:
            now = now or self.today()
            actions: list[Action] = []
            for cid, c in list(self.open_challenges.items()):
                if now > c.deadline:
                    self._commit(ChallengeClosed(cid, now, "timeout"))
                    actions.append(Action("timeout", c.name, cid))
            for rid in sorted(self._live):
                r = self.records[rid]
                if r.expiration <= now:
                    actions.append(Action("archive", r.name, f"ending {r.end}"))
                    continue
                pair = (r.person, r.name)
                if r.next_assign <= now and not self._pair_challenges.get(pair):
                    cid = self._issue_challenge(r.person, r.name, "sweep")
                    actions.append(Action("challenge" if cid else "undeliverable", r.name, cid or ""))
                if r.next_link <= now and pair not in self.demands:
                    self._commit(RelinkDemanded(r.person, r.name, r.rid, r.next_link))
                    actions.append(Action("relink-demand", r.name))
            if self.last_sweep is None or now > self.last_sweep or any(a.kind == "archive" for a in actions):
                self._commit(SweepDone(now))
            return actions

    # -- queries ------------------------------------------------------------

    def _name_spans(self, name: PrimaryName, upto: date):
        key = str(name)
        lo = bisect.bisect_left(self.index_by_name, (key,))
        hi = bisect.bisect_right(self.index_by_name, (key, upto, 1 << 62))
        return [self.records[rid] for _, _, rid in self.index_by_name[lo:hi]]

    def current_name(self, person: str, now: Optional[date] = None) -> Optional[PrimaryName]:
        now = now or self.today()
        lo = bisect.bisect_left(self.index_by_person, (person,))
        hi = bisect.bisect_right(self.index_by_person, (person, date.max, 1 << 62))
        best = None
        for _, _, rid in self.index_by_person[lo:hi]:
            r = self.records[rid]
            if r.expiration > now:
                if best is None or (r.start, _neg(str(r.name))) > (best.start, _neg(str(best.name))):
                    best = r
        return best.name if best else None

    def resolve(self, h: HistoricName, loose: Optional[bool] = None) -> ResolutionResult:
        loose = self.config.loose if loose is None else loose
        with self._lock:
            iv = h.interval()
            now = self.today()
            spans = [(r.start, r.end, r.person) for r in self._name_spans(h.name, iv.last)]
            found = matched_holders(spans, iv.first, iv.last, loose)
            return build_result(found, lambda p: self.current_name(p, now))

    def list_association_periods(self, name: PrimaryName) -> list[Period]:
        with self._lock:
            now = self.today()
            ordinals: dict[str, int] = {}
            out = []
            for r in self._name_spans(name, date.max):
                n = ordinals.setdefault(r.person, len(ordinals) + 1)
                out.append(Period(r.start, r.end, n, r.active(now)))
            return out

    # -- introspection ------------------------------------------------------

    def snapshot_bytes(self) -> bytes:
        """Canonical bytes of the association database (records only)."""
        with self._lock:
            return b"".join(encode(self.records[rid]) for rid in sorted(self.records))

    def check_indices(self) -> bool:
        by_name = sorted((str(r.name), r.start, r.rid) for r in self.records.values())
        by_person = sorted((r.person, r.start, r.rid) for r in self.records.values())
        return by_name == self.index_by_name and by_person == self.index_by_person


class _neg:
    """Inverts string ordering, so max() picks the lexicographically smallest."""

    __slots__ = ("s",)

    def __init__(self, s):
        self.s = s

    def __lt__(self, other):
        return self.s > other.s

    def __gt__(self, other):
        return self.s < other.s

    def __eq__(self, other):
        return self.s == other.s
