"""Historic names: primary names qualified with a coarse time designation.

Wire form::

    local@namespace?YYYY
    local@namespace?YYYY-MM
    local@namespace?YYYY-MM-DD

The namespace is case-insensitive and normalized to lowercase; the local
part is kept as given.
"""

from __future__ import annotations

import calendar
import re
from dataclasses import dataclass
from datetime import date, timedelta
from enum import Enum
from typing import Iterator, Optional

from .errors import BadDate, MalformedName

MIN_YEAR = 1970

_LABEL = r"[A-Za-z0-9](?:[A-Za-z0-9-]*[A-Za-z0-9])?"
_NAMESPACE_RE = re.compile(rf"^{_LABEL}(?:\.{_LABEL})*$")
_LOCAL_RE = re.compile(r"^[^@?\s]+$")
_WHEN_RE = re.compile(r"^(\d{4})(?:-(\d{2})(?:-(\d{2}))?)?$")

GRAMMAR_HINT = "expected local@namespace?YYYY[-MM[-DD]], e.g. jmobile@yahoo.com?2000-03"


class Granularity(str, Enum):
    YEAR = "year"
    MONTH = "month"
    DAY = "day"


@dataclass(frozen=True, order=True)
class PrimaryName:
    local: str
    namespace: str

    def __post_init__(self):
        if not self.local or not _LOCAL_RE.match(self.local):
            raise MalformedName(f"bad local part {self.local!r}")
        if not self.namespace or not _NAMESPACE_RE.match(self.namespace):
            raise MalformedName(f"bad namespace {self.namespace!r}")
        if self.namespace != self.namespace.lower():
            object.__setattr__(self, "namespace", self.namespace.lower())

    @classmethod
    def parse(cls, text: str) -> "PrimaryName":
        local, sep, namespace = text.partition("@")
        if not sep or "@" in namespace:
            raise MalformedName(f"{text!r}: {GRAMMAR_HINT}")
        return cls(local, namespace)

    def __str__(self):
        return f"{self.local}@{self.namespace}"


@dataclass(frozen=True)
class DateInterval:
    """Closed interval of calendar days."""

    first: date
    last: date

    def __post_init__(self):
        if self.first > self.last:
            raise ValueError(f"empty interval {self.first}..{self.last}")

    def __contains__(self, day: date) -> bool:
        return self.first <= day <= self.last

    def overlaps(self, other: "DateInterval") -> bool:
        return self.first <= other.last and other.first <= self.last

    def issubset(self, other: "DateInterval") -> bool:
        return other.first <= self.first and self.last <= other.last

    def days(self) -> Iterator[date]:
        d = self.first
        while d <= self.last:
            yield d
            d += timedelta(days=1)

    def __len__(self):
        return (self.last - self.first).days + 1


@dataclass(frozen=True)
class TimeDesignation:
    granularity: Granularity
    year: int
    month: Optional[int] = None
    day: Optional[int] = None

    def __post_init__(self):
        g = Granularity(self.granularity)
        object.__setattr__(self, "granularity", g)
        if not isinstance(self.year, int) or self.year < MIN_YEAR or self.year > 9999:
            raise BadDate(f"year {self.year} out of range")
        if g is Granularity.YEAR:
            if self.month is not None or self.day is not None:
                raise BadDate("year designation carries no month or day")
            return
        if self.month is None or not 1 <= self.month <= 12:
            raise BadDate(f"impossible month {self.month}")
        if g is Granularity.MONTH:
            if self.day is not None:
                raise BadDate("month designation carries no day")
            return
        last = calendar.monthrange(self.year, self.month)[1]
        if self.day is None or not 1 <= self.day <= last:
            raise BadDate(f"impossible day {self.year:04d}-{self.month:02d}-{self.day}")

    @classmethod
    def of_year(cls, year: int) -> "TimeDesignation":
        return cls(Granularity.YEAR, year)

    @classmethod
    def of_month(cls, year: int, month: int) -> "TimeDesignation":
        return cls(Granularity.MONTH, year, month)

    @classmethod
    def of_day(cls, d: date) -> "TimeDesignation":
        return cls(Granularity.DAY, d.year, d.month, d.day)

    @classmethod
    def parse(cls, text: str) -> "TimeDesignation":
        m = _WHEN_RE.match(text)
        if not m:
            raise MalformedName(f"bad time designation {text!r}: {GRAMMAR_HINT}")
        year, month, day = m.groups()
        if day is not None:
            return cls(Granularity.DAY, int(year), int(month), int(day))
        if month is not None:
            return cls(Granularity.MONTH, int(year), int(month))
        return cls(Granularity.YEAR, int(year))

    def interval(self) -> DateInterval:
        return designation_interval(self)

    def __str__(self):
        if self.granularity is Granularity.YEAR:
            return f"{self.year:04d}"
        if self.granularity is Granularity.MONTH:
            return f"{self.year:04d}-{self.month:02d}"
        return f"{self.year:04d}-{self.month:02d}-{self.day:02d}"


@dataclass(frozen=True)
class HistoricName:
    name: PrimaryName
    when: TimeDesignation

    def interval(self) -> DateInterval:
        return designation_interval(self.when)

    def __str__(self):
        return render_historic_name(self)


def designation_interval(d: TimeDesignation) -> DateInterval:
    if d.granularity is Granularity.YEAR:
        return DateInterval(date(d.year, 1, 1), date(d.year, 12, 31))
    if d.granularity is Granularity.MONTH:
        last = calendar.monthrange(d.year, d.month)[1]
        return DateInterval(date(d.year, d.month, 1), date(d.year, d.month, last))
    day = date(d.year, d.month, d.day)
    return DateInterval(day, day)


def parse_historic_name(text: str) -> HistoricName:
    if not isinstance(text, str):
        raise MalformedName("historic name must be text")
    primary, sep, when = text.strip().partition("?")
    if not sep or not when:
        raise MalformedName(f"{text!r} lacks a time designation: {GRAMMAR_HINT}")
    return HistoricName(PrimaryName.parse(primary), TimeDesignation.parse(when))


def render_historic_name(h: HistoricName) -> str:
    return f"{h.name}?{h.when}"


def parse_date(text: str) -> date:
    """Strict ISO ``YYYY-MM-DD``; raises BadDate."""
    try:
        return date.fromisoformat(text)
    except (TypeError, ValueError) as exc:
        raise BadDate(f"bad date {text!r}") from exc
