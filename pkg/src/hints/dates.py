"""Calendar durations ("2 months", "7 days") over day-granularity dates."""

from __future__ import annotations

import re
from dataclasses import dataclass
from datetime import date, timedelta

from dateutil.relativedelta import relativedelta

_DURATION_RE = re.compile(r"^\s*(\d+)\s*(d|day|days|w|week|weeks|m|month|months|y|year|years)\s*$")


@dataclass(frozen=True)
class Duration:
    months: int = 0
    days: int = 0

    def __post_init__(self):
        if self.months < 0 or self.days < 0:
            raise ValueError("durations are non-negative")

    @classmethod
    def parse(cls, text: str) -> "Duration":
        total = cls()
        for part in text.split("+"):
            m = _DURATION_RE.match(part)
            if not m:
                raise ValueError(f"bad duration {text!r}")
            n, unit = int(m.group(1)), m.group(2)[0]
            if unit == "d":
                total = cls(total.months, total.days + n)
            elif unit == "w":
                total = cls(total.months, total.days + 7 * n)
            elif unit == "m":
                total = cls(total.months + n, total.days)
            else:
                total = cls(total.months + 12 * n, total.days)
        return total

    def is_zero(self) -> bool:
        return self.months == 0 and self.days == 0

    def after(self, d: date) -> date:
        return d + relativedelta(months=self.months) + timedelta(days=self.days)

    def before(self, d: date) -> date:
        return d - relativedelta(months=self.months) - timedelta(days=self.days)

    def __str__(self):
        parts = []
        if self.months:
            parts.append(f"{self.months} month" + ("s" if self.months != 1 else ""))
        if self.days or not parts:
            parts.append(f"{self.days} day" + ("s" if self.days != 1 else ""))
        return " + ".join(parts)


ONE_DAY = timedelta(days=1)
