"""Classic 5-field cron: parsing, next-fire computation, due-benchmark ticks.

All schedule evaluation happens in UTC (naive datetimes interpreted as
UTC) so daylight-saving ambiguity never exists. Fields are
minute hour day-of-month month day-of-week, each a set expression of
wildcard / value / range / step / list. Day-of-week 0 is Sunday.
When both day fields are restricted a date matches if either does,
per classic cron.
"""

from __future__ import annotations

import calendar
from dataclasses import dataclass
from datetime import datetime, timedelta
from typing import Iterable


class CronError(ValueError):
    pass


class CronSyntaxError(CronError):
    def __init__(self, message: str, position: int):
        self.position = position
        super().__init__(f"{message} (at char {position})")


class FieldOutOfRange(CronError):
    def __init__(self, field_name: str, value: int, lo: int, hi: int, position: int):
        self.position = position
        super().__init__(f"{field_name} value {value} outside {lo}-{hi} (at char {position})")


class UnsatisfiableExpression(CronError):
    pass


_FIELDS = (
    ("minute", 0, 59),
    ("hour", 0, 23),
    ("day_of_month", 1, 31),
    ("month", 1, 12),
    ("day_of_week", 0, 6),
)


@dataclass(frozen=True)
class CronExpression:
    source: str
    minute: frozenset[int]
    hour: frozenset[int]
    day_of_month: frozenset[int]
    month: frozenset[int]
    day_of_week: frozenset[int]
    dom_restricted: bool
    dow_restricted: bool

    def day_matches(self, d: datetime) -> bool:
        if d.month not in self.month:
            return False
        dom_ok = d.day in self.day_of_month
        dow_ok = _cron_dow(d) in self.day_of_week
        if self.dom_restricted and self.dow_restricted:
            return dom_ok or dow_ok
        return dom_ok and dow_ok


def _cron_dow(d: datetime) -> int:
    # python weekday(): Monday=0; cron: Sunday=0
    return (d.weekday() + 1) % 7


def _parse_int(token: str, field_name: str, lo: int, hi: int, pos: int) -> int:
    if not token.isdigit():
        raise CronSyntaxError(f"expected a number in {field_name}, got '{token}'", pos)
    value = int(token)
    if value < lo or value > hi:
        raise FieldOutOfRange(field_name, value, lo, hi, pos)
    return value


def _parse_field(text: str, field_name: str, lo: int, hi: int, pos: int) -> tuple[frozenset[int], bool]:
    """Returns (value set, restricted). A bare wildcard is unrestricted."""
    values: set[int] = set()
    restricted = text != "*"
    for part in text.split(","):
        if not part:
            raise CronSyntaxError(f"empty list item in {field_name}", pos)
        step = 1
        if "/" in part:
            part, _, step_text = part.partition("/")
            if not step_text.isdigit() or int(step_text) < 1:
                raise CronSyntaxError(f"bad step '{step_text}' in {field_name}", pos)
            step = int(step_text)
        if part == "*":
            lo_v, hi_v = lo, hi
        elif "-" in part:
            a, _, b = part.partition("-")
            lo_v = _parse_int(a, field_name, lo, hi, pos)
            hi_v = _parse_int(b, field_name, lo, hi, pos)
            if hi_v < lo_v:
                raise CronSyntaxError(f"descending range '{part}' in {field_name}", pos)
        else:
            lo_v = hi_v = _parse_int(part, field_name, lo, hi, pos)
            if step != 1:
                raise CronSyntaxError(f"step requires a range or wildcard in {field_name}", pos)
        values.update(range(lo_v, hi_v + 1, step))
    return frozenset(values), restricted


def parse_cron(expr: str) -> CronExpression:
    if not isinstance(expr, str):
        raise CronSyntaxError("cron expression must be a string", 0)
    tokens = expr.split()
    if len(tokens) != 5:
        raise CronSyntaxError(f"expected 5 fields, got {len(tokens)}", len(expr.rstrip()))
    positions = []
    cursor = 0
    for token in tokens:
        at = expr.index(token, cursor)
        positions.append(at)
        cursor = at + len(token)

    parsed = []
    for (field_name, lo, hi), token, pos in zip(_FIELDS, tokens, positions):
        parsed.append(_parse_field(token, field_name, lo, hi, pos))

    cron = CronExpression(
        source=expr.strip(),
        minute=parsed[0][0],
        hour=parsed[1][0],
        day_of_month=parsed[2][0],
        month=parsed[3][0],
        day_of_week=parsed[4][0],
        dom_restricted=parsed[2][1],
        dow_restricted=parsed[4][1],
    )
    _check_satisfiable(cron)
    return cron


def _check_satisfiable(cron: CronExpression) -> None:
    # A restricted day-of-week always matches some day in any window; with
    # OR day semantics that alone satisfies the expression.
    if cron.dow_restricted:
        return
    # Longest month length per month, counting leap Februaries.
    for month in cron.month:
        longest = 29 if month == 2 else calendar.monthrange(2024, month)[1]
        if any(day <= longest for day in cron.day_of_month):
            return
    raise UnsatisfiableExpression(
        f"'{cron.source}' never matches (day-of-month/month combination impossible)")


MAX_SEARCH_DAYS = 366 * 5 + 2


def next_fire(cron: CronExpression, after: datetime) -> datetime:
    """Smallest whole-minute instant strictly after `after` matching all fields."""
    start = after.replace(second=0, microsecond=0) + timedelta(minutes=1)
    hours = sorted(cron.hour)
    minutes = sorted(cron.minute)
    day = start.replace(hour=0, minute=0)
    for offset in range(MAX_SEARCH_DAYS):
        if offset:
            day = day + timedelta(days=1)
        if not cron.day_matches(day):
            continue
        for hour in hours:
            for minute in minutes:
                candidate = day.replace(hour=hour, minute=minute)
                if candidate >= start:
                    return candidate
    raise UnsatisfiableExpression(f"no firing for '{cron.source}' within {MAX_SEARCH_DAYS} days")


def next_fire_epoch(cron: CronExpression, after_epoch: float) -> float:
    fire = next_fire(cron, datetime.utcfromtimestamp(after_epoch))
    return float(calendar.timegm(fire.timetuple()))


class Scheduler:
    """Tracks which active benchmarks are due for an automatic trigger.

    tick() must be called at least once per minute. Firing is at most once
    per matching minute, and a clock skip (process down across N matching
    minutes) yields exactly one catch-up firing, never a backlog replay.
    Benchmarks without a schedule are never returned.
    """

    def __init__(self):
        self._armed: dict[str, tuple[str, datetime]] = {}
        self._cache: dict[str, CronExpression] = {}

    def _expr(self, schedule: str) -> CronExpression:
        cron = self._cache.get(schedule)
        if cron is None:
            cron = parse_cron(schedule)
            self._cache[schedule] = cron
        return cron

    def track(self, benchmark_id: str, schedule: str, since: datetime) -> None:
        """Arm a benchmark from a known instant (creation/activation time)."""
        self._armed[benchmark_id] = (schedule, next_fire(self._expr(schedule), since))

    def forget(self, benchmark_id: str) -> None:
        self._armed.pop(benchmark_id, None)

    def tick(self, now: datetime, benchmarks: Iterable[tuple[str, str | None]]) -> list[str]:
        """Returns ids due at `now`, in input order. Updates arming state."""
        due: list[str] = []
        seen: set[str] = set()
        for benchmark_id, schedule in benchmarks:
            if not schedule:
                continue
            seen.add(benchmark_id)
            armed = self._armed.get(benchmark_id)
            if armed is None or armed[0] != schedule:
                # first sighting (or schedule edit): arm strictly after now
                self._armed[benchmark_id] = (schedule, next_fire(self._expr(schedule), now))
                continue
            if armed[1] <= now:
                due.append(benchmark_id)
                self._armed[benchmark_id] = (schedule, next_fire(self._expr(schedule), now))
        for benchmark_id in list(self._armed):
            if benchmark_id not in seen:
                del self._armed[benchmark_id]
        return due
