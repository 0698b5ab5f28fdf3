from datetime import datetime, timedelta

import pytest
from hypothesis import given, settings, strategies as st

from cwb.scheduler import (
    CronSyntaxError, FieldOutOfRange, Scheduler, UnsatisfiableExpression, next_fire, parse_cron,
)


def oracle_next_fire(cron, after, limit_days=366 * 5 + 2):
    """Brute force: walk forward minute by minute until every field matches."""
    t = after.replace(second=0, microsecond=0) + timedelta(minutes=1)
    end = t + timedelta(days=limit_days)
    step = timedelta(minutes=1)
    while t < end:
        dom_ok = t.day in cron.day_of_month
        dow_ok = ((t.weekday() + 1) % 7) in cron.day_of_week
        day_ok = (dom_ok or dow_ok) if (cron.dom_restricted and cron.dow_restricted) \
            else (dom_ok and dow_ok)
        if (t.minute in cron.minute and t.hour in cron.hour
                and t.month in cron.month and day_ok):
            return t
        t += step
    return None


class TestParse:
    def test_every_five_minutes(self):
        cron = parse_cron("*/5 * * * *")
        assert cron.minute == frozenset(range(0, 60, 5))
        assert not cron.dom_restricted and not cron.dow_restricted

    def test_field_out_of_range(self):
        with pytest.raises(FieldOutOfRange):
            parse_cron("0 61 * * *")  # note: field order is minute hour; 61 lands in hour
        with pytest.raises(FieldOutOfRange):
            parse_cron("* 24 * * *")
        with pytest.raises(FieldOutOfRange):
            parse_cron("* * * * 7")

    def test_expansion_matches_week_enumeration(self):
        # independent check: expand by enumerating one week of minutes
        cron = parse_cron("15 2 * * 1")
        assert cron.minute == frozenset({15})
        assert cron.hour == frozenset({2})
        assert cron.day_of_week == frozenset({1})
        start = datetime(2024, 1, 1)
        hits = []
        t = start
        while t < start + timedelta(days=7):
            if (t.minute in cron.minute and t.hour in cron.hour
                    and ((t.weekday() + 1) % 7) in cron.day_of_week):
                hits.append(t)
            t += timedelta(minutes=1)
        assert hits == [datetime(2024, 1, 1, 2, 15)]  # 2024-01-01 is a Monday

    def test_syntax_errors_carry_position(self):
        with pytest.raises(CronSyntaxError) as err:
            parse_cron("* * * *")
        assert err.value.position >= 0
        with pytest.raises(CronSyntaxError):
            parse_cron("a * * * *")
        with pytest.raises(CronSyntaxError):
            parse_cron("1-2-3 * * * *")
        with pytest.raises(CronSyntaxError):
            parse_cron("*/0 * * * *")

    def test_lists_ranges_steps(self):
        cron = parse_cron("1,5,10-12 0-2/2 * * *")
        assert cron.minute == frozenset({1, 5, 10, 11, 12})
        assert cron.hour == frozenset({0, 2})

    def test_unsatisfiable_feb_30(self):
        with pytest.raises(UnsatisfiableExpression):
            parse_cron("0 0 30 2 *")

    def test_feb_29_satisfiable(self):
        parse_cron("0 0 29 2 *")

    def test_dow_restriction_rescues_impossible_dom(self):
        # with both day fields restricted, classic cron ORs them
        parse_cron("0 0 31 2 1")


class TestNextFire:
    def test_daily_midnight(self):
        cron = parse_cron("0 0 * * *")
        assert next_fire(cron, datetime(2024, 1, 1, 10, 17)) == datetime(2024, 1, 2, 0, 0)

    def test_every_five(self):
        cron = parse_cron("*/5 * * * *")
        fire = next_fire(cron, datetime(2024, 3, 10, 12, 3))
        assert fire == oracle_next_fire(cron, datetime(2024, 3, 10, 12, 3))
        assert fire == datetime(2024, 3, 10, 12, 5)

    def test_feb_has_no_31st(self):
        cron = parse_cron("0 12 31 * *")
        fire = next_fire(cron, datetime(2024, 2, 1, 0, 0))
        assert fire == oracle_next_fire(cron, datetime(2024, 2, 1, 0, 0))
        assert fire == datetime(2024, 3, 31, 12, 0)

    def test_strictly_after(self):
        cron = parse_cron("0 0 * * *")
        assert next_fire(cron, datetime(2024, 1, 2, 0, 0)) == datetime(2024, 1, 3, 0, 0)

    def test_monotone(self):
        cron = parse_cron("13 4 * * 3")
        t0 = datetime(2024, 5, 1)
        f1 = next_fire(cron, t0)
        f2 = next_fire(cron, f1)
        assert t0 < f1 < f2


def cron_expressions():
    minute = st.sampled_from(["*", "0", "15", "*/5", "*/15", "1,31", "10-20"])
    hour = st.sampled_from(["*", "0", "12", "23", "*/6", "8-17"])
    dom = st.sampled_from(["*", "1", "15", "28", "31", "*/10", "1-7"])
    month = st.sampled_from(["*", "1", "2", "6", "12", "*/3"])
    dow = st.sampled_from(["*", "0", "1", "6", "1-5", "*/2"])
    return st.builds(lambda *f: " ".join(f), minute, hour, dom, month, dow)


@settings(max_examples=60, deadline=None)
@given(cron_expressions(),
       st.datetimes(min_value=datetime(2023, 1, 1), max_value=datetime(2026, 12, 31)))
def test_next_fire_matches_oracle(expr, after):
    try:
        cron = parse_cron(expr)
    except UnsatisfiableExpression:
        return
    expected = oracle_next_fire(cron, after)
    assert expected is not None
    assert next_fire(cron, after) == expected


class TestTick:
    def test_due_after_interval(self):
        sched = Scheduler()
        t0 = datetime(2024, 1, 1, 12, 0)
        sched.track("b-1", "*/5 * * * *", t0)
        assert sched.tick(datetime(2024, 1, 1, 12, 4), [("b-1", "*/5 * * * *")]) == []
        assert sched.tick(datetime(2024, 1, 1, 12, 5), [("b-1", "*/5 * * * *")]) == ["b-1"]

    def test_no_schedule_never_fires(self):
        sched = Scheduler()
        for minute in range(60):
            assert sched.tick(datetime(2024, 1, 1, 12, minute), [("b-1", None)]) == []

    def test_at_most_once_per_minute(self):
        sched = Scheduler()
        t0 = datetime(2024, 1, 1, 12, 0)
        sched.track("b-1", "*/5 * * * *", t0)
        now = datetime(2024, 1, 1, 12, 5, 0)
        assert sched.tick(now, [("b-1", "*/5 * * * *")]) == ["b-1"]
        assert sched.tick(now.replace(second=30), [("b-1", "*/5 * * * *")]) == []

    def test_clock_skip_fires_once(self):
        # process down across six matching minutes: exactly one catch-up firing
        sched = Scheduler()
        sched.track("b-1", "*/5 * * * *", datetime(2024, 1, 1, 12, 0))
        assert sched.tick(datetime(2024, 1, 1, 12, 31), [("b-1", "*/5 * * * *")]) == ["b-1"]
        assert sched.tick(datetime(2024, 1, 1, 12, 32), [("b-1", "*/5 * * * *")]) == []
        assert sched.tick(datetime(2024, 1, 1, 12, 35), [("b-1", "*/5 * * * *")]) == ["b-1"]

    def test_twelve_fires_per_hour(self):
        sched = Scheduler()
        t0 = datetime(2024, 1, 1, 12, 0)
        sched.track("b-1", "*/5 * * * *", t0)
        fired = 0
        t = t0
        while t <= t0 + timedelta(hours=1):
            fired += len(sched.tick(t, [("b-1", "*/5 * * * *")]))
            t += timedelta(seconds=30)
        assert fired == 12

    def test_forgets_unlisted_benchmarks(self):
        sched = Scheduler()
        sched.track("b-1", "*/5 * * * *", datetime(2024, 1, 1, 12, 0))
        sched.tick(datetime(2024, 1, 1, 12, 1), [])
        assert sched._armed == {}
