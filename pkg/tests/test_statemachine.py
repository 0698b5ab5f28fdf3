import pytest
from hypothesis import given, settings, strategies as st

from cwb.statemachine import (
    AGENT_EVENTS, EmptyLog, ExecutionEvent as E, ExecutionState as S, IllegalTransition,
    allowed_events, apply_event, displayed_status, is_terminal, replay,
)

ALL_STATES = list(S)
ALL_EVENTS = list(E)


# Independent oracle for the first-failure display: a linear scan over the
# log with its own event -> display table.
ORACLE_FAILURE_NAMES = {
    E.FAILED_ON_PREPARING: "FAILED ON PREPARING",
    E.FAILED_ON_RUNNING: "FAILED ON RUNNING",
    E.RUN_TIMEOUT_ELAPSED: "FAILED ON RUNNING",
    E.FAILED_ON_POSTPROCESSING: "FAILED ON POSTPROCESSING",
    E.FAILED_ON_RELEASING: "FAILED ON RELEASING",
}


def oracle_displayed(events):
    for event in events:
        if event in ORACLE_FAILURE_NAMES:
            return ORACLE_FAILURE_NAMES[event]
    state, _ = replay(events)
    return state.value.replace("_", " ")


class TestTransitionTable:
    def test_created_enters_waiting(self):
        assert apply_event(None, E.CREATED) is S.WAITING_FOR_START_PREPARING

    def test_started_preparing(self):
        assert apply_event(S.WAITING_FOR_START_PREPARING, E.STARTED_PREPARING) is S.PREPARING

    @pytest.mark.parametrize("state,event,successor", [
        (S.PREPARING, E.FAILED_ON_PREPARING, S.FAILED_ON_PREPARING),
        (S.PREPARING, E.FINISHED_PREPARING, S.WAITING_FOR_START_RUNNING),
        (S.WAITING_FOR_START_RUNNING, E.STARTED_RUNNING, S.RUNNING),
        (S.WAITING_FOR_START_RUNNING, E.FAILED_ON_RUNNING, S.FAILED_ON_RUNNING),
        (S.RUNNING, E.RUN_TIMEOUT_ELAPSED, S.FAILED_ON_RUNNING),
        (S.RUNNING, E.FAILED_ON_RUNNING, S.FAILED_ON_RUNNING),
        (S.RUNNING, E.FINISHED_RUNNING, S.WAITING_FOR_START_POSTPROCESSING),
        (S.WAITING_FOR_START_POSTPROCESSING, E.STARTED_POSTPROCESSING, S.POSTPROCESSING),
        (S.POSTPROCESSING, E.FINISHED_POSTPROCESSING, S.RELEASING_RESOURCES),
        (S.RELEASING_RESOURCES, E.FINISHED_RELEASING_RESOURCES, S.FINISHED),
        (S.RELEASING_RESOURCES, E.FAILED_ON_RELEASING, S.FAILED_ON_RELEASING),
    ])
    def test_spec_rows(self, state, event, successor):
        assert apply_event(state, event) is successor

    @pytest.mark.parametrize("failed", [
        S.FAILED_ON_PREPARING, S.FAILED_ON_RUNNING, S.FAILED_ON_POSTPROCESSING])
    def test_grace_elapse_releases(self, failed):
        assert apply_event(failed, E.RELEASE_GRACE_ELAPSED, dev_mode=False) is S.RELEASING_RESOURCES

    def test_grace_held_in_dev_mode(self):
        assert apply_event(S.FAILED_ON_PREPARING, E.RELEASE_GRACE_ELAPSED,
                           dev_mode=True) is S.FAILED_ON_PREPARING

    def test_terminal_accepts_nothing(self):
        with pytest.raises(IllegalTransition):
            apply_event(S.FINISHED, E.STARTED_RUNNING)
        for event in ALL_EVENTS:
            for terminal in (S.FINISHED, S.FAILED_ON_RELEASING):
                with pytest.raises(IllegalTransition):
                    apply_event(terminal, event)

    def test_illegal_never_noop(self):
        # every pair outside allowed_events raises, including dev variants
        for state in [None] + ALL_STATES:
            for dev in (False, True):
                legal = allowed_events(state, dev)
                for event in ALL_EVENTS:
                    if event in legal:
                        assert apply_event(state, event, dev) in ALL_STATES
                    else:
                        with pytest.raises(IllegalTransition):
                            apply_event(state, event, dev)

    def test_reprovision_reenters_preparing_only_in_dev(self):
        assert apply_event(S.FAILED_ON_PREPARING, E.STARTED_PREPARING, dev_mode=True) is S.PREPARING
        with pytest.raises(IllegalTransition):
            apply_event(S.FAILED_ON_PREPARING, E.STARTED_PREPARING, dev_mode=False)

    def test_determinism(self):
        for state in [None] + ALL_STATES:
            for dev in (False, True):
                for event in allowed_events(state, dev):
                    assert apply_event(state, event, dev) is apply_event(state, event, dev)


class TestTerminality:
    def test_finished_terminal(self):
        assert is_terminal(S.FINISHED)
        assert is_terminal(S.FAILED_ON_RELEASING)

    def test_failed_states_not_terminal(self):
        assert not is_terminal(S.FAILED_ON_RUNNING)
        assert not is_terminal(S.FAILED_ON_PREPARING)

    def test_allowed_events_running(self):
        assert allowed_events(S.RUNNING, False) == frozenset({
            E.FINISHED_RUNNING, E.FAILED_ON_RUNNING, E.RUN_TIMEOUT_ELAPSED, E.DEV_MODE_ENTERED})

    def test_allowed_events_match_apply(self):
        for state in [None] + ALL_STATES:
            for dev in (False, True):
                derived = set()
                for event in ALL_EVENTS:
                    try:
                        apply_event(state, event, dev)
                        derived.add(event)
                    except IllegalTransition:
                        pass
                assert derived == set(allowed_events(state, dev))


class TestDisplayedStatus:
    def test_first_failure_wins_through_release(self):
        log = [E.CREATED, E.STARTED_PREPARING, E.FAILED_ON_PREPARING,
               E.RELEASE_GRACE_ELAPSED, E.STARTED_RELEASING, E.FINISHED_RELEASING_RESOURCES]
        assert displayed_status(log) == "FAILED ON PREPARING"

    def test_no_failure_shows_finished(self):
        log = [E.CREATED, E.STARTED_PREPARING, E.FINISHED_PREPARING, E.STARTED_RUNNING,
               E.FINISHED_RUNNING, E.STARTED_POSTPROCESSING, E.FINISHED_POSTPROCESSING,
               E.STARTED_RELEASING, E.FINISHED_RELEASING_RESOURCES]
        assert displayed_status(log) == "FINISHED"

    def test_running_failure_beats_release_failure(self):
        log = [E.CREATED, E.STARTED_PREPARING, E.FINISHED_PREPARING, E.STARTED_RUNNING,
               E.FAILED_ON_RUNNING, E.RELEASE_GRACE_ELAPSED, E.STARTED_RELEASING,
               E.FAILED_ON_RELEASING]
        assert displayed_status(log) == oracle_displayed(log) == "FAILED ON RUNNING"

    def test_timeout_displays_as_running_failure(self):
        log = [E.CREATED, E.STARTED_PREPARING, E.FINISHED_PREPARING, E.STARTED_RUNNING,
               E.RUN_TIMEOUT_ELAPSED]
        assert displayed_status(log) == "FAILED ON RUNNING"

    def test_empty_log(self):
        with pytest.raises(EmptyLog):
            displayed_status([])

    def test_current_state_name_spaced(self):
        log = [E.CREATED, E.STARTED_PREPARING]
        assert displayed_status(log) == "PREPARING"
        assert displayed_status([E.CREATED]) == "WAITING FOR START PREPARING"


def legal_logs(max_length=12):
    """Hypothesis strategy: a random legal event sequence from creation."""

    @st.composite
    def build(draw):
        log = [E.CREATED]
        state, dev = S.WAITING_FOR_START_PREPARING, False
        length = draw(st.integers(min_value=1, max_value=max_length))
        while len(log) < length:
            options = sorted(allowed_events(state, dev), key=lambda e: e.value)
            if not options:
                break
            event = draw(st.sampled_from(options))
            state = apply_event(state, event, dev)
            dev = {E.DEV_MODE_ENTERED: True, E.DEV_MODE_EXITED: False}.get(event, dev)
            log.append(event)
        return log

    return build()


@settings(max_examples=300, deadline=None)
@given(legal_logs())
def test_displayed_matches_oracle(log):
    assert displayed_status(log) == oracle_displayed(log)


@settings(max_examples=300, deadline=None)
@given(legal_logs())
def test_first_failure_suffix_stable(log):
    # once a failure marker exists, any legal continuation keeps the display
    seen = displayed_status(log)
    state, dev = replay(log)
    has_failure = any(e in ORACLE_FAILURE_NAMES for e in log)
    for _ in range(8):
        options = sorted(allowed_events(state, dev), key=lambda e: e.value)
        if not options:
            break
        event = options[0]
        state = apply_event(state, event, dev)
        dev = {E.DEV_MODE_ENTERED: True, E.DEV_MODE_EXITED: False}.get(event, dev)
        log = log + [event]
        if has_failure:
            assert displayed_status(log) == seen


def test_agent_events_subset():
    assert AGENT_EVENTS < set(ALL_EVENTS)
    assert E.RELEASE_GRACE_ELAPSED not in AGENT_EVENTS
