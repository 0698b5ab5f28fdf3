"""Execution lifecycle: states, events, and the legal-transition table.

Pure functions only. The orchestrator owns when events fire; this module
owns which (state, event) pairs are legal and what they produce. Wire and
persistence names are stable: states serialize upper-snake, events
lower-snake; display strings replace underscores with spaces.
"""

from __future__ import annotations

import enum
from typing import Iterable


class ExecutionState(str, enum.Enum):
    WAITING_FOR_START_PREPARING = "WAITING_FOR_START_PREPARING"
    PREPARING = "PREPARING"
    FAILED_ON_PREPARING = "FAILED_ON_PREPARING"
    WAITING_FOR_START_RUNNING = "WAITING_FOR_START_RUNNING"
    RUNNING = "RUNNING"
    FAILED_ON_RUNNING = "FAILED_ON_RUNNING"
    WAITING_FOR_START_POSTPROCESSING = "WAITING_FOR_START_POSTPROCESSING"
    POSTPROCESSING = "POSTPROCESSING"
    FAILED_ON_POSTPROCESSING = "FAILED_ON_POSTPROCESSING"
    RELEASING_RESOURCES = "RELEASING_RESOURCES"
    FAILED_ON_RELEASING = "FAILED_ON_RELEASING"
    FINISHED = "FINISHED"

    def display(self) -> str:
        return self.value.replace("_", " ")


class ExecutionEvent(str, enum.Enum):
    CREATED = "created"
    STARTED_PREPARING = "started_preparing"
    FAILED_ON_PREPARING = "failed_on_preparing"
    FINISHED_PREPARING = "finished_preparing"
    STARTED_RUNNING = "started_running"
    FAILED_ON_RUNNING = "failed_on_running"
    FINISHED_RUNNING = "finished_running"
    STARTED_POSTPROCESSING = "started_postprocessing"
    FAILED_ON_POSTPROCESSING = "failed_on_postprocessing"
    FINISHED_POSTPROCESSING = "finished_postprocessing"
    STARTED_RELEASING = "started_releasing"
    FAILED_ON_RELEASING = "failed_on_releasing"
    FINISHED_RELEASING_RESOURCES = "finished_releasing_resources"
    RUN_TIMEOUT_ELAPSED = "run_timeout_elapsed"
    RELEASE_GRACE_ELAPSED = "release_grace_elapsed"
    DEV_MODE_ENTERED = "dev_mode_entered"
    DEV_MODE_EXITED = "dev_mode_exited"


S = ExecutionState
E = ExecutionEvent

TERMINAL_STATES = frozenset({S.FINISHED, S.FAILED_ON_RELEASING})

FAILED_HOLD_STATES = frozenset({S.FAILED_ON_PREPARING, S.FAILED_ON_RUNNING, S.FAILED_ON_POSTPROCESSING})

# Events fired by the agent side of the protocol (vs. server/timer side).
AGENT_EVENTS = frozenset({
    E.FAILED_ON_RUNNING, E.FINISHED_RUNNING,
    E.FAILED_ON_POSTPROCESSING, E.FINISHED_POSTPROCESSING,
})

# Failure marker -> state displayed under the first-failure rule. A run
# timeout counts as a running failure: the execution is treated as failed
# on running when its deadline elapses.
FAILURE_DISPLAY = {
    E.FAILED_ON_PREPARING: S.FAILED_ON_PREPARING,
    E.FAILED_ON_RUNNING: S.FAILED_ON_RUNNING,
    E.RUN_TIMEOUT_ELAPSED: S.FAILED_ON_RUNNING,
    E.FAILED_ON_POSTPROCESSING: S.FAILED_ON_POSTPROCESSING,
    E.FAILED_ON_RELEASING: S.FAILED_ON_RELEASING,
}

# Transitions independent of the dev-mode flag. None is the pre-creation
# pseudo-state: only `created` applies to it.
_BASE: dict[tuple[S | None, E], S] = {
    (None, E.CREATED): S.WAITING_FOR_START_PREPARING,
    (S.WAITING_FOR_START_PREPARING, E.STARTED_PREPARING): S.PREPARING,
    (S.PREPARING, E.FAILED_ON_PREPARING): S.FAILED_ON_PREPARING,
    (S.PREPARING, E.FINISHED_PREPARING): S.WAITING_FOR_START_RUNNING,
    (S.WAITING_FOR_START_RUNNING, E.STARTED_RUNNING): S.RUNNING,
    (S.WAITING_FOR_START_RUNNING, E.FAILED_ON_RUNNING): S.FAILED_ON_RUNNING,
    (S.RUNNING, E.FINISHED_RUNNING): S.WAITING_FOR_START_POSTPROCESSING,
    (S.RUNNING, E.FAILED_ON_RUNNING): S.FAILED_ON_RUNNING,
    (S.RUNNING, E.RUN_TIMEOUT_ELAPSED): S.FAILED_ON_RUNNING,
    (S.WAITING_FOR_START_POSTPROCESSING, E.STARTED_POSTPROCESSING): S.POSTPROCESSING,
    (S.WAITING_FOR_START_POSTPROCESSING, E.FAILED_ON_POSTPROCESSING): S.FAILED_ON_POSTPROCESSING,
    (S.POSTPROCESSING, E.FINISHED_POSTPROCESSING): S.RELEASING_RESOURCES,
    (S.POSTPROCESSING, E.FAILED_ON_POSTPROCESSING): S.FAILED_ON_POSTPROCESSING,
    # started_releasing marks the instant actual release work begins:
    # entry event for manual release from a failure hold, self-loop when
    # the release phase was already entered via grace or postprocessing.
    (S.FAILED_ON_PREPARING, E.STARTED_RELEASING): S.RELEASING_RESOURCES,
    (S.FAILED_ON_RUNNING, E.STARTED_RELEASING): S.RELEASING_RESOURCES,
    (S.FAILED_ON_POSTPROCESSING, E.STARTED_RELEASING): S.RELEASING_RESOURCES,
    (S.RELEASING_RESOURCES, E.STARTED_RELEASING): S.RELEASING_RESOURCES,
    (S.RELEASING_RESOURCES, E.FINISHED_RELEASING_RESOURCES): S.FINISHED,
    (S.RELEASING_RESOURCES, E.FAILED_ON_RELEASING): S.FAILED_ON_RELEASING,
}

# Dev-mode toggles: enter is legal while RUNNING (pre-arm before an
# expected failure) or in a failure hold; exit only while the flag is set.
_DEV_TOGGLE_STATES = frozenset({S.RUNNING}) | FAILED_HOLD_STATES


class IllegalTransition(Exception):
    def __init__(self, state: S | None, event: E):
        self.state = state
        self.event = event
        name = state.value if state is not None else "<not created>"
        super().__init__(f"event '{event.value}' is illegal in state {name}")


class EmptyLog(Exception):
    pass


def apply_event(state: S | None, event: E, dev_mode: bool = False) -> S:
    """Successor state for a legal (state, event, dev_mode) triple.

    Raises IllegalTransition for every pair outside the table; illegal
    transitions never silently no-op.
    """
    nxt = _BASE.get((state, event))
    if nxt is not None:
        return nxt
    if state in FAILED_HOLD_STATES:
        if event is E.RELEASE_GRACE_ELAPSED:
            # dev mode holds the execution in its failure state
            return state if dev_mode else S.RELEASING_RESOURCES
        if event is E.STARTED_PREPARING and dev_mode:
            # reprovision loop re-enters PREPARING while debugging
            return S.PREPARING
    if state in _DEV_TOGGLE_STATES:
        if event is E.DEV_MODE_ENTERED and not dev_mode:
            return state
        if event is E.DEV_MODE_EXITED and dev_mode:
            return state
    raise IllegalTransition(state, event)


def is_terminal(state: S) -> bool:
    return state in TERMINAL_STATES


def allowed_events(state: S | None, dev_mode: bool = False) -> frozenset[E]:
    """Exactly the events apply_event accepts from this configuration."""
    allowed = {event for (src, event) in _BASE if src == state}
    if state in FAILED_HOLD_STATES:
        allowed.add(E.RELEASE_GRACE_ELAPSED)
        if dev_mode:
            allowed.add(E.STARTED_PREPARING)
    if state in _DEV_TOGGLE_STATES:
        allowed.add(E.DEV_MODE_EXITED if dev_mode else E.DEV_MODE_ENTERED)
    return frozenset(allowed)


def replay(events: Iterable[E]) -> tuple[S, bool]:
    """Fold a whole event log; returns (final state, dev_mode flag)."""
    state: S | None = None
    dev = False
    seen_any = False
    for event in events:
        seen_any = True
        state = apply_event(state, event, dev)
        if event is E.DEV_MODE_ENTERED:
            dev = True
        elif event is E.DEV_MODE_EXITED:
            dev = False
    if not seen_any or state is None:
        raise EmptyLog("event log is empty")
    return state, dev


def displayed_status(events: Iterable[E]) -> str:
    """Status string for the experimenter.

    The first failure wins: once any failure marker appears in the log the
    display sticks to that failure's state name no matter how far the
    cleanup progressed afterwards. Without failures this is the current
    state's name. Names are spaced, e.g. "FAILED ON PREPARING".
    """
    events = list(events)
    if not events:
        raise EmptyLog("event log is empty")
    if events[0] is not E.CREATED:
        raise ValueError("event log must begin with 'created'")
    for event in events:
        failure = FAILURE_DISPLAY.get(event)
        if failure is not None:
            return failure.display()
    state, _ = replay(events)
    return state.display()
