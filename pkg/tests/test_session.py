"""Session ledger and state machine tests."""

import threading

import pytest

from asyncnarrate.session import (
    Origin,
    PipelineState,
    SessionContext,
    StateError,
    TaskInfo,
    Trigger,
    resolve_transition,
)

L, P, S = PipelineState.LISTENING, PipelineState.PROCESSING, PipelineState.SPEAKING

# Hand-built expectation for every (state, trigger) pair; None = illegal.
TABLE = {
    (L, Trigger.TASK_STARTED): P,
    (L, Trigger.FIRST_AUDIO_QUEUED): None,
    (L, Trigger.PLAYBACK_DRAINED): None,
    (L, Trigger.STOP_SIGNAL): None,
    (L, Trigger.COMPLETE_SIGNAL): None,
    (P, Trigger.TASK_STARTED): None,
    (P, Trigger.FIRST_AUDIO_QUEUED): S,
    (P, Trigger.PLAYBACK_DRAINED): None,
    (P, Trigger.STOP_SIGNAL): L,
    (P, Trigger.COMPLETE_SIGNAL): L,
    (S, Trigger.TASK_STARTED): None,
    (S, Trigger.FIRST_AUDIO_QUEUED): None,
    (S, Trigger.PLAYBACK_DRAINED): "task_dependent",
    (S, Trigger.STOP_SIGNAL): L,
    (S, Trigger.COMPLETE_SIGNAL): None,
}


# -- ledger -----------------------------------------------------------------


def test_append_preserves_arrival_order():
    ctx = SessionContext()
    ctx.append_event(Origin.BACKEND, "thinking", "step one")
    ctx.append_event(Origin.USER, "interrupt", "")
    kinds = [e.kind for e in ctx.events]
    assert kinds == ["thinking", "interrupt"]
    assert ctx.events[0].at <= ctx.events[1].at


def test_equal_timestamps_keep_append_order():
    ctx = SessionContext()
    a = ctx.append_event(Origin.BACKEND, "thinking", "a")
    b = ctx.append_event(Origin.BACKEND, "thinking", "b")
    # Monotonic stamps may coincide at clock resolution; order must hold.
    assert ctx.events.index(a) < ctx.events.index(b)


def test_concurrent_appends_stay_chronologically_sorted():
    ctx = SessionContext()

    def produce(origin):
        for i in range(3333):
            ctx.append_event(origin, "thinking", f"{origin.value}-{i}")

    threads = [
        threading.Thread(target=produce, args=(origin,))
        for origin in (Origin.BACKEND, Origin.EXPLAINER, Origin.USER)
    ]
    for t in threads:
        t.start()
    for t in threads:
        t.join()

    assert len(ctx.events) == 9999
    stamps = [e.at for e in ctx.events]
    assert stamps == sorted(stamps)  # independent sort of the same multiset


def test_subscribers_notified_in_append_order():
    ctx = SessionContext()
    seen = []
    ctx.on_event(lambda e: seen.append(e.payload))
    for i in range(50):
        ctx.append_event(Origin.BACKEND, "thinking", str(i))
    assert seen == [str(i) for i in range(50)]


# -- state machine ----------------------------------------------------------


def test_stop_while_speaking_returns_to_listening():
    ctx = SessionContext()
    ctx.task = TaskInfo("math", "q")
    ctx.transition(Trigger.TASK_STARTED)
    ctx.transition(Trigger.FIRST_AUDIO_QUEUED)
    assert ctx.transition(Trigger.STOP_SIGNAL) is L


def test_stop_while_listening_is_illegal_and_state_unchanged():
    ctx = SessionContext()
    with pytest.raises(StateError):
        ctx.transition(Trigger.STOP_SIGNAL)
    assert ctx.state is L


def test_full_uninterrupted_run_ends_listening():
    # Canonical trigger trace executed by hand over the table.
    ctx = SessionContext()
    ctx.task = TaskInfo("math", "q")
    assert ctx.transition(Trigger.TASK_STARTED) is P
    assert ctx.transition(Trigger.FIRST_AUDIO_QUEUED) is S
    assert ctx.transition(Trigger.PLAYBACK_DRAINED) is P  # task still active
    ctx.task.active = False
    assert ctx.transition(Trigger.COMPLETE_SIGNAL) is L
    assert ctx.state is L


def test_drained_with_inactive_task_goes_listening():
    ctx = SessionContext()
    ctx.task = TaskInfo("math", "q", active=False)
    ctx.task.active = True
    ctx.transition(Trigger.TASK_STARTED)
    ctx.transition(Trigger.FIRST_AUDIO_QUEUED)
    ctx.task.active = False
    assert ctx.transition(Trigger.PLAYBACK_DRAINED) is L


@pytest.mark.parametrize("state", list(PipelineState))
@pytest.mark.parametrize("trigger", list(Trigger))
@pytest.mark.parametrize("task_active", [False, True])
def test_resolve_transition_matches_table(state, trigger, task_active):
    expected = TABLE[(state, trigger)]
    if expected == "task_dependent":
        expected = P if task_active else L
    if expected is None:
        with pytest.raises(StateError):
            resolve_transition(state, trigger, task_active)
    else:
        assert resolve_transition(state, trigger, task_active) is expected


def test_each_change_emits_one_ledger_event_and_one_broadcast():
    ctx = SessionContext()
    ctx.task = TaskInfo("math", "q")
    broadcasts = []
    ctx.on_state_change(broadcasts.append)
    ctx.transition(Trigger.TASK_STARTED)
    ctx.transition(Trigger.FIRST_AUDIO_QUEUED)
    ctx.transition(Trigger.STOP_SIGNAL)
    changes = [e for e in ctx.events if e.kind == "state_change"]
    assert len(changes) == 3
    assert len(broadcasts) == 3


def test_illegal_transition_adds_no_ledger_event():
    ctx = SessionContext()
    with pytest.raises(StateError):
        ctx.transition(Trigger.COMPLETE_SIGNAL)
    assert ctx.events == []


# -- snapshot rendering -----------------------------------------------------


def test_snapshot_empty_ledger():
    assert SessionContext().snapshot(1000) == ""


def test_snapshot_zero_budget():
    ctx = SessionContext()
    ctx.append_event(Origin.BACKEND, "thinking", "step")
    assert ctx.snapshot(0) == ""


def test_snapshot_never_renders_partial_events():
    ctx = SessionContext()
    ctx.append_event(Origin.BACKEND, "thinking", "a rather long payload here")
    line = "[backend/thinking] a rather long payload here"
    assert ctx.snapshot(len(line) - 1) == ""
    assert ctx.snapshot(len(line)) == line


def test_snapshot_keeps_newest_events_that_fit():
    ctx = SessionContext()
    for i in range(5):
        ctx.append_event(Origin.BACKEND, "thinking", f"step {i}")
    lines = [f"[backend/thinking] step {i}" for i in range(5)]
    # Budget sized by hand to fit exactly the last three lines.
    budget = sum(len(line) for line in lines[2:]) + 2
    assert ctx.snapshot(budget) == "\n".join(lines[2:])
    assert ctx.snapshot(budget - 1) == "\n".join(lines[3:])


def test_snapshot_deterministic():
    ctx = SessionContext()
    for i in range(10):
        ctx.append_event(Origin.USER, "user_text", f"q{i}")
    assert ctx.snapshot(120) == ctx.snapshot(120)
