"""Per-connection conversational ledger and pipeline state machine.

All events that touch one session (backend reasoning steps, narrations, user
inputs, interruptions, state changes) are merged chronologically into a single
append-only ledger, stamped from one session-local monotonic clock so latency
measurements are immune to wall-clock adjustments.
"""

from __future__ import annotations

import threading
import time
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Optional


class SessionClock:
    """Monotonic milliseconds since session start."""

    def __init__(self) -> None:
        self._origin = time.monotonic()

    def now_ms(self) -> float:
        return (time.monotonic() - self._origin) * 1000.0


class Origin(str, Enum):
    BACKEND = "backend"
    EXPLAINER = "explainer"
    USER = "user"
    SYSTEM = "system"


class PipelineState(str, Enum):
    LISTENING = "listening"
    PROCESSING = "processing"
    SPEAKING = "speaking"


class Trigger(str, Enum):
    TASK_STARTED = "task_started"
    FIRST_AUDIO_QUEUED = "first_audio_queued"
    PLAYBACK_DRAINED = "playback_drained"
    STOP_SIGNAL = "stop_signal"
    COMPLETE_SIGNAL = "complete_signal"


class StateError(RuntimeError):
    """Raised for a (state, trigger) pair outside the transition table."""

    def __init__(self, state: PipelineState, trigger: Trigger):
        self.state = state
        self.trigger = trigger
        self.reason = "illegal_transition"
        super().__init__(f"illegal transition: {state.value} + {trigger.value}")


# Fixed-target transitions. Speaking + PlaybackDrained is resolved at runtime:
# back to Processing while a task is still active, otherwise Listening.
_TRANSITIONS: dict[tuple[PipelineState, Trigger], PipelineState] = {
    (PipelineState.LISTENING, Trigger.TASK_STARTED): PipelineState.PROCESSING,
    (PipelineState.PROCESSING, Trigger.FIRST_AUDIO_QUEUED): PipelineState.SPEAKING,
    (PipelineState.SPEAKING, Trigger.STOP_SIGNAL): PipelineState.LISTENING,
    (PipelineState.PROCESSING, Trigger.STOP_SIGNAL): PipelineState.LISTENING,
    (PipelineState.PROCESSING, Trigger.COMPLETE_SIGNAL): PipelineState.LISTENING,
}


def resolve_transition(
    state: PipelineState, trigger: Trigger, task_active: bool
) -> PipelineState:
    """Pure transition function; raises StateError on undefined pairs."""
    if (state, trigger) in _TRANSITIONS:
        return _TRANSITIONS[(state, trigger)]
    if state is PipelineState.SPEAKING and trigger is Trigger.PLAYBACK_DRAINED:
        return PipelineState.PROCESSING if task_active else PipelineState.LISTENING
    raise StateError(state, trigger)


@dataclass
class TaskInfo:
    scenario: str
    query: str
    active: bool = True


@dataclass
class SessionEvent:
    origin: Origin
    kind: str
    payload: str
    at: float  # session-clock ms


class SessionContext:
    """Chronological ledger plus pipeline state for one connection.

    Appends may come from any thread or task; they are serialized by a lock
    and stamped at append time, which keeps the ledger sorted by `at` with
    ties preserved in append order.
    """

    def __init__(self, clock: Optional[SessionClock] = None):
        self.clock = clock or SessionClock()
        self.events: list[SessionEvent] = []
        self.state: PipelineState = PipelineState.LISTENING
        self.task: Optional[TaskInfo] = None
        self._lock = threading.Lock()
        self._event_listeners: list[Callable[[SessionEvent], None]] = []
        self._state_listeners: list[Callable[[PipelineState], None]] = []

    # -- subscriptions -----------------------------------------------------

    def on_event(self, listener: Callable[[SessionEvent], None]) -> None:
        self._event_listeners.append(listener)

    def on_state_change(self, listener: Callable[[PipelineState], None]) -> None:
        self._state_listeners.append(listener)

    # -- ledger ------------------------------------------------------------

    def append_event(self, origin: Origin, kind: str, payload: str = "") -> SessionEvent:
        with self._lock:
            event = SessionEvent(origin, kind, payload, at=self.clock.now_ms())
            self.events.append(event)
            listeners = list(self._event_listeners)
        for listener in listeners:
            listener(event)
        return event

    # -- state machine -----------------------------------------------------

    @property
    def task_active(self) -> bool:
        return self.task is not None and self.task.active

    def transition(self, trigger: Trigger) -> PipelineState:
        """Apply a trigger; on change, ledger a state_change and notify."""
        with self._lock:
            new_state = resolve_transition(self.state, trigger, self.task_active)
            self.state = new_state
            event = SessionEvent(
                Origin.SYSTEM,
                "state_change",
                f"{new_state.value} ({trigger.value})",
                at=self.clock.now_ms(),
            )
            self.events.append(event)
            event_listeners = list(self._event_listeners)
            state_listeners = list(self._state_listeners)
        for listener in event_listeners:
            listener(event)
        for listener in state_listeners:
            listener(new_state)
        return new_state

    # -- rendering ---------------------------------------------------------

    def snapshot(self, budget: int) -> str:
        """Render the most recent events that fit `budget` characters.

        Truncation happens at event boundaries, newest kept first; the
        returned text is in chronological order. Deterministic for a fixed
        ledger; budget 0 gives the empty string.
        """
        if budget <= 0:
            return ""
        with self._lock:
            events = list(self.events)
        lines: list[str] = []
        used = 0
        for event in reversed(events):
            line = f"[{event.origin.value}/{event.kind}] {event.payload}"
            cost = len(line) if not lines else len(line) + 1  # +1 for newline
            if used + cost > budget:
                break
            lines.append(line)
            used += cost
        return "\n".join(reversed(lines))
