"""Event stream grammar: prefix-tagged text lines with a terminal completion signal.

The backend-to-agent wire format is one UTF-8 line per event:

    Thinking: <payload>     intermediate reasoning step
    Content: <payload>      status update
    Answer: <payload>       final response (may repeat for multi-part answers)
    COMPLETE                terminal signal, no payload

A well-formed stream matches (Thinking | Content)* Answer+ COMPLETE with
strictly increasing sequence numbers. Payloads are line-framed and must not
contain line breaks.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum


class EventKind(str, Enum):
    THINKING = "thinking"
    CONTENT = "content"
    ANSWER = "answer"
    COMPLETE = "complete"


_PREFIXES: dict[EventKind, str] = {
    EventKind.THINKING: "Thinking: ",
    EventKind.CONTENT: "Content: ",
    EventKind.ANSWER: "Answer: ",
}

COMPLETE_LINE = "COMPLETE"

NARRATABLE_KINDS = (EventKind.THINKING, EventKind.CONTENT, EventKind.ANSWER)


class ProtocolError(ValueError):
    """Malformed wire line or unencodable event. `reason` is a stable tag."""

    def __init__(self, reason: str, detail: str = ""):
        self.reason = reason
        super().__init__(f"{reason}: {detail}" if detail else reason)


class GrammarError(ValueError):
    """Event sequence violates the stream grammar."""

    def __init__(self, reason: str, detail: str = ""):
        self.reason = reason
        super().__init__(f"{reason}: {detail}" if detail else reason)


@dataclass
class ReasoningEvent:
    """One typed item of the backend stream.

    `seq` and `t_ms` are assigned by the emitting scheduler; the wire text
    carries only kind and payload.
    """

    kind: EventKind
    payload: str = ""
    seq: int = 0
    t_ms: float = 0.0

    @property
    def narratable(self) -> bool:
        return self.kind is not EventKind.COMPLETE


def encode_event(event: ReasoningEvent) -> str:
    """Render an event as exactly one wire line (no trailing newline)."""
    if "\n" in event.payload or "\r" in event.payload:
        raise ProtocolError("line_break", "payload contains a line break")
    if event.kind is EventKind.COMPLETE:
        if event.payload:
            raise ProtocolError("bad_event", "completion carries no payload")
        return COMPLETE_LINE
    return _PREFIXES[event.kind] + event.payload


def parse_event(line: str) -> ReasoningEvent:
    """Inverse of encode_event. Prefix match is exact, including colon-space."""
    if line == "":
        raise ProtocolError("empty")
    if "\n" in line or "\r" in line:
        raise ProtocolError("line_break", "expected a single framed line")
    if line == COMPLETE_LINE:
        return ReasoningEvent(EventKind.COMPLETE)
    for kind, prefix in _PREFIXES.items():
        if line.startswith(prefix):
            return ReasoningEvent(kind, line[len(prefix):])
    raise ProtocolError("unknown_prefix", line[:40])


@dataclass
class StreamGrammarState:
    """Incremental validator for one event stream (single-owner per stream)."""

    seen_answer: bool = False
    closed: bool = False
    last_seq: int | None = field(default=None)

    def feed(self, event: ReasoningEvent) -> None:
        if self.closed:
            raise GrammarError("after_close", f"seq {event.seq} after completion")
        if self.last_seq is not None and event.seq <= self.last_seq:
            raise GrammarError(
                "seq_order", f"seq {event.seq} not above {self.last_seq}"
            )
        self.last_seq = event.seq

        if event.kind is EventKind.COMPLETE:
            if not self.seen_answer:
                raise GrammarError("premature_complete", "no answer emitted")
            self.closed = True
        elif event.kind is EventKind.ANSWER:
            self.seen_answer = True
        else:  # thinking / content
            if self.seen_answer:
                raise GrammarError(
                    "unexpected_kind", f"{event.kind.value} after answer"
                )

    def finish(self) -> None:
        if not self.closed:
            raise GrammarError("incomplete", "stream ended without completion")


def validate_stream(events) -> None:
    """Accept iff the ordered sequence matches (Thinking|Content)* Answer+ COMPLETE.

    Raises GrammarError on the first violation; returns None on acceptance.
    """
    state = StreamGrammarState()
    for event in events:
        state.feed(event)
    state.finish()
