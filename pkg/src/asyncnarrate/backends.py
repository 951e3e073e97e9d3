"""Reasoning backends: deterministic scripted traces plus an external adapter.

A scripted trace is JSON Lines: a header object carrying the scenario and the
ground-truth answer, then one step per line with its scheduled emission offset.
Replays deliver each step at offset * time_scale against a monotonic clock
(time_scale 0 means deliver immediately, for drain-mode runs). The external
adapter consumes the same newline-delimited wire lines over a streaming HTTP
body, so any conforming backend can be dropped in.
"""

from __future__ import annotations

import asyncio
import json
import time
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Callable, Optional

import httpx

from .protocol import (
    EventKind,
    GrammarError,
    ProtocolError,
    ReasoningEvent,
    StreamGrammarState,
    parse_event,
    validate_stream,
)
from .timing import sleep_until

SCENARIOS = ("math", "travel", "research")


class TraceError(ValueError):
    def __init__(self, reason: str, detail: str = ""):
        self.reason = reason
        super().__init__(f"{reason}: {detail}" if detail else reason)


class BackendError(RuntimeError):
    def __init__(self, reason: str, detail: str = ""):
        self.reason = reason
        super().__init__(f"{reason}: {detail}" if detail else reason)


@dataclass(frozen=True)
class TraceStep:
    t_ms: float
    kind: EventKind
    text: str = ""


@dataclass
class ScriptedTrace:
    scenario: str
    expected_answer: str
    steps: list[TraceStep]
    source: str = "<memory>"

    @property
    def total_duration_ms(self) -> float:
        return self.steps[-1].t_ms if self.steps else 0.0

    @property
    def thinking_steps(self) -> list[TraceStep]:
        return [s for s in self.steps if s.kind is EventKind.THINKING]

    @property
    def narratable_steps(self) -> list[TraceStep]:
        return [s for s in self.steps if s.kind is not EventKind.COMPLETE]

    def events(self) -> list[ReasoningEvent]:
        return [
            ReasoningEvent(step.kind, step.text, seq=i, t_ms=step.t_ms)
            for i, step in enumerate(self.steps)
        ]


def parse_trace(text: str, source: str = "<memory>") -> ScriptedTrace:
    lines = [line for line in text.splitlines() if line.strip()]
    if not lines:
        raise TraceError("schema", f"{source}: empty trace")

    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise TraceError("schema", f"{source}: bad header: {exc}") from exc
    if not isinstance(header, dict):
        raise TraceError("schema", f"{source}: header must be an object")
    scenario = header.get("scenario")
    expected = header.get("expected_answer")
    if scenario not in SCENARIOS:
        raise TraceError("schema", f"{source}: unknown scenario {scenario!r}")
    if not isinstance(expected, str) or not expected:
        raise TraceError("schema", f"{source}: missing expected_answer")

    steps: list[TraceStep] = []
    previous_t = -1.0
    for index, line in enumerate(lines[1:], start=2):
        try:
            raw = json.loads(line)
        except json.JSONDecodeError as exc:
            raise TraceError("schema", f"{source}:{index}: bad step: {exc}") from exc
        if not isinstance(raw, dict) or "t_ms" not in raw or "kind" not in raw:
            raise TraceError("schema", f"{source}:{index}: step needs t_ms and kind")
        try:
            t_ms = float(raw["t_ms"])
            kind = EventKind(raw["kind"])
        except (TypeError, ValueError) as exc:
            raise TraceError("schema", f"{source}:{index}: {exc}") from exc
        text_field = raw.get("text", "")
        if not isinstance(text_field, str) or "\n" in text_field:
            raise TraceError("schema", f"{source}:{index}: bad step text")
        if t_ms < previous_t:
            raise TraceError("schema", f"{source}:{index}: steps out of time order")
        previous_t = t_ms
        steps.append(TraceStep(t_ms, kind, text_field))

    trace = ScriptedTrace(scenario, expected, steps, source)
    try:
        validate_stream(trace.events())
    except GrammarError as exc:
        raise TraceError("grammar", f"{source}: {exc}") from exc
    return trace


def load_trace(path: str | Path) -> ScriptedTrace:
    path = Path(path)
    return parse_trace(path.read_text(encoding="utf-8"), source=str(path))


def packaged_trace_dir() -> Path:
    return Path(__file__).parent / "traces"


def load_scenario_traces(
    trace_dir: str | Path | None = None,
) -> dict[str, list[ScriptedTrace]]:
    """All traces grouped by scenario, sorted by filename within each group."""
    directory = Path(trace_dir) if trace_dir else packaged_trace_dir()
    catalog: dict[str, list[ScriptedTrace]] = {name: [] for name in SCENARIOS}
    for path in sorted(directory.glob("*.jsonl")):
        trace = load_trace(path)
        catalog[trace.scenario].append(trace)
    return catalog


class BackendMode(str, Enum):
    SCRIPTED = "scripted"
    EXTERNAL = "external"


@dataclass
class BackendHandle:
    name: str
    mode: BackendMode = BackendMode.SCRIPTED
    time_scale: float = 1.0

    def __post_init__(self):
        if self.time_scale < 0:
            raise TraceError("schema", "time_scale must be non-negative")


class RunStatus(str, Enum):
    COMPLETED = "completed"
    CANCELLED = "cancelled"
    ERROR = "error"


@dataclass
class BackendRunResult:
    status: RunStatus
    events_delivered: int = 0
    detail: str = ""


# A sink accepts one ReasoningEvent; raising stops the replay (recorded as a
# cancellation, mirroring a closed session).
EventSink = Callable[[ReasoningEvent], None]


async def run_backend(
    handle: BackendHandle,
    trace: ScriptedTrace,
    sink: EventSink,
    cancel: Optional[asyncio.Event] = None,
) -> BackendRunResult:
    """Replay a trace into `sink` on schedule; seq runs 0..n-1."""
    start = time.monotonic()
    delivered = 0
    for seq, step in enumerate(trace.steps):
        if handle.time_scale > 0:
            deadline = start + step.t_ms * handle.time_scale / 1000.0
            if not await sleep_until(deadline, cancel):
                return BackendRunResult(RunStatus.CANCELLED, delivered)
        elif cancel is not None and cancel.is_set():
            return BackendRunResult(RunStatus.CANCELLED, delivered)

        elapsed_ms = (time.monotonic() - start) * 1000.0
        event = ReasoningEvent(step.kind, step.text, seq=seq, t_ms=elapsed_ms)
        try:
            sink(event)
        except Exception as exc:
            return BackendRunResult(RunStatus.CANCELLED, delivered, str(exc))
        delivered += 1
        if handle.time_scale == 0:
            await asyncio.sleep(0)  # let consumers run during instant replay
    return BackendRunResult(RunStatus.COMPLETED, delivered)


async def external_request(
    endpoint: str,
    query: str,
    sink: EventSink,
    timeout_s: float = 30.0,
) -> BackendRunResult:
    """Stream newline-delimited event lines from an external reasoning server.

    Lines are parsed and grammar-checked as they arrive; a violation
    terminates the stream with a protocol error.
    """
    validator = StreamGrammarState()
    delivered = 0
    try:
        async with httpx.AsyncClient(timeout=timeout_s) as client:
            async with client.stream(
                "POST", endpoint, json={"query": query}
            ) as response:
                if response.status_code != 200:
                    raise BackendError(
                        "unreachable", f"status {response.status_code}"
                    )
                async for line in response.aiter_lines():
                    if not line.strip():
                        continue
                    try:
                        event = parse_event(line)
                        event.seq = delivered
                        validator.feed(event)
                    except (ProtocolError, GrammarError) as exc:
                        raise BackendError("protocol", str(exc)) from exc
                    try:
                        sink(event)
                    except Exception as exc:
                        return BackendRunResult(
                            RunStatus.CANCELLED, delivered, str(exc)
                        )
                    delivered += 1
    except httpx.HTTPError as exc:
        raise BackendError("unreachable", str(exc)) from exc
    try:
        validator.finish()
    except GrammarError as exc:
        raise BackendError("protocol", str(exc)) from exc
    return BackendRunResult(RunStatus.COMPLETED, delivered)
