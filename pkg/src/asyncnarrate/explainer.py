"""Turns backend reasoning events into spoken-style narration.

The default engine is template-based: deterministic, sub-millisecond, and it
embeds the event payload verbatim so every numeric token and named entity
survives into the narration (that conservation is what the fidelity scoring
leans on). A generative adapter can replace it behind the same interface; it
is always guarded by a deadline with a fixed fallback line.
"""

from __future__ import annotations

import asyncio
import re
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Awaitable, Callable, Optional

from .protocol import EventKind, ReasoningEvent

CONCISE_MAX_CHARS = 400
DEFAULT_ANSWER_DEADLINE_MS = 1500.0

FALLBACK_ANSWER_TEXT = "Let me get back to that — the solver is still working."

_RECENCY_WORDS = frozenset(
    {"last", "latest", "previous", "recent", "recently", "now", "current",
     "currently", "step", "doing", "working", "far"}
)

_QUERY_STOPWORDS = frozenset(
    {"a", "an", "the", "is", "was", "are", "were", "what", "which", "who",
     "how", "why", "did", "do", "does", "can", "you", "me", "tell", "it",
     "that", "this", "of", "to", "about", "on", "in"}
)


class Style(str, Enum):
    CONCISE = "concise"
    DETAILED = "detailed"


class ExplainError(ValueError):
    def __init__(self, reason: str, detail: str = ""):
        self.reason = reason
        super().__init__(f"{reason}: {detail}" if detail else reason)


@dataclass
class NarrationSegment:
    """One narration unit handed to the speech pipeline."""

    text: str
    source_seq: Optional[int] = None
    style: Style = Style.CONCISE
    created_at: float = 0.0

    def __post_init__(self):
        if not self.text:
            raise ExplainError("empty_text", "narration text must be non-empty")
        if self.style is Style.CONCISE and len(self.text) > CONCISE_MAX_CHARS:
            raise ExplainError(
                "too_long", f"concise narration over {CONCISE_MAX_CHARS} chars"
            )


DEFAULT_TEMPLATES: dict[tuple[EventKind, Style], str] = {
    (EventKind.THINKING, Style.CONCISE): "Right now the solver is working on: {payload}.",
    (EventKind.CONTENT, Style.CONCISE): "Quick update: {payload}.",
    (EventKind.ANSWER, Style.CONCISE): "Here is the result: {payload}.",
    (EventKind.THINKING, Style.DETAILED): (
        "Let me walk you through the current step. The {scenario} backend is "
        "working on: {payload}."
    ),
    (EventKind.CONTENT, Style.DETAILED): (
        "A status update from the {scenario} backend: {payload}."
    ),
    (EventKind.ANSWER, Style.DETAILED): (
        "After working through the steps, the {scenario} backend reports the "
        "final result: {payload}."
    ),
}


def load_templates(path: str | Path) -> dict[tuple[EventKind, Style], str]:
    """Parse a template file: one `kind.style = template` line per entry.

    Templates may use {payload} and {scenario} placeholders. Blank lines and
    lines starting with # are ignored; entries missing from the file fall
    back to the defaults.
    """
    templates = dict(DEFAULT_TEMPLATES)
    for raw in Path(path).read_text(encoding="utf-8").splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ExplainError("template", f"expected 'kind.style = text': {line!r}")
        key, text = line.split("=", 1)
        try:
            kind_name, style_name = key.strip().split(".")
            kind = EventKind(kind_name)
            style = Style(style_name)
        except ValueError as exc:
            raise ExplainError("template", f"bad template key {key.strip()!r}") from exc
        if kind is EventKind.COMPLETE:
            raise ExplainError("template", "completion events are not narratable")
        templates[(kind, style)] = text.strip()
    return templates


class TemplateExplainer:
    """Deterministic narration engine over (kind, style) templates."""

    def __init__(
        self,
        templates: Optional[dict[tuple[EventKind, Style], str]] = None,
        scenario: str = "reasoning",
    ):
        self.templates = templates or dict(DEFAULT_TEMPLATES)
        self.scenario = scenario

    def explain_event(
        self, event: ReasoningEvent, context: str, style: Style = Style.CONCISE
    ) -> NarrationSegment:
        """Narrate one backend event; the payload is carried verbatim."""
        if event.kind is EventKind.COMPLETE:
            raise ExplainError("not_narratable", "completion has nothing to narrate")
        template = self.templates[(event.kind, style)]
        text = template.format(payload=event.payload, scenario=self.scenario)
        if style is Style.CONCISE and len(text) > CONCISE_MAX_CHARS:
            # Long payloads would burst the concise cap; keep the payload
            # intact and relabel rather than truncate narrated content.
            style = Style.DETAILED
            text = self.templates[(event.kind, style)].format(
                payload=event.payload, scenario=self.scenario
            )
        return NarrationSegment(text=text, source_seq=event.seq, style=style)

    def answer_user(
        self, question: str, context: str, style: Style = Style.CONCISE
    ) -> NarrationSegment:
        """Answer a user question by quoting the most relevant ledger events."""
        if not question.strip():
            raise ExplainError("empty_query")
        lines = [line for line in context.splitlines() if line.strip()]
        q_tokens = {
            token.strip(".,!?;:").lower()
            for token in question.split()
            if token.strip(".,!?;:")
        }

        if q_tokens & _RECENCY_WORDS:
            payload = self._newest_backend_payload(lines)
            if payload:
                return NarrationSegment(
                    f"The most recent step was: {payload}.", style=style
                )

        keywords = q_tokens - _QUERY_STOPWORDS
        for line in reversed(lines):
            if line.startswith("[user/"):
                continue  # echoing the question back answers nothing
            payload = _line_payload(line)
            if not payload:
                continue
            lowered = payload.lower()
            if any(keyword in lowered for keyword in keywords):
                return NarrationSegment(
                    f"Here is what I have on that: {payload}.", style=style
                )

        payload = self._newest_backend_payload(lines)
        if payload:
            return NarrationSegment(
                f"I do not have that yet. The latest I can share is: {payload}.",
                style=style,
            )
        return NarrationSegment(
            "I do not have anything on that yet; the task has not produced steps.",
            style=style,
        )

    @staticmethod
    def _newest_backend_payload(lines: list[str]) -> str:
        for line in reversed(lines):
            if line.startswith("[backend/"):
                payload = _line_payload(line)
                if payload:  # completion markers carry no text
                    return payload
        return ""


def _line_payload(line: str) -> str:
    match = re.match(r"\[[^\]]+\]\s?(.*)", line)
    return match.group(1) if match else line


# An adapter takes (question, context, style) and resolves to narration text.
AnswerAdapter = Callable[[str, str, Style], Awaitable[str]]


async def answer_with_deadline(
    adapter: AnswerAdapter,
    question: str,
    context: str,
    style: Style = Style.CONCISE,
    deadline_ms: float = DEFAULT_ANSWER_DEADLINE_MS,
) -> NarrationSegment:
    """Run a generative adapter with a hard deadline and a fixed fallback."""
    if not question.strip():
        raise ExplainError("empty_query")
    try:
        text = await asyncio.wait_for(
            adapter(question, context, style), timeout=deadline_ms / 1000.0
        )
        return NarrationSegment(text=text, style=style)
    except asyncio.TimeoutError:
        return NarrationSegment(text=FALLBACK_ANSWER_TEXT, style=style)
