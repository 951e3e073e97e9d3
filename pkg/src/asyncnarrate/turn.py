"""Turn detection and interruption primitives.

Completion probability comes from a lightweight heuristic classifier (an
external model can be plugged in behind the same callable contract; input is
truncated to the last 128 whitespace tokens either way). Probabilities map to
response pause durations through a configurable anchor table. Energy-based
VAD over inbound 20 ms frames provides the server-side barge-in fallback.
"""

from __future__ import annotations

import string
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence

from .audio import AudioFrame, rms_bytes

MAX_CLASSIFIER_TOKENS = 128

DEFAULT_ANCHORS: tuple[tuple[float, float], ...] = (
    (0.0, 1200.0),
    (0.5, 600.0),
    (1.0, 150.0),
)

# Utterances ending on one of these rarely stand alone; they pull the
# completion probability down.
CONTINUATION_WORDS = frozenset(
    {
        "and", "or", "but", "so", "because", "if", "when", "while", "although",
        "to", "of", "in", "on", "at", "with", "for", "from", "by", "about",
        "into", "over", "under", "between", "through", "after", "before",
        "the", "a", "an", "my", "your", "his", "her", "their", "our", "its",
        "um", "uh", "er", "hmm", "like", "plus", "minus", "times", "then",
        "than", "as", "that", "which", "who", "whose",
    }
)

_TERMINAL_PUNCTUATION = (".", "!", "?")


class ConfigError(ValueError):
    """Invalid tuning value. `reason` is a stable tag."""

    def __init__(self, reason: str, detail: str = ""):
        self.reason = reason
        super().__init__(f"{reason}: {detail}" if detail else reason)


@dataclass(frozen=True)
class AnchorTable:
    """Monotone map from completion probability to pause duration."""

    anchors: tuple[tuple[float, float], ...] = DEFAULT_ANCHORS

    def __post_init__(self):
        anchors = tuple(self.anchors)
        if len(anchors) < 2:
            raise ConfigError("anchors", "need at least the 0.0 and 1.0 anchors")
        probs = [p for p, _ in anchors]
        pauses = [d for _, d in anchors]
        if probs[0] != 0.0 or probs[-1] != 1.0:
            raise ConfigError("anchors", "anchors must cover 0.0 and 1.0")
        if any(b <= a for a, b in zip(probs, probs[1:])):
            raise ConfigError("anchors", "probabilities must strictly increase")
        if any(d < 0 for d in pauses):
            raise ConfigError("anchors", "pause durations must be non-negative")
        if any(b > a for a, b in zip(pauses, pauses[1:])):
            raise ConfigError("anchors", "pauses must not increase with probability")
        object.__setattr__(self, "anchors", anchors)

    @classmethod
    def from_pairs(cls, pairs: Sequence[Sequence[float]]) -> "AnchorTable":
        try:
            anchors = tuple((float(p), float(d)) for p, d in pairs)
        except (TypeError, ValueError) as exc:
            raise ConfigError("anchors", str(exc)) from exc
        return cls(anchors)


def pause_for(p: float, table: AnchorTable) -> float:
    """Piecewise-linear interpolation between bracketing anchors, exact at anchors."""
    if not 0.0 <= p <= 1.0:
        raise ConfigError("value", f"probability {p} out of [0, 1]")
    anchors = table.anchors
    for (p0, d0), (p1, d1) in zip(anchors, anchors[1:]):
        if p <= p1:
            if p == p0:
                return d0
            if p == p1:
                return d1
            return d0 + (p - p0) / (p1 - p0) * (d1 - d0)
    return anchors[-1][1]


def completion_probability(text: str, lexicon: frozenset = CONTINUATION_WORDS) -> float:
    """Heuristic probability that the utterance is a finished sentence.

    Base 0.5; +0.45 for terminal punctuation; -0.35 when the last token is a
    continuation word; clamped to [0.02, 0.98]. Empty input reads as 0.02.
    """
    tokens = text.split()
    if not tokens:
        return 0.02
    tokens = tokens[-MAX_CLASSIFIER_TOKENS:]
    p = 0.5
    if tokens[-1].endswith(_TERMINAL_PUNCTUATION):
        p += 0.45
    last = tokens[-1].strip(string.punctuation).lower()
    if last in lexicon:
        p -= 0.35
    return min(0.98, max(0.02, p))


class StopOrigin(str, Enum):
    CLIENT_AUDIO = "client_audio"
    CLIENT_BUTTON = "client_button"
    SERVER_VAD = "server_vad"


@dataclass
class StopSignal:
    """Broadcast interruption token; one active signal per session at a time."""

    origin: StopOrigin
    raised_at: float  # session-clock ms
    client_t_ms: Optional[float] = None


class VadVerdict(str, Enum):
    SILENCE = "silence"
    SPEECH = "speech"
    SPEECH_ONSET = "speech_onset"


@dataclass
class VoiceActivityDetector:
    """Energy VAD over 20 ms frames with onset trigger and hangover.

    SPEECH_ONSET fires exactly on the trigger_frames-th consecutive frame
    above threshold; after that, hangover keeps the verdict at SPEECH for
    hangover_frames quiet frames before resetting to SILENCE.
    """

    sample_rate: int = 16000
    rms_threshold: float = 0.02
    trigger_frames: int = 3
    hangover_frames: int = 10
    _consecutive: int = field(default=0, init=False, repr=False)
    _in_speech: bool = field(default=False, init=False, repr=False)
    _hangover_left: int = field(default=0, init=False, repr=False)

    def __post_init__(self):
        if self.trigger_frames < 1:
            raise ConfigError("value", "trigger_frames must be at least 1")
        if self.rms_threshold <= 0:
            raise ConfigError("value", "rms_threshold must be positive")

    def step(self, frame: AudioFrame) -> VadVerdict:
        if frame.sample_rate != self.sample_rate:
            raise ConfigError(
                "rate", f"frame at {frame.sample_rate} Hz, detector at {self.sample_rate}"
            )
        loud = rms_bytes(frame.data) >= self.rms_threshold

        if loud:
            self._hangover_left = self.hangover_frames
            if self._in_speech:
                return VadVerdict.SPEECH
            self._consecutive += 1
            if self._consecutive >= self.trigger_frames:
                self._in_speech = True
                return VadVerdict.SPEECH_ONSET
            return VadVerdict.SILENCE

        self._consecutive = 0
        if self._in_speech:
            if self._hangover_left > 0:
                self._hangover_left -= 1
                return VadVerdict.SPEECH
            self._in_speech = False
        return VadVerdict.SILENCE

    def reset(self) -> None:
        self._consecutive = 0
        self._in_speech = False
        self._hangover_left = 0
