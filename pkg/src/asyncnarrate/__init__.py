"""Real-time narration of streaming reasoning backends, with barge-in.

A reasoning backend streams prefix-tagged progress lines; this package
narrates them as speech while the backend is still running, lets the user
interrupt at any moment, and ships a benchmark harness comparing
time-to-first-audio against buffered baselines.
"""

__version__ = "0.1.0"

from .protocol import (  # noqa: F401
    EventKind,
    GrammarError,
    ProtocolError,
    ReasoningEvent,
    encode_event,
    parse_event,
    validate_stream,
)
