"""Dual-channel duplex transport: JSON control text plus binary PCM frames.

Classification of inbound traffic depends only on the transport frame type
(text vs binary), never on content sniffing. Each connection owns bounded
outbound queues drained by pump tasks, so per-channel ordering is preserved
and a slow client can never stall the stop path: the audio queue drops its
oldest frames on overflow instead of blocking.
"""

from __future__ import annotations

import asyncio
import itertools
import json
from collections import deque
from dataclasses import dataclass, field
from typing import Optional, Protocol

from .audio import AudioFrame, frame_byte_length
from .session import SessionClock

CONTROL_TYPES = frozenset(
    {
        "start_task",
        "user_text",
        "interrupt",
        "config_update",
        "state",
        "reasoning_event",
        "narration_text",
        "transcript_partial",
        "transcript_final",
        "ttfa_report",
        "complete",
        "error",
    }
)

CLIENT_CONTROL_TYPES = frozenset(
    {"start_task", "user_text", "interrupt", "config_update"}
)

DEFAULT_AUDIO_QUEUE_FRAMES = 200  # 4 s of 20 ms frames


class TransportError(RuntimeError):
    def __init__(self, reason: str, detail: str = ""):
        self.reason = reason
        super().__init__(f"{reason}: {detail}" if detail else reason)


@dataclass
class ControlMessage:
    type: str
    body: dict = field(default_factory=dict)

    def to_json(self) -> str:
        payload = {"type": self.type, **self.body}
        return json.dumps(payload, ensure_ascii=False)


def parse_control(text: str) -> ControlMessage:
    try:
        payload = json.loads(text)
    except json.JSONDecodeError as exc:
        raise TransportError("bad_control", f"invalid JSON: {exc}") from exc
    if not isinstance(payload, dict):
        raise TransportError("bad_control", "control message must be an object")
    msg_type = payload.pop("type", None)
    if msg_type not in CONTROL_TYPES:
        raise TransportError("bad_control", f"unknown type {msg_type!r}")
    payload.pop("v", None)  # optional schema version marker
    return ControlMessage(type=msg_type, body=payload)


def dispatch_inbound(
    channel: str, data, sample_rate: int = 16000
) -> ControlMessage | AudioFrame:
    """Classify one inbound transport message by its frame type only."""
    if channel == "text":
        if not isinstance(data, str):
            raise TransportError("bad_control", "text channel expects str")
        return parse_control(data)
    if channel == "binary":
        if not isinstance(data, (bytes, bytearray)):
            raise TransportError("bad_frame_length", "binary channel expects bytes")
        expected = frame_byte_length(sample_rate)
        if len(data) != expected:
            raise TransportError(
                "bad_frame_length",
                f"{len(data)} bytes is not one 20 ms frame ({expected})",
            )
        return AudioFrame(bytes(data), sample_rate)
    raise TransportError("bad_control", f"unknown channel {channel!r}")


class DuplexEndpoint(Protocol):
    """Whatever actually moves bytes: a websocket or an in-memory recorder."""

    async def send_text(self, text: str) -> None: ...

    async def send_bytes(self, data: bytes) -> None: ...


class MemoryEndpoint:
    """In-memory endpoint recording sends with session-clock timestamps."""

    def __init__(self, clock: Optional[SessionClock] = None):
        self.clock = clock or SessionClock()
        self.texts: list[tuple[float, str]] = []
        self.frames: list[tuple[float, bytes]] = []

    async def send_text(self, text: str) -> None:
        self.texts.append((self.clock.now_ms(), text))

    async def send_bytes(self, data: bytes) -> None:
        self.frames.append((self.clock.now_ms(), data))

    @property
    def control_messages(self) -> list[dict]:
        return [json.loads(text) for _, text in self.texts]


_connection_ids = itertools.count(1)


class ConnectionContext:
    """Per-connection resource tracking and outbound pumps.

    Control messages are sent in FIFO order on the text channel; audio frames
    FIFO on the binary channel. Cross-channel ordering is unspecified. After
    close, sends raise and queued resources are released.
    """

    def __init__(
        self,
        endpoint: DuplexEndpoint,
        clock: Optional[SessionClock] = None,
        audio_queue_frames: int = DEFAULT_AUDIO_QUEUE_FRAMES,
    ):
        self.connection_id = f"conn-{next(_connection_ids)}"
        self.clock = clock or SessionClock()
        self.endpoint = endpoint
        self.opened_at = self.clock.now_ms()
        self.closed_at: Optional[float] = None
        self.frames_in = 0
        self.frames_out = 0
        self.messages_in = 0
        self.messages_out = 0
        self.frames_dropped = 0

        self._audio_queue_frames = audio_queue_frames
        self._control_q: asyncio.Queue[Optional[ControlMessage]] = asyncio.Queue()
        self._audio_q: deque[AudioFrame] = deque()
        self._audio_ready = asyncio.Event()
        self._closed = False
        self._pumps: list[asyncio.Task] = []

    def start(self) -> None:
        self._pumps = [
            asyncio.create_task(self._pump_control(), name=f"{self.connection_id}-ctl"),
            asyncio.create_task(self._pump_audio(), name=f"{self.connection_id}-aud"),
        ]

    @property
    def closed(self) -> bool:
        return self._closed

    @property
    def audio_queue_len(self) -> int:
        return len(self._audio_q)

    def send_control(self, msg: ControlMessage) -> None:
        if self._closed:
            raise TransportError("closed", self.connection_id)
        self.messages_out += 1
        self._control_q.put_nowait(msg)

    def send_frame(self, frame: AudioFrame) -> None:
        if self._closed:
            raise TransportError("closed", self.connection_id)
        if len(self._audio_q) >= self._audio_queue_frames:
            self._audio_q.popleft()
            self.frames_dropped += 1
        self._audio_q.append(frame)
        self.frames_out += 1
        self._audio_ready.set()

    def clear_audio_queue(self) -> int:
        """Drop all queued-but-unsent frames; returns how many were dropped."""
        n = len(self._audio_q)
        self._audio_q.clear()
        return n

    async def _pump_control(self) -> None:
        while True:
            msg = await self._control_q.get()
            if msg is None:
                return
            try:
                await self.endpoint.send_text(msg.to_json())
            except Exception:
                return  # peer went away; close() handles cleanup

    async def _pump_audio(self) -> None:
        while True:
            await self._audio_ready.wait()
            if self._closed:
                return
            if not self._audio_q:
                self._audio_ready.clear()
                continue
            frame = self._audio_q.popleft()
            try:
                await self.endpoint.send_bytes(frame.data)
            except Exception:
                return

    async def drain(self) -> None:
        """Wait (bounded) until queued output has been handed to the endpoint."""
        for _ in range(10_000):
            if self._control_q.empty() and not self._audio_q:
                return
            await asyncio.sleep(0.001)

    async def close(self) -> None:
        """Idempotent: halts pumps, clears queues, releases resources."""
        if self._closed:
            return
        self._closed = True
        self.closed_at = self.clock.now_ms()
        self._control_q.put_nowait(None)
        self._audio_q.clear()
        self._audio_ready.set()
        for pump in self._pumps:
            if not pump.done():
                pump.cancel()
        for pump in self._pumps:
            try:
                await pump
            except (asyncio.CancelledError, Exception):
                pass
        self._pumps = []


class ConnectionRegistry:
    """Tracks active connections so leaks are observable."""

    def __init__(self):
        self._connections: dict[str, ConnectionContext] = {}

    def register(self, ctx: ConnectionContext) -> None:
        self._connections[ctx.connection_id] = ctx

    async def close_connection(self, ctx: ConnectionContext) -> None:
        await ctx.close()
        self._connections.pop(ctx.connection_id, None)

    async def close_all(self) -> None:
        for ctx in list(self._connections.values()):
            await self.close_connection(ctx)

    @property
    def active_count(self) -> int:
        return len(self._connections)

    @property
    def total_audio_queue_frames(self) -> int:
        return sum(c.audio_queue_len for c in self._connections.values())
