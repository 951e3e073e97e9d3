"""Session conductor: one object that runs a full narration session.

Wires the backend replay, the narration pipeline, turn endpointing, VAD
fallback, and the transport connection around a single SessionContext. The
websocket server and the benchmark harness both drive sessions exclusively
through this class, so measured behavior is identical in both.
"""

from __future__ import annotations

import asyncio
from dataclasses import dataclass, field
from typing import Optional

from .audio import AudioFrame
from .backends import (
    BackendHandle,
    ScriptedTrace,
    load_scenario_traces,
    run_backend,
)
from .explainer import NarrationSegment, Style, TemplateExplainer
from .pipeline import NarrationPipeline, PipelineHooks, SimulatedSynthesizer
from .protocol import EventKind, ReasoningEvent
from .session import Origin, PipelineState, SessionContext, StateError, TaskInfo, Trigger
from .timing import sleep_ms
from .transport import ConnectionContext, ControlMessage, TransportError
from .turn import (
    AnchorTable,
    ConfigError,
    StopOrigin,
    StopSignal,
    VadVerdict,
    VoiceActivityDetector,
    completion_probability,
    pause_for,
)


@dataclass
class RuntimeOptions:
    time_scale: float = 1.0
    sample_rate: int = 16000
    speaking_rate_wpm: float = 180.0
    quick_latency_ms: float = 20.0
    final_latency_ms: float = 60.0
    overlap_ms: int = 50
    protection_ms: int = 100
    style: Style = Style.CONCISE
    anchors: AnchorTable = field(default_factory=AnchorTable)
    record_frames: bool = False
    answer_adapter: Optional[object] = None

    @property
    def realtime(self) -> bool:
        return self.time_scale > 0


@dataclass
class FrameRecord:
    at_ms: float
    data: bytes


class SessionRuntime:
    """Everything one connection needs to narrate, answer, and be interrupted."""

    def __init__(
        self,
        options: Optional[RuntimeOptions] = None,
        connection: Optional[ConnectionContext] = None,
        trace_catalog: Optional[dict[str, list[ScriptedTrace]]] = None,
    ):
        self.options = options or RuntimeOptions()
        self.connection = connection
        self.trace_catalog = trace_catalog

        self.session = SessionContext()
        self.anchors = self.options.anchors
        self.synthesizer = SimulatedSynthesizer(
            quick_latency_ms=self.options.quick_latency_ms,
            final_latency_ms=self.options.final_latency_ms,
            speaking_rate_wpm=self.options.speaking_rate_wpm,
            sample_rate=self.options.sample_rate,
            time_scale=self.options.time_scale,
        )
        self.explainer = TemplateExplainer()
        self.vad = VoiceActivityDetector(sample_rate=self.options.sample_rate)
        self.pipeline = NarrationPipeline(
            self.session,
            self.synthesizer,
            self.explainer,
            PipelineHooks(
                emit_frame=self._emit_frame,
                on_first_audio=self._on_first_audio,
                on_narration=self._on_narration,
                on_playback_drained=self._on_playback_drained,
                on_error=self._on_pipeline_error,
                on_stop_cleanup=self._on_stop_cleanup,
            ),
            overlap_ms=self.options.overlap_ms,
            protection_ms=self.options.protection_ms,
            realtime_playback=self.options.realtime,
            style=self.options.style,
            answer_adapter=self.options.answer_adapter,
        )

        # Instrumentation for TTFA and audio determinism checks.
        self.task_started_at: Optional[float] = None
        self.first_frame_at: Optional[float] = None
        self.last_frame_at: Optional[float] = None
        self.frames_emitted = 0
        self.recorded_frames: list[FrameRecord] = []
        self.first_audio_event = asyncio.Event()
        self.narrations: list[NarrationSegment] = []

        self._backend_task: Optional[asyncio.Task] = None
        self._backend_cancel = asyncio.Event()
        self._narration_paused = False
        self._pending_events: list[ReasoningEvent] = []
        self._utterance = ""
        self._utterance_task: Optional[asyncio.Task] = None
        self._complete_sent = False

        self.session.on_state_change(self._broadcast_state)

    # -- lifecycle ------------------------------------------------------------

    def start(self) -> None:
        self.pipeline.start()

    async def aclose(self) -> None:
        self._backend_cancel.set()
        for task in (self._backend_task, self._utterance_task):
            if task is not None and not task.done():
                task.cancel()
                try:
                    await task
                except (asyncio.CancelledError, Exception):
                    pass
        await self.pipeline.aclose()

    # -- control entry ----------------------------------------------------------

    async def handle_control(self, msg: ControlMessage) -> None:
        if msg.type == "start_task":
            await self.start_task(
                msg.body.get("scenario", ""), msg.body.get("query", "")
            )
        elif msg.type == "user_text":
            await self.handle_user_text(msg.body.get("text", ""))
        elif msg.type == "interrupt":
            await self.interrupt(
                StopOrigin.CLIENT_BUTTON, msg.body.get("client_t_ms")
            )
        elif msg.type == "config_update":
            self.apply_config_update(msg.body)
        else:
            self._send_error("unsupported", f"{msg.type} is not a client message")

    async def handle_frame(self, frame: AudioFrame) -> None:
        """Inbound microphone audio: server-side VAD barge-in fallback."""
        if self.connection is not None:
            self.connection.frames_in += 1
        try:
            verdict = self.vad.step(frame)
        except ConfigError as exc:
            self._send_error("config", str(exc))
            return
        if verdict is VadVerdict.SPEECH_ONSET and self.session.state in (
            PipelineState.PROCESSING,
            PipelineState.SPEAKING,
        ):
            await self.interrupt(StopOrigin.SERVER_VAD)

    # -- task flow ----------------------------------------------------------------

    def trace_for(self, scenario: str) -> ScriptedTrace:
        if self.trace_catalog is None:
            self.trace_catalog = load_scenario_traces()
        traces = self.trace_catalog.get(scenario) or []
        if not traces:
            raise KeyError(scenario)
        return traces[0]

    async def start_task(
        self, scenario: str, query: str, auto_backend: bool = True
    ) -> None:
        if self.session.state is not PipelineState.LISTENING:
            self._send_error("busy", "a task is already running")
            return
        try:
            trace = self.trace_for(scenario) if auto_backend else None
        except KeyError:
            self._send_error("scenario", f"unknown scenario {scenario!r}")
            return

        self.begin_task_epoch(scenario, query)
        if auto_backend and trace is not None:
            handle = BackendHandle(
                f"{scenario}-backend", time_scale=self.options.time_scale
            )
            self._backend_task = asyncio.create_task(
                run_backend(
                    handle, trace, self.on_backend_event, cancel=self._backend_cancel
                ),
                name=f"backend-{scenario}",
            )

    def begin_task_epoch(self, scenario: str, query: str) -> None:
        """Reset per-task instrumentation and enter Processing."""
        self.session.task = TaskInfo(scenario, query)
        self.explainer.scenario = scenario
        self.task_started_at = self.session.clock.now_ms()
        self.first_frame_at = None
        self.first_audio_event = asyncio.Event()
        self._complete_sent = False
        self._narration_paused = False
        self._pending_events.clear()
        self._backend_cancel = asyncio.Event()
        self.session.append_event(Origin.USER, "task_started", f"{scenario}: {query}")
        self.session.transition(Trigger.TASK_STARTED)

    def on_backend_event(self, event: ReasoningEvent) -> None:
        """Sink for backend replay; runs on the session's event loop."""
        self.session.append_event(Origin.BACKEND, event.kind.value, event.payload)
        if event.kind is EventKind.COMPLETE:
            if self.session.task is not None:
                self.session.task.active = False
            if (
                self.session.state is PipelineState.PROCESSING
                and self.pipeline.is_idle
            ):
                self.session.transition(Trigger.COMPLETE_SIGNAL)
            return
        self._send_control(
            ControlMessage(
                "reasoning_event",
                {
                    "kind": event.kind.value,
                    "text": event.payload,
                    "seq": event.seq,
                    "t_ms": round(event.t_ms, 3),
                },
            )
        )
        if self._narration_paused:
            self._pending_events.append(event)
        else:
            self.pipeline.submit_event(event)

    # -- user input and endpointing --------------------------------------------------

    async def handle_user_text(self, text: str) -> None:
        """Accumulate an utterance; respond after the endpointing pause."""
        if not text.strip():
            self._send_error("empty", "user_text carried no text")
            return
        self.session.append_event(Origin.USER, "user_text", text)
        self._send_control(ControlMessage("transcript_final", {"text": text}))
        self._utterance = (self._utterance + " " + text).strip()
        if self._utterance_task is not None and not self._utterance_task.done():
            self._utterance_task.cancel()
        p = completion_probability(self._utterance)
        pause_ms = pause_for(p, self.anchors) * self.options.time_scale
        self._utterance_task = asyncio.create_task(self._endpoint_after(pause_ms))

    async def _endpoint_after(self, pause_ms: float) -> None:
        try:
            await sleep_ms(pause_ms)
        except asyncio.CancelledError:
            return  # superseded by more speech
        question = self._utterance.strip()
        self._utterance = ""
        if not question:
            return
        self.process_user_question(question)

    def process_user_question(self, question: str) -> None:
        """Answer now; when narration was interrupted, resume it afterward."""
        if self.session.state is PipelineState.LISTENING:
            self.session.transition(Trigger.TASK_STARTED)
        self.pipeline.submit_user_question(question)
        if self._narration_paused:
            for event in self._pending_events:
                self.pipeline.submit_event(event)
            self._pending_events.clear()
            self._narration_paused = False

    # -- interruption -----------------------------------------------------------------

    async def interrupt(
        self, origin: StopOrigin, client_t_ms: Optional[float] = None
    ) -> None:
        signal = StopSignal(
            origin, raised_at=self.session.clock.now_ms(), client_t_ms=client_t_ms
        )
        try:
            await self.pipeline.stop(signal)
        except StateError as exc:
            self._send_error("not_speaking", str(exc))
            return
        self._narration_paused = True

    def apply_config_update(self, body: dict) -> None:
        if "anchors" in body:
            try:
                self.anchors = AnchorTable.from_pairs(body["anchors"])
            except ConfigError as exc:
                self._send_error("config", str(exc))
                return
        if "style" in body:
            try:
                self.pipeline.style = Style(body["style"])
            except ValueError:
                self._send_error("config", f"unknown style {body['style']!r}")

    # -- pipeline hooks ------------------------------------------------------------------

    def _emit_frame(self, frame: AudioFrame) -> None:
        now = self.session.clock.now_ms()
        self.frames_emitted += 1
        self.last_frame_at = now
        if self.first_frame_at is None:
            self.first_frame_at = now
            self.first_audio_event.set()
            if self.task_started_at is not None:
                self._send_control(
                    ControlMessage(
                        "ttfa_report",
                        {"ms": round(now - self.task_started_at, 3)},
                    )
                )
        if self.options.record_frames:
            self.recorded_frames.append(FrameRecord(now, frame.data))
        if self.connection is not None and not self.connection.closed:
            self.connection.send_frame(frame)

    def _on_first_audio(self) -> None:
        if self.session.state is PipelineState.PROCESSING:
            self.session.transition(Trigger.FIRST_AUDIO_QUEUED)

    def _on_narration(self, segment: NarrationSegment) -> None:
        self.narrations.append(segment)
        self.session.append_event(Origin.EXPLAINER, "narration", segment.text)
        self._send_control(
            ControlMessage(
                "narration_text",
                {"text": segment.text, "seq": segment.source_seq},
            )
        )

    def _on_playback_drained(self) -> None:
        if self.session.state is PipelineState.SPEAKING:
            self.session.transition(Trigger.PLAYBACK_DRAINED)

    def _on_pipeline_error(self, code: str, detail: str) -> None:
        self._send_error(code, detail)
        self.pipeline.clear_pending()
        self._backend_cancel.set()
        if self.session.task is not None:
            self.session.task.active = False
        if self.session.state is PipelineState.PROCESSING and self.pipeline.is_idle:
            self.session.transition(Trigger.COMPLETE_SIGNAL)

    def _on_stop_cleanup(self) -> None:
        if self.connection is not None:
            self.connection.clear_audio_queue()

    # -- outbound ---------------------------------------------------------------------------

    def _broadcast_state(self, state: PipelineState) -> None:
        self._send_control(ControlMessage("state", {"value": state.value}))
        if (
            state is PipelineState.LISTENING
            and self.session.task is not None
            and not self.session.task.active
            and not self._complete_sent
        ):
            self._complete_sent = True
            self._send_control(ControlMessage("complete"))

    def _send_control(self, msg: ControlMessage) -> None:
        if self.connection is None:
            return
        try:
            self.connection.send_control(msg)
        except TransportError:
            pass  # connection raced shut; session teardown follows

    def _send_error(self, code: str, detail: str) -> None:
        self._send_control(ControlMessage("error", {"code": code, "detail": detail}))

    # -- measurements -------------------------------------------------------------------------

    @property
    def ttfa_ms(self) -> Optional[float]:
        if self.task_started_at is None or self.first_frame_at is None:
            return None
        return self.first_frame_at - self.task_started_at

    def audio_bytes(self) -> bytes:
        return b"".join(record.data for record in self.recorded_frames)
