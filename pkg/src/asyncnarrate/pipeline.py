"""Four-stage concurrent narration pipeline.

Stage 1 (request) merges backend events and user questions, giving questions
priority. Stage 2 (inference) turns work items into narration segments.
Stage 3 (quick synthesis) renders only the opening clause of each segment so
audio can start after the quick latency alone. Stage 4 (final synthesis plus
assembly) renders the remainder concurrently, splices it onto the quick clip
with an equal-power crossfade, and emits 20 ms frames paced in real time.

A broadcast stop event preempts every stage: pending jobs are dropped,
in-flight synthesis is cancelled within 20 ms, playing audio gets a 100 ms
linear fade (the protection window), queues are cleared, and the session
returns to listening.
"""

from __future__ import annotations

import asyncio
import time
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .audio import (
    AudioClip,
    AudioFrame,
    crossfade,
    frame_sample_count,
    linear_fade_out,
    simulated_tts,
)
from .explainer import NarrationSegment, Style, TemplateExplainer, answer_with_deadline
from .protocol import ReasoningEvent
from .session import Origin, PipelineState, SessionContext, StateError, Trigger
from .timing import sleep_ms, sleep_until
from .turn import StopSignal

QUICK_MAX_WORDS = 12
DEFAULT_OVERLAP_MS = 50
DEFAULT_PROTECTION_MS = 100
SNAPSHOT_BUDGET_CHARS = 2000

_CLAUSE_ENDINGS = (",", ".", "!", "?")


class JobCancelled(Exception):
    """Synthesis pre-empted by a stop signal."""


def _observe_exceptions(task: asyncio.Task) -> None:
    """Keep a fire-and-forget task's failure out of the teardown logs.

    Consumers still see the exception through await/result(); this only
    marks it retrieved in case the consumer is torn down first.
    """

    def _consume(done: asyncio.Task) -> None:
        if not done.cancelled():
            done.exception()

    task.add_done_callback(_consume)


@dataclass
class SynthesisJob:
    text: str
    phase: str  # "quick" | "final"
    issued_at: float = 0.0


class SimulatedSynthesizer:
    """Deterministic stand-in for a streaming TTS engine.

    Latency is simulated per phase and honors cancellation well inside the
    20 ms contract. Latencies scale with time_scale so that compressed bench
    runs keep the same latency shape.
    """

    def __init__(
        self,
        quick_latency_ms: float = 20.0,
        final_latency_ms: float = 60.0,
        speaking_rate_wpm: float = 180.0,
        sample_rate: int = 16000,
        time_scale: float = 1.0,
    ):
        self.quick_latency_ms = quick_latency_ms
        self.final_latency_ms = final_latency_ms
        self.speaking_rate_wpm = speaking_rate_wpm
        self.sample_rate = sample_rate
        self.time_scale = time_scale

    async def synthesize(
        self, job: SynthesisJob, cancel: Optional[asyncio.Event] = None
    ) -> AudioClip:
        latency = (
            self.quick_latency_ms if job.phase == "quick" else self.final_latency_ms
        ) * self.time_scale
        if latency > 0:
            if not await sleep_ms(latency, cancel):
                raise JobCancelled(job.phase)
        elif cancel is not None and cancel.is_set():
            raise JobCancelled(job.phase)
        return simulated_tts(job.text, self.speaking_rate_wpm, self.sample_rate)


def split_quick_clause(text: str, max_words: int = QUICK_MAX_WORDS) -> tuple[str, str]:
    """First clause (up to the first comma/period or 12 words) and the rest."""
    words = text.split()
    cut = min(len(words), max_words)
    for i, word in enumerate(words[:max_words], start=1):
        if word.endswith(_CLAUSE_ENDINGS):
            cut = i
            break
    return " ".join(words[:cut]), " ".join(words[cut:])


@dataclass
class PipelineHooks:
    """Side effects the pipeline raises into its host."""

    emit_frame: Callable[[AudioFrame], None] = lambda frame: None
    on_first_audio: Callable[[], None] = lambda: None
    on_narration: Callable[[NarrationSegment], None] = lambda segment: None
    on_playback_drained: Callable[[], None] = lambda: None
    on_error: Callable[[str, str], None] = lambda code, detail: None
    on_stop_cleanup: Callable[[], None] = lambda: None


@dataclass
class _Work:
    kind: str  # "event" | "question" | "segment"
    event: Optional[ReasoningEvent] = None
    question: str = ""
    segment: Optional[NarrationSegment] = None
    epoch: object = None


@dataclass
class _SegmentWork:
    segment: NarrationSegment
    quick_text: str
    final_text: str
    quick_future: asyncio.Future = field(default_factory=asyncio.Future)
    epoch: object = None


class NarrationPipeline:
    """Owns the four stages and the stop path for one session."""

    def __init__(
        self,
        session: SessionContext,
        synthesizer: SimulatedSynthesizer,
        explainer: TemplateExplainer,
        hooks: Optional[PipelineHooks] = None,
        *,
        overlap_ms: int = DEFAULT_OVERLAP_MS,
        protection_ms: int = DEFAULT_PROTECTION_MS,
        realtime_playback: bool = True,
        style: Style = Style.CONCISE,
        answer_adapter=None,
        answer_deadline_ms: float = 1500.0,
    ):
        self.session = session
        self.synthesizer = synthesizer
        self.explainer = explainer
        self.hooks = hooks or PipelineHooks()
        self.overlap_ms = overlap_ms
        self.protection_ms = protection_ms
        self.realtime_playback = realtime_playback
        self.style = style
        self.answer_adapter = answer_adapter
        self.answer_deadline_ms = answer_deadline_ms

        self._event_q: asyncio.Queue[_Work] = asyncio.Queue()
        self._question_q: asyncio.Queue[_Work] = asyncio.Queue()
        self._intake_ready = asyncio.Event()
        self._inference_q: asyncio.Queue[_Work] = asyncio.Queue()
        self._quick_q: asyncio.Queue[_SegmentWork] = asyncio.Queue()
        self._assembly_q: asyncio.Queue[_SegmentWork] = asyncio.Queue()

        self._stop_event = asyncio.Event()  # current stop epoch
        self._stopping = False
        self._stop_handled = asyncio.Event()
        self._playing = False
        self._busy = 0  # work items somewhere between intake and playback
        self._idle_event = asyncio.Event()
        self._idle_event.set()
        self._tasks: list[asyncio.Task] = []
        self._closed = False

    # -- lifecycle -----------------------------------------------------------

    def start(self) -> None:
        self._tasks = [
            asyncio.create_task(self._request_stage(), name="narr-request"),
            asyncio.create_task(self._inference_stage(), name="narr-inference"),
            asyncio.create_task(self._quick_stage(), name="narr-quick"),
            asyncio.create_task(self._assembly_stage(), name="narr-assembly"),
        ]

    async def aclose(self) -> None:
        self._closed = True
        for task in self._tasks:
            task.cancel()
        for task in self._tasks:
            try:
                await task
            except (asyncio.CancelledError, Exception):
                pass
        self._tasks = []

    # -- intake ----------------------------------------------------------------

    def submit_event(self, event: ReasoningEvent) -> None:
        """Queue a narratable backend event."""
        self._mark_busy()
        self._event_q.put_nowait(_Work("event", event=event, epoch=self._stop_event))
        self._intake_ready.set()

    def submit_user_question(self, question: str) -> None:
        """Queue a user question; questions pre-empt pending narration order."""
        self._mark_busy()
        self._question_q.put_nowait(
            _Work("question", question=question, epoch=self._stop_event)
        )
        self._intake_ready.set()

    def narrate(self, segment: NarrationSegment) -> None:
        """Queue a prepared segment directly onto the synthesis stages."""
        if self.session.state not in (PipelineState.PROCESSING, PipelineState.SPEAKING):
            raise StateError(self.session.state, Trigger.FIRST_AUDIO_QUEUED)
        self._mark_busy()
        self._enqueue_segment(segment, epoch=self._stop_event)

    @property
    def is_idle(self) -> bool:
        return self._busy == 0

    async def wait_idle(self, timeout_s: float = 30.0) -> None:
        await asyncio.wait_for(self._idle_event.wait(), timeout=timeout_s)

    def _mark_busy(self) -> None:
        self._busy += 1
        self._idle_event.clear()

    def _mark_done(self) -> None:
        self._busy = max(0, self._busy - 1)
        if self._busy == 0:
            self._idle_event.set()

    # -- stop path ---------------------------------------------------------------

    async def stop(self, signal: StopSignal) -> None:
        """Barge-in: abort synthesis, fade playback, clear queues, go listening.

        A second signal while one is being serviced is a no-op; a signal with
        nothing to stop (listening) raises StateError.
        """
        if self._stopping:
            return  # single consumption per stop
        if self.session.state not in (PipelineState.PROCESSING, PipelineState.SPEAKING):
            raise StateError(self.session.state, Trigger.STOP_SIGNAL)
        self._stopping = True
        try:
            self._stop_handled.clear()
            epoch = self._stop_event
            epoch.set()

            self._drain_queues()

            if self._playing:
                # Assembly observes the stop within one frame interval and
                # runs the protection fade; wait for its acknowledgement.
                try:
                    await asyncio.wait_for(
                        self._stop_handled.wait(),
                        timeout=(self.protection_ms + 500) / 1000.0,
                    )
                except asyncio.TimeoutError:
                    pass

            self.hooks.on_stop_cleanup()
            self.session.append_event(Origin.USER, "interrupt", signal.origin.value)
            self.session.transition(Trigger.STOP_SIGNAL)

            self._busy = 0
            self._idle_event.set()
            self._stop_event = asyncio.Event()  # new epoch accepts new work
        finally:
            self._stopping = False

    def clear_pending(self) -> None:
        """Drop queued work without stop semantics (degraded-mode reset)."""
        self._drain_queues()

    def _drain_queues(self) -> None:
        for q in (
            self._event_q,
            self._question_q,
            self._inference_q,
            self._quick_q,
            self._assembly_q,
        ):
            while not q.empty():
                q.get_nowait()

    # -- stages -------------------------------------------------------------------

    async def _request_stage(self) -> None:
        """Merge intake queues; user questions win over pending narration."""
        while True:
            await self._intake_ready.wait()
            self._intake_ready.clear()
            while not self._question_q.empty() or not self._event_q.empty():
                if not self._question_q.empty():
                    work = self._question_q.get_nowait()
                else:
                    work = self._event_q.get_nowait()
                if work.epoch.is_set():
                    self._mark_done()
                    continue
                self._inference_q.put_nowait(work)
                await asyncio.sleep(0)

    async def _inference_stage(self) -> None:
        while True:
            work = await self._inference_q.get()
            if work.epoch.is_set():
                self._mark_done()
                continue
            context = self.session.snapshot(SNAPSHOT_BUDGET_CHARS)
            try:
                if work.kind == "event":
                    segment = self.explainer.explain_event(
                        work.event, context, self.style
                    )
                elif self.answer_adapter is not None:
                    segment = await answer_with_deadline(
                        self.answer_adapter,
                        work.question,
                        context,
                        self.style,
                        self.answer_deadline_ms,
                    )
                else:
                    segment = self.explainer.answer_user(
                        work.question, context, self.style
                    )
            except Exception as exc:
                self.hooks.on_error("explain", str(exc))
                self._mark_done()
                continue
            segment.created_at = self.session.clock.now_ms()
            if work.epoch.is_set():
                self._mark_done()
                continue
            self.hooks.on_narration(segment)
            self._enqueue_segment(segment, epoch=work.epoch)

    def _enqueue_segment(self, segment: NarrationSegment, epoch) -> None:
        quick_text, final_text = split_quick_clause(segment.text)
        work = _SegmentWork(segment, quick_text, final_text, epoch=epoch)
        self._quick_q.put_nowait(work)
        self._assembly_q.put_nowait(work)

    async def _quick_stage(self) -> None:
        while True:
            work = await self._quick_q.get()
            if work.epoch.is_set():
                if not work.quick_future.done():
                    work.quick_future.set_exception(JobCancelled("quick"))
                continue
            job = SynthesisJob(work.quick_text, "quick", self.session.clock.now_ms())
            try:
                clip = await self.synthesizer.synthesize(job, cancel=work.epoch)
            except Exception as exc:  # includes JobCancelled
                if not work.quick_future.done():
                    work.quick_future.set_exception(exc)
                    work.quick_future.exception()  # teardown may orphan it
                continue
            if not work.quick_future.done():
                work.quick_future.set_result(clip)

    async def _assembly_stage(self) -> None:
        while True:
            work = await self._assembly_q.get()
            if work.epoch.is_set():
                self._mark_done()
                continue

            final_task: Optional[asyncio.Task] = None
            if work.final_text:
                job = SynthesisJob(work.final_text, "final", self.session.clock.now_ms())
                final_task = asyncio.create_task(
                    self.synthesizer.synthesize(job, cancel=work.epoch)
                )
                _observe_exceptions(final_task)
            try:
                quick_clip = await work.quick_future
            except JobCancelled:
                await self._discard(final_task)
                self._acknowledge_stop(work)
                self._mark_done()
                continue
            except Exception as exc:
                await self._discard(final_task)
                self.hooks.on_error("synthesis", str(exc))
                self._mark_done()
                continue

            await self._play(work, quick_clip, final_task)
            self._mark_done()
            if (
                not work.epoch.is_set()
                and self._assembly_q.empty()
                and self._busy == 0
            ):
                self.hooks.on_playback_drained()

    async def _play(
        self,
        work: _SegmentWork,
        quick_clip: AudioClip,
        final_task: Optional[asyncio.Task],
    ) -> None:
        """Emit paced frames; splice the final clip in before its region plays."""
        clip = quick_clip
        per = frame_sample_count(clip.sample_rate)
        overlap_samples = self.overlap_ms * clip.sample_rate // 1000
        splice_guard = quick_clip.samples.size - overlap_samples
        spliced = final_task is None
        synth_failed: Optional[str] = None

        self._playing = True
        epoch_start: Optional[float] = None
        index = 0
        try:
            while index * per < clip.samples.size:
                if work.epoch.is_set():
                    if index > 0:
                        # Protection fade applies only to audio mid-playback;
                        # a clip that never started is just discarded.
                        await self._fade_and_halt(clip, index * per, epoch_start)
                    await self._discard(final_task)
                    self._acknowledge_stop(work)
                    return

                if not spliced and (index + 1) * per > splice_guard:
                    outcome = await self._await_final(final_task, work.epoch)
                    if outcome == "stopped":
                        if index > 0:
                            await self._fade_and_halt(clip, index * per, epoch_start)
                        await self._discard(final_task)
                        self._acknowledge_stop(work)
                        return
                    if isinstance(outcome, AudioClip):
                        clip = crossfade(quick_clip, outcome, self.overlap_ms)
                    else:  # synthesis failure: quick plays out, error after
                        synth_failed = outcome
                    spliced = True
                    final_task = None

                if index == 0:
                    self.hooks.on_first_audio()
                    epoch_start = time.monotonic()

                if self.realtime_playback and epoch_start is not None:
                    target = epoch_start + index * 0.02
                    if not await sleep_until(target, work.epoch):
                        await self._fade_and_halt(clip, index * per, epoch_start)
                        await self._discard(final_task)
                        self._acknowledge_stop(work)
                        return

                self._emit_slice(clip, index, per)
                index += 1

            if synth_failed is not None:
                self.hooks.on_error("synthesis", synth_failed)
        finally:
            self._playing = False

    async def _await_final(self, final_task: asyncio.Task, epoch: asyncio.Event):
        """Wait for the final clip, remaining responsive to the stop event."""
        stop_wait = asyncio.create_task(epoch.wait())
        done, _ = await asyncio.wait(
            {final_task, stop_wait}, return_when=asyncio.FIRST_COMPLETED
        )
        if final_task in done:
            stop_wait.cancel()
            try:
                return final_task.result()
            except JobCancelled:
                return "stopped"
            except Exception as exc:
                return str(exc)
        return "stopped"

    async def _fade_and_halt(
        self, clip: AudioClip, position: int, epoch_start: Optional[float]
    ) -> None:
        """Protection window: ramp the next 100 ms to silence, drop the rest."""
        fade = linear_fade_out(clip, position, self.protection_ms)
        fade_start = time.monotonic()
        for j, frame in enumerate(fade.to_frames()):
            if self.realtime_playback and epoch_start is not None:
                await sleep_until(fade_start + j * 0.02)
            self.hooks.emit_frame(frame)

    def _emit_slice(self, clip: AudioClip, index: int, per: int) -> None:
        chunk = clip.samples[index * per : (index + 1) * per]
        if chunk.size < per:
            chunk = np.concatenate([chunk, np.zeros(per - chunk.size, dtype=np.int16)])
        self.hooks.emit_frame(AudioFrame(chunk.astype("<i2").tobytes(), clip.sample_rate))

    def _acknowledge_stop(self, work: _SegmentWork) -> None:
        if work.epoch.is_set():
            self._stop_handled.set()

    @staticmethod
    async def _discard(task: Optional[asyncio.Task]) -> None:
        if task is None:
            return
        task.cancel()
        # gather keeps the discarded task's exception out of the logs while
        # still letting our own cancellation propagate.
        await asyncio.gather(task, return_exceptions=True)
