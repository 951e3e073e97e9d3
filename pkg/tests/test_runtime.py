"""End-to-end session runtime tests over in-memory transport."""

import asyncio
import json

import numpy as np
import pytest

from asyncnarrate.audio import AudioFrame
from asyncnarrate.backends import parse_trace
from asyncnarrate.runtime import RuntimeOptions, SessionRuntime
from asyncnarrate.session import PipelineState
from asyncnarrate.transport import ConnectionContext, ControlMessage, MemoryEndpoint
from asyncnarrate.turn import StopOrigin

pytestmark = pytest.mark.anyio

SMALL_TRACE = parse_trace(
    "\n".join(
        [
            json.dumps({"scenario": "math", "expected_answer": "8"}),
            json.dumps({"t_ms": 5, "kind": "thinking", "text": "add 5 and 3"}),
            json.dumps({"t_ms": 40, "kind": "content", "text": "checking 5 + 3 = 8"}),
            json.dumps({"t_ms": 80, "kind": "answer", "text": "8"}),
            json.dumps({"t_ms": 90, "kind": "complete"}),
        ]
    )
)

CATALOG = {"math": [SMALL_TRACE], "travel": [], "research": []}


async def make_runtime(time_scale=0.0, connection=True, **opt_kwargs):
    endpoint = MemoryEndpoint()
    ctx = None
    if connection:
        ctx = ConnectionContext(endpoint)
        ctx.start()
    options = RuntimeOptions(
        time_scale=time_scale, record_frames=True, **opt_kwargs
    )
    runtime = SessionRuntime(options, connection=ctx, trace_catalog=CATALOG)
    runtime.start()
    return runtime, endpoint, ctx


async def finish(runtime, ctx):
    await runtime.aclose()
    if ctx is not None:
        await ctx.close()


async def run_task_to_completion(runtime):
    await runtime.start_task("math", "what is 5 plus 3?")
    if runtime._backend_task is not None:
        await runtime._backend_task
    await runtime.pipeline.wait_idle()
    for _ in range(200):
        if runtime.session.state is PipelineState.LISTENING:
            break
        await asyncio.sleep(0.005)


async def test_full_task_run_reaches_listening():
    runtime, endpoint, ctx = await make_runtime()
    try:
        await run_task_to_completion(runtime)
        assert runtime.session.state is PipelineState.LISTENING
        assert runtime.frames_emitted > 0
        assert runtime.ttfa_ms is not None and runtime.ttfa_ms >= 0
        assert len(runtime.narrations) == 3  # thinking + content + answer
        if ctx:
            await ctx.drain()
        types = [m["type"] for m in endpoint.control_messages]
        assert types.count("reasoning_event") == 3
        assert types.count("narration_text") == 3
        assert "ttfa_report" in types
        assert "complete" in types
        # Narrated answer carries the ground truth number verbatim.
        assert any(
            "8" in m.get("text", "")
            for m in endpoint.control_messages
            if m["type"] == "narration_text"
        )
    finally:
        await finish(runtime, ctx)


async def test_state_broadcasts_accompany_every_transition():
    runtime, endpoint, ctx = await make_runtime()
    try:
        await run_task_to_completion(runtime)
        await ctx.drain()
        states = [
            m["value"] for m in endpoint.control_messages if m["type"] == "state"
        ]
        changes = [
            e for e in runtime.session.events if e.kind == "state_change"
        ]
        assert len(states) == len(changes)
        assert states[0] == "processing"
        assert states[-1] == "listening"
    finally:
        await finish(runtime, ctx)


async def test_audio_is_deterministic_across_runs():
    blobs = []
    for _ in range(2):
        runtime, _, ctx = await make_runtime()
        try:
            await run_task_to_completion(runtime)
            blobs.append(runtime.audio_bytes())
        finally:
            await finish(runtime, ctx)
    assert blobs[0] and blobs[0] == blobs[1]


async def test_user_question_answered_from_ledger():
    runtime, endpoint, ctx = await make_runtime(time_scale=0.001)
    try:
        await run_task_to_completion(runtime)
        baseline = len(runtime.narrations)
        await runtime.handle_user_text("what was the last step?")
        for _ in range(400):
            if len(runtime.narrations) > baseline:
                break
            await asyncio.sleep(0.005)
        assert len(runtime.narrations) > baseline
        assert "8" in runtime.narrations[-1].text
        await runtime.pipeline.wait_idle()
    finally:
        await finish(runtime, ctx)


async def test_interrupt_during_speech_goes_listening_and_resumes():
    runtime, endpoint, ctx = await make_runtime(
        time_scale=0.02, quick_latency_ms=5.0, final_latency_ms=10.0
    )
    try:
        await runtime.start_task("math", "question")
        await asyncio.wait_for(runtime.first_audio_event.wait(), timeout=5.0)
        await runtime.interrupt(StopOrigin.CLIENT_BUTTON, client_t_ms=123.0)
        assert runtime.session.state is PipelineState.LISTENING
        interrupts = [e for e in runtime.session.events if e.kind == "interrupt"]
        assert len(interrupts) == 1
        assert ctx.audio_queue_len == 0

        # Asking a question resumes narration of the buffered backend steps.
        narrated_before = len(runtime.narrations)
        await runtime.handle_user_text("what was the last step?")
        for _ in range(400):
            if (
                len(runtime.narrations) > narrated_before
                and runtime.pipeline.is_idle
            ):
                break
            await asyncio.sleep(0.005)
        assert len(runtime.narrations) > narrated_before
    finally:
        await finish(runtime, ctx)


async def test_interrupt_while_listening_reports_error():
    runtime, endpoint, ctx = await make_runtime()
    try:
        await runtime.interrupt(StopOrigin.CLIENT_BUTTON)
        await ctx.drain()
        errors = [m for m in endpoint.control_messages if m["type"] == "error"]
        assert errors and errors[0]["code"] == "not_speaking"
        assert runtime.session.state is PipelineState.LISTENING
    finally:
        await finish(runtime, ctx)


async def test_vad_onset_triggers_barge_in():
    runtime, endpoint, ctx = await make_runtime(
        time_scale=0.02, quick_latency_ms=5.0, final_latency_ms=10.0
    )
    try:
        await runtime.start_task("math", "q")
        await asyncio.wait_for(runtime.first_audio_event.wait(), timeout=5.0)

        n = np.arange(320)
        loud = np.round(0.2 * 32767 * np.sin(2 * np.pi * 440 * n / 16000))
        frame = AudioFrame(loud.astype("<i2").tobytes(), 16000)
        for _ in range(3):
            await runtime.handle_frame(frame)
        assert runtime.session.state is PipelineState.LISTENING
        interrupts = [e for e in runtime.session.events if e.kind == "interrupt"]
        assert interrupts and interrupts[0].payload == "server_vad"
    finally:
        await finish(runtime, ctx)


async def test_busy_start_task_rejected():
    runtime, endpoint, ctx = await make_runtime(time_scale=0.05)
    try:
        await runtime.start_task("math", "q1")
        await runtime.start_task("math", "q2")
        await ctx.drain()
        errors = [m for m in endpoint.control_messages if m["type"] == "error"]
        assert errors and errors[0]["code"] == "busy"
    finally:
        await finish(runtime, ctx)


async def test_unknown_scenario_rejected():
    runtime, endpoint, ctx = await make_runtime()
    try:
        await runtime.start_task("poetry", "q")
        await ctx.drain()
        errors = [m for m in endpoint.control_messages if m["type"] == "error"]
        assert errors and errors[0]["code"] == "scenario"
        assert runtime.session.state is PipelineState.LISTENING
    finally:
        await finish(runtime, ctx)


async def test_config_update_swaps_anchor_table():
    runtime, endpoint, ctx = await make_runtime()
    try:
        await runtime.handle_control(
            ControlMessage("config_update", {"anchors": [[0.0, 900], [1.0, 100]]})
        )
        assert runtime.anchors.anchors == ((0.0, 900.0), (1.0, 100.0))

        await runtime.handle_control(
            ControlMessage("config_update", {"anchors": [[0.5, 900]]})
        )
        await ctx.drain()
        errors = [m for m in endpoint.control_messages if m["type"] == "error"]
        assert errors and errors[0]["code"] == "config"
    finally:
        await finish(runtime, ctx)


async def test_ttfa_report_matches_probe():
    runtime, endpoint, ctx = await make_runtime()
    try:
        await run_task_to_completion(runtime)
        await ctx.drain()
        reports = [
            m for m in endpoint.control_messages if m["type"] == "ttfa_report"
        ]
        assert len(reports) == 1
        assert reports[0]["ms"] == pytest.approx(runtime.ttfa_ms, abs=0.01)
    finally:
        await finish(runtime, ctx)
