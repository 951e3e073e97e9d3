"""Scripted trace loading and replay tests, plus the external adapter."""

import asyncio
import json
import time

import pytest

from asyncnarrate.backends import (
    SCENARIOS,
    BackendError,
    BackendHandle,
    RunStatus,
    TraceError,
    external_request,
    load_scenario_traces,
    load_trace,
    parse_trace,
    run_backend,
)
from asyncnarrate.protocol import EventKind

pytestmark = pytest.mark.anyio

THREE_STEP = "\n".join(
    [
        json.dumps({"scenario": "math", "expected_answer": "42"}),
        json.dumps({"t_ms": 200, "kind": "thinking", "text": "add 40 and 2"}),
        json.dumps({"t_ms": 9400, "kind": "answer", "text": "42"}),
        json.dumps({"t_ms": 9480, "kind": "complete"}),
    ]
)


# -- loading --------------------------------------------------------------


def test_three_step_trace_duration():
    trace = parse_trace(THREE_STEP)
    assert trace.total_duration_ms == 9480
    assert trace.expected_answer == "42"
    assert [s.kind for s in trace.steps] == [
        EventKind.THINKING,
        EventKind.ANSWER,
        EventKind.COMPLETE,
    ]


def test_empty_file_rejected(tmp_path):
    path = tmp_path / "empty.jsonl"
    path.write_text("")
    with pytest.raises(TraceError) as err:
        load_trace(path)
    assert err.value.reason == "schema"


def test_out_of_order_steps_rejected():
    bad = "\n".join(
        [
            json.dumps({"scenario": "math", "expected_answer": "1"}),
            json.dumps({"t_ms": 500, "kind": "thinking", "text": "a"}),
            json.dumps({"t_ms": 100, "kind": "answer", "text": "1"}),
            json.dumps({"t_ms": 600, "kind": "complete"}),
        ]
    )
    with pytest.raises(TraceError) as err:
        parse_trace(bad)
    assert err.value.reason == "schema"


def test_grammar_violation_rejected():
    bad = "\n".join(
        [
            json.dumps({"scenario": "math", "expected_answer": "1"}),
            json.dumps({"t_ms": 100, "kind": "thinking", "text": "a"}),
            json.dumps({"t_ms": 600, "kind": "complete"}),
        ]
    )
    with pytest.raises(TraceError) as err:
        parse_trace(bad)
    assert err.value.reason == "grammar"


def test_missing_answer_field_rejected():
    bad = json.dumps({"scenario": "math"}) + "\n" + json.dumps(
        {"t_ms": 0, "kind": "complete"}
    )
    with pytest.raises(TraceError) as err:
        parse_trace(bad)
    assert err.value.reason == "schema"


def test_shipped_fixtures_load_and_validate():
    catalog = load_scenario_traces()
    for scenario in SCENARIOS:
        assert len(catalog[scenario]) == 5
        for trace in catalog[scenario]:
            assert trace.steps[-1].kind is EventKind.COMPLETE
            assert trace.expected_answer
            # Ground truth answer is narrated verbatim in an answer step.
            answers = [s.text for s in trace.steps if s.kind is EventKind.ANSWER]
            assert any(trace.expected_answer in a for a in answers)


def test_flagship_fixture_durations_match_reference_magnitudes():
    catalog = load_scenario_traces()
    flagship = {name: catalog[name][0].total_duration_ms for name in SCENARIOS}
    assert flagship["math"] == 9480
    assert flagship["travel"] == 26907
    assert flagship["research"] == 27184


# -- replay ----------------------------------------------------------------


async def test_instant_replay_delivers_in_order():
    trace = parse_trace(THREE_STEP)
    seen = []
    handle = BackendHandle("math-solver", time_scale=0.0)
    result = await run_backend(handle, trace, seen.append)
    assert result.status is RunStatus.COMPLETED
    assert [e.seq for e in seen] == [0, 1, 2]
    assert [e.kind for e in seen] == [
        EventKind.THINKING,
        EventKind.ANSWER,
        EventKind.COMPLETE,
    ]


async def test_scheduled_delivery_jitter_within_bounds():
    text = "\n".join(
        [
            json.dumps({"scenario": "math", "expected_answer": "1"}),
            json.dumps({"t_ms": 200, "kind": "thinking", "text": "step"}),
            json.dumps({"t_ms": 260, "kind": "answer", "text": "1"}),
            json.dumps({"t_ms": 300, "kind": "complete"}),
        ]
    )
    trace = parse_trace(text)
    arrivals = []
    start = time.monotonic()
    handle = BackendHandle("math-solver", time_scale=1.0)
    await run_backend(handle, trace, lambda e: arrivals.append(
        (time.monotonic() - start) * 1000.0
    ))
    for target, actual in zip((200, 260, 300), arrivals):
        assert abs(actual - target) <= 5.0


async def test_cancel_mid_stream_stops_delivery():
    trace = parse_trace(THREE_STEP)
    cancel = asyncio.Event()
    seen = []

    def sink(event):
        seen.append(event)
        cancel.set()  # cancel right after the first event

    handle = BackendHandle("math-solver", time_scale=1.0)
    result = await run_backend(handle, trace, sink, cancel=cancel)
    assert result.status is RunStatus.CANCELLED
    assert len(seen) == 1


async def test_rejecting_sink_records_cancellation():
    trace = parse_trace(THREE_STEP)

    def sink(event):
        raise RuntimeError("session closed")

    handle = BackendHandle("math-solver", time_scale=0.0)
    result = await run_backend(handle, trace, sink)
    assert result.status is RunStatus.CANCELLED
    assert result.events_delivered == 0


async def test_replay_determinism_at_zero_scale():
    trace = parse_trace(THREE_STEP)
    handle = BackendHandle("math-solver", time_scale=0.0)
    runs = []
    for _ in range(2):
        seen = []
        await run_backend(handle, trace, seen.append)
        runs.append([(e.kind, e.payload, e.seq) for e in seen])
    assert runs[0] == runs[1]


# -- external adapter --------------------------------------------------------


async def serve_lines(lines, port_holder):
    """Bare asyncio HTTP server streaming the given lines as a chunked body."""

    async def handler(reader, writer):
        await reader.readuntil(b"\r\n\r\n")
        writer.write(
            b"HTTP/1.1 200 OK\r\ncontent-type: text/plain\r\n"
            b"transfer-encoding: chunked\r\n\r\n"
        )
        for line in lines:
            chunk = (line + "\n").encode()
            writer.write(f"{len(chunk):x}\r\n".encode() + chunk + b"\r\n")
            await writer.drain()
        writer.write(b"0\r\n\r\n")
        await writer.drain()
        writer.close()

    server = await asyncio.start_server(handler, "127.0.0.1", 0)
    port_holder.append(server.sockets[0].getsockname()[1])
    return server


async def test_external_stream_matches_scripted_replay():
    trace = parse_trace(THREE_STEP)
    lines = ["Thinking: add 40 and 2", "Answer: 42", "COMPLETE"]
    ports = []
    server = await serve_lines(lines, ports)
    try:
        seen = []
        result = await external_request(
            f"http://127.0.0.1:{ports[0]}/stream", "add", seen.append
        )
        assert result.status is RunStatus.COMPLETED
        scripted = []
        await run_backend(
            BackendHandle("ref", time_scale=0.0), trace, scripted.append
        )
        assert [(e.kind, e.payload, e.seq) for e in seen] == [
            (e.kind, e.payload, e.seq) for e in scripted
        ]
    finally:
        server.close()
        await server.wait_closed()


async def test_external_bad_prefix_is_protocol_error():
    ports = []
    server = await serve_lines(["Foo: x"], ports)
    try:
        with pytest.raises(BackendError) as err:
            await external_request(
                f"http://127.0.0.1:{ports[0]}/stream", "q", lambda e: None
            )
        assert err.value.reason == "protocol"
    finally:
        server.close()
        await server.wait_closed()


async def test_external_unreachable_host():
    with pytest.raises(BackendError) as err:
        await external_request(
            "http://127.0.0.1:9/stream", "q", lambda e: None, timeout_s=0.5
        )
    assert err.value.reason == "unreachable"
