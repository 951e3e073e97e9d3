"""Websocket server integration tests via the in-process test client."""

import json
import time

import pytest
from starlette.testclient import TestClient

from asyncnarrate.audio import frame_byte_length
from asyncnarrate.config import AppConfig
from asyncnarrate.server import create_app


@pytest.fixture
def client():
    # Compressed backend time plus a very fast voice keep playback short.
    config = AppConfig(time_scale=0.02, quick_synth_latency_ms=5.0,
                       final_synth_latency_ms=10.0, speaking_rate_wpm=3600.0)
    app = create_app(config)
    with TestClient(app) as test_client:
        yield test_client


def collect_until(ws, predicate, limit=400):
    """Pull raw websocket messages until predicate(controls, frames) is true."""
    controls, frames = [], []
    for _ in range(limit):
        message = ws.receive()
        if message.get("text") is not None:
            controls.append(json.loads(message["text"]))
        elif message.get("bytes") is not None:
            frames.append(message["bytes"])
        if predicate(controls, frames):
            break
    return controls, frames


def test_health_endpoint(client):
    response = client.get("/healthz")
    assert response.status_code == 200
    assert response.json()["status"] == "ok"


def test_connect_announces_listening(client):
    with client.websocket_connect("/ws") as ws:
        first = json.loads(ws.receive_text())
        assert first == {"type": "state", "value": "listening"}


def test_start_task_streams_events_narration_audio(client):
    with client.websocket_connect("/ws") as ws:
        ws.receive_text()  # initial state
        ws.send_text(json.dumps({"type": "start_task", "scenario": "math",
                                 "query": "how many cookies?"}))
        controls, frames = collect_until(
            ws,
            lambda c, f: any(m["type"] == "complete" for m in c),
        )
        types = [m["type"] for m in controls]
        assert "reasoning_event" in types
        assert "narration_text" in types
        assert "ttfa_report" in types
        assert types.count("complete") == 1
        assert frames, "no audio frames arrived"
        assert all(len(f) == frame_byte_length(16000) for f in frames)
        seqs = [m["seq"] for m in controls if m["type"] == "reasoning_event"]
        assert seqs == sorted(seqs)
        answers = [
            m["text"] for m in controls
            if m["type"] == "reasoning_event" and m["kind"] == "answer"
        ]
        assert answers and "156" in answers[0]


def test_interrupt_round_trip_returns_listening_quickly(client):
    with client.websocket_connect("/ws") as ws:
        ws.receive_text()
        ws.send_text(json.dumps({"type": "start_task", "scenario": "math",
                                 "query": "?"}))
        collect_until(ws, lambda c, f: len(f) >= 2)  # audible playback underway

        sent_at = time.monotonic()
        ws.send_text(json.dumps({"type": "interrupt", "client_t_ms": 1.0}))
        controls, _ = collect_until(
            ws,
            lambda c, f: any(
                m["type"] == "state" and m["value"] == "listening" for m in c
            ),
        )
        elapsed_ms = (time.monotonic() - sent_at) * 1000.0
        assert elapsed_ms <= 250.0
        assert any(
            m["type"] == "state" and m["value"] == "listening" for m in controls
        )


def test_unknown_control_type_gets_error_reply(client):
    with client.websocket_connect("/ws") as ws:
        ws.receive_text()
        ws.send_text(json.dumps({"type": "reboot"}))
        reply = json.loads(ws.receive_text())
        assert reply["type"] == "error"
        assert reply["code"] == "bad_control"


def test_server_to_client_type_rejected_inbound(client):
    with client.websocket_connect("/ws") as ws:
        ws.receive_text()
        ws.send_text(json.dumps({"type": "ttfa_report", "ms": 1}))
        reply = json.loads(ws.receive_text())
        assert reply["type"] == "error"


def test_bad_frame_length_gets_error_reply(client):
    with client.websocket_connect("/ws") as ws:
        ws.receive_text()
        ws.send_bytes(b"\x00" * 641)
        reply = json.loads(ws.receive_text())
        assert reply["type"] == "error"
        assert reply["code"] == "bad_frame_length"


def test_user_text_without_task_gets_answer(client):
    with client.websocket_connect("/ws") as ws:
        ws.receive_text()
        ws.send_text(json.dumps({"type": "user_text", "text": "hello there?"}))
        controls, _ = collect_until(
            ws, lambda c, f: any(m["type"] == "narration_text" for m in c)
        )
        assert any(m["type"] == "transcript_final" for m in controls)
        assert any(m["type"] == "narration_text" for m in controls)


def test_registry_releases_connections(client):
    app = client.app
    with client.websocket_connect("/ws") as ws:
        ws.receive_text()
        assert app.state.registry.active_count == 1
    deadline = time.monotonic() + 5.0
    while time.monotonic() < deadline and app.state.registry.active_count:
        time.sleep(0.01)
    assert app.state.registry.active_count == 0
    assert app.state.registry.total_audio_queue_frames == 0
