"""FastAPI websocket server exposing the narration session at /ws.

Text frames carry JSON control messages; binary frames carry 20 ms PCM. One
SessionRuntime per connection; the static web client is served from
frontend/dist when that directory exists next to the package checkout.
"""

from __future__ import annotations

from pathlib import Path

from fastapi import FastAPI, WebSocket, WebSocketDisconnect
from fastapi.staticfiles import StaticFiles

from .backends import load_scenario_traces
from .config import AppConfig
from .runtime import RuntimeOptions, SessionRuntime
from .transport import (
    CLIENT_CONTROL_TYPES,
    ConnectionContext,
    ConnectionRegistry,
    ControlMessage,
    TransportError,
    dispatch_inbound,
)


class WebSocketDuplex:
    """DuplexEndpoint over a starlette websocket."""

    def __init__(self, websocket: WebSocket):
        self.websocket = websocket

    async def send_text(self, text: str) -> None:
        await self.websocket.send_text(text)

    async def send_bytes(self, data: bytes) -> None:
        await self.websocket.send_bytes(data)


def runtime_options(config: AppConfig) -> RuntimeOptions:
    return RuntimeOptions(
        time_scale=config.time_scale,
        sample_rate=config.sample_rate,
        speaking_rate_wpm=config.speaking_rate_wpm,
        quick_latency_ms=config.quick_synth_latency_ms,
        final_latency_ms=config.final_synth_latency_ms,
        anchors=config.anchors,
    )


def frontend_dist() -> Path:
    return Path(__file__).resolve().parents[2] / "frontend" / "dist"


def create_app(config: AppConfig | None = None) -> FastAPI:
    config = config or AppConfig()
    config.validate()
    app = FastAPI(title="narrated reasoning server")
    registry = ConnectionRegistry()
    catalog = load_scenario_traces(config.trace_dir)
    app.state.registry = registry
    app.state.config = config

    @app.get("/healthz")
    async def healthz():
        return {"status": "ok", "active_connections": registry.active_count}

    @app.websocket("/ws")
    async def ws_endpoint(websocket: WebSocket):
        await websocket.accept()
        connection = ConnectionContext(
            WebSocketDuplex(websocket),
            audio_queue_frames=config.audio_queue_frames,
        )
        connection.start()
        registry.register(connection)
        runtime = SessionRuntime(
            runtime_options(config), connection=connection, trace_catalog=catalog
        )
        runtime.start()
        connection.send_control(ControlMessage("state", {"value": "listening"}))
        try:
            while True:
                message = await websocket.receive()
                if message["type"] == "websocket.disconnect":
                    break
                if message.get("text") is not None:
                    connection.messages_in += 1
                    try:
                        control = dispatch_inbound(
                            "text", message["text"], config.sample_rate
                        )
                    except TransportError as exc:
                        connection.send_control(
                            ControlMessage(
                                "error", {"code": exc.reason, "detail": str(exc)}
                            )
                        )
                        continue
                    if control.type not in CLIENT_CONTROL_TYPES:
                        connection.send_control(
                            ControlMessage(
                                "error",
                                {
                                    "code": "bad_control",
                                    "detail": f"{control.type} is server-to-client",
                                },
                            )
                        )
                        continue
                    await runtime.handle_control(control)
                elif message.get("bytes") is not None:
                    try:
                        frame = dispatch_inbound(
                            "binary", message["bytes"], config.sample_rate
                        )
                    except TransportError as exc:
                        connection.send_control(
                            ControlMessage(
                                "error", {"code": exc.reason, "detail": str(exc)}
                            )
                        )
                        continue
                    await runtime.handle_frame(frame)
        except WebSocketDisconnect:
            pass
        finally:
            await runtime.aclose()
            await registry.close_connection(connection)

    dist = frontend_dist()
    if dist.is_dir():
        app.mount("/", StaticFiles(directory=dist, html=True), name="client")
    return app
