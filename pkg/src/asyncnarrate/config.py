"""Layered application configuration.

Precedence: built-in defaults < config file < ASYNCNARRATE_* environment
variables < command-line flags. The file format is plain `key = value` lines
with # comments; anchors are written as `p:pause` pairs separated by commas
(for example `anchors = 0:1200, 0.5:600, 1:150`).
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Optional

from .audio import VALID_SAMPLE_RATES
from .turn import AnchorTable, ConfigError

ENV_PREFIX = "ASYNCNARRATE_"


@dataclass
class AppConfig:
    listen: str = "127.0.0.1:8765"
    sample_rate: int = 16000
    speaking_rate_wpm: float = 180.0
    anchors: AnchorTable = field(default_factory=AnchorTable)
    audio_queue_frames: int = 200
    time_scale: float = 1.0
    quick_synth_latency_ms: float = 20.0
    final_synth_latency_ms: float = 60.0
    backend_url: Optional[str] = None
    explainer_url: Optional[str] = None
    synthesizer_url: Optional[str] = None
    classifier_url: Optional[str] = None
    trace_dir: Optional[Path] = None

    def validate(self) -> None:
        if self.sample_rate not in VALID_SAMPLE_RATES:
            raise ConfigError("value", f"sample_rate {self.sample_rate}")
        if self.speaking_rate_wpm <= 0:
            raise ConfigError("value", "speaking_rate_wpm must be positive")
        if self.time_scale < 0:
            raise ConfigError("value", "time_scale must be non-negative")
        if self.audio_queue_frames < 1:
            raise ConfigError("value", "audio_queue_frames must be at least 1")
        if self.quick_synth_latency_ms < 0 or self.final_synth_latency_ms < 0:
            raise ConfigError("value", "synth latencies must be non-negative")
        if ":" not in self.listen:
            raise ConfigError("value", f"listen needs host:port, got {self.listen!r}")
        if self.trace_dir is not None and not Path(self.trace_dir).is_dir():
            raise ConfigError("value", f"trace_dir {self.trace_dir} is not a directory")


def parse_anchor_spec(spec: str) -> AnchorTable:
    """Parse `0:1200, 0.5:600, 1:150` into an anchor table."""
    pairs = []
    for chunk in spec.split(","):
        chunk = chunk.strip()
        if not chunk:
            continue
        if ":" not in chunk:
            raise ConfigError("value", f"anchor {chunk!r} needs p:pause")
        p_text, pause_text = chunk.split(":", 1)
        try:
            pairs.append((float(p_text), float(pause_text)))
        except ValueError as exc:
            raise ConfigError("value", f"anchor {chunk!r}: {exc}") from exc
    try:
        return AnchorTable(tuple(pairs))
    except ConfigError as exc:
        raise ConfigError("value", str(exc)) from exc


_FIELD_NAMES = {f.name for f in fields(AppConfig)}


def _coerce(name: str, raw: str):
    raw = raw.strip()
    if name == "anchors":
        return parse_anchor_spec(raw)
    if name in {"sample_rate", "audio_queue_frames"}:
        try:
            return int(raw)
        except ValueError as exc:
            raise ConfigError("value", f"{name}={raw!r}") from exc
    if name in {
        "speaking_rate_wpm",
        "time_scale",
        "quick_synth_latency_ms",
        "final_synth_latency_ms",
    }:
        try:
            return float(raw)
        except ValueError as exc:
            raise ConfigError("value", f"{name}={raw!r}") from exc
    if name == "trace_dir":
        return Path(raw)
    return raw  # listen and adapter URLs stay strings


def parse_config_file(path: str | Path) -> dict:
    values: dict = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError("value", f"{path}:{lineno}: expected key = value")
        key, value = (part.strip() for part in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in _FIELD_NAMES:
            raise ConfigError("unknown", f"{path}:{lineno}: {key!r}")
        values[key] = _coerce(key, value.strip("\"'"))
    return values


def env_overrides(environ: Optional[dict] = None) -> dict:
    environ = os.environ if environ is None else environ
    values: dict = {}
    for key, raw in environ.items():
        if not key.startswith(ENV_PREFIX):
            continue
        name = key[len(ENV_PREFIX):].lower()
        if name not in _FIELD_NAMES:
            raise ConfigError("unknown", f"environment variable {key}")
        values[name] = _coerce(name, raw)
    return values


def load_config(
    path: Optional[str | Path] = None,
    overrides: Optional[dict] = None,
    environ: Optional[dict] = None,
) -> AppConfig:
    """Assemble the effective configuration; unknown keys are rejected."""
    config = AppConfig()
    layers = []
    if path is not None:
        layers.append(parse_config_file(path))
    layers.append(env_overrides(environ))
    if overrides:
        unknown = set(overrides) - _FIELD_NAMES
        if unknown:
            raise ConfigError("unknown", f"override keys {sorted(unknown)}")
        layers.append({k: v for k, v in overrides.items() if v is not None})
    for layer in layers:
        for key, value in layer.items():
            setattr(config, key, value)
    config.validate()
    return config
