"""Benchmark harness: three topologies, TTFA, quality, and fidelity scoring.

Topologies share one session runtime and differ only in when backend events
reach the narration pipeline: `async` narrates each event as it arrives,
`monolithic` buffers the whole stream and narrates only after completion, and
`explainer_only` models a combined reason-and-speak system whose first token
appears after a configured fraction of the full reasoning time.

Latency cells replay the scenario's first trace in real (scaled) time and
stop at the first emitted frame; quality and fidelity run every trace in
drain mode, so their scores are exact and reproducible.
"""

from __future__ import annotations

import asyncio
import math
import re
import time
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Optional, Sequence

from .backends import (
    SCENARIOS,
    BackendHandle,
    ScriptedTrace,
    load_scenario_traces,
    run_backend,
)
from .explainer import NarrationSegment
from .protocol import EventKind, ReasoningEvent
from .runtime import RuntimeOptions, SessionRuntime
from .timing import sleep_ms

# First-token delay of the combined baseline, as a fraction of the backend's
# full reasoning time. Fractions follow the reference measurements
# (4.618/9.480, 12.089/26.907, 13.980/27.184).
EXPLAINER_ONLY_DELAY_RATIO = {
    "math": 0.487,
    "travel": 0.449,
    "research": 0.514,
}

QUALITY_WEIGHTS = (0.7, 0.3)

STOPWORDS = frozenset(
    {
        "the", "a", "an", "and", "or", "but", "so", "of", "to", "in", "on",
        "at", "by", "for", "with", "from", "is", "are", "was", "were", "be",
        "been", "it", "its", "this", "that", "each", "per", "as", "into",
        "over", "under", "out", "not", "no",
    }
)


class Topology(str, Enum):
    ASYNC_NARRATION = "async"
    MONOLITHIC = "monolithic"
    EXPLAINER_ONLY = "explainer_only"


ALL_TOPOLOGIES = (
    Topology.ASYNC_NARRATION,
    Topology.MONOLITHIC,
    Topology.EXPLAINER_ONLY,
)


class BenchError(RuntimeError):
    def __init__(self, reason: str, detail: str = ""):
        self.reason = reason
        super().__init__(f"{reason}: {detail}" if detail else reason)


# -- metrics -------------------------------------------------------------------


def measure_ttfa(run: SessionRuntime) -> float:
    """First outbound frame minus task receipt, on the session clock."""
    if run.task_started_at is None or run.first_frame_at is None:
        raise BenchError("no_audio", "run emitted no audio frames")
    return run.first_frame_at - run.task_started_at


def blended_score(
    accuracy: float,
    methodology: float,
    weights: tuple[float, float] = QUALITY_WEIGHTS,
) -> float:
    """Weighted quality score on a 0-100 scale (default 70/30 blend)."""
    for name, value in (("accuracy", accuracy), ("methodology", methodology)):
        if not 0.0 <= value <= 1.0:
            raise BenchError("range", f"{name} {value} outside [0, 1]")
    w_acc, w_meth = weights
    return 100.0 * (w_acc * accuracy + w_meth * methodology)


def content_tokens(text: str) -> set[str]:
    """Numerics plus non-stopword terms; the currency fidelity is scored in."""
    tokens = re.findall(r"[A-Za-z0-9][\w.\-]*", text)
    keep = set()
    for token in tokens:
        lowered = token.lower().rstrip(".")
        if any(ch.isdigit() for ch in token):
            keep.add(lowered)
        elif len(lowered) >= 3 and lowered not in STOPWORDS:
            keep.add(lowered)
    return keep


def fidelity_score(
    narrations: Sequence[NarrationSegment], trace: ScriptedTrace
) -> float:
    """Lexical recall of each step's content tokens in its narration, on [1, 5].

    Recall 0 maps to 1, recall 1 maps to 5. An external judge adapter may
    replace this oracle, but the default keeps scoring mechanical.
    """
    if not narrations:
        raise BenchError("empty", "no narrations to score")
    by_seq: dict[int, str] = {}
    for segment in narrations:
        if segment.source_seq is not None:
            by_seq.setdefault(segment.source_seq, segment.text)

    recalls: list[float] = []
    for seq, step in enumerate(trace.steps):
        if step.kind is EventKind.COMPLETE:
            continue
        tokens = content_tokens(step.text)
        if not tokens:
            continue
        narrated = content_tokens(by_seq.get(seq, ""))
        recalls.append(len(tokens & narrated) / len(tokens))
    if not recalls:
        raise BenchError("empty", "trace has no scorable steps")
    recall = sum(recalls) / len(recalls)
    return 1.0 + 4.0 * recall


def quality_terms(
    narrations: Sequence[NarrationSegment], trace: ScriptedTrace
) -> tuple[float, float]:
    """Mechanical analogue of judged quality: answer match and step coverage."""
    answer_seqs = {
        seq for seq, s in enumerate(trace.steps) if s.kind is EventKind.ANSWER
    }
    thinking_seqs = {
        seq for seq, s in enumerate(trace.steps) if s.kind is EventKind.THINKING
    }
    narrated_seqs = {
        s.source_seq for s in narrations if s.source_seq is not None
    }
    answer_text = " ".join(
        s.text for s in narrations if s.source_seq in answer_seqs
    )
    accuracy = 1.0 if trace.expected_answer in answer_text else 0.0
    methodology = (
        len(thinking_seqs & narrated_seqs) / len(thinking_seqs)
        if thinking_seqs
        else 1.0
    )
    return accuracy, methodology


# -- percentiles -----------------------------------------------------------------


def percentile(values: Sequence[float], q: float) -> float:
    """Linear-interpolated percentile; exact at the sample points."""
    if not values:
        raise BenchError("empty", "no samples")
    ordered = sorted(values)
    if len(ordered) == 1:
        return ordered[0]
    rank = (len(ordered) - 1) * q
    lower = math.floor(rank)
    upper = math.ceil(rank)
    if lower == upper:
        return ordered[lower]
    frac = rank - lower
    return ordered[lower] * (1 - frac) + ordered[upper] * frac


# -- harness -----------------------------------------------------------------------


@dataclass
class BenchmarkConfig:
    scenarios: tuple[str, ...] = tuple(SCENARIOS)
    topologies: tuple[Topology, ...] = ALL_TOPOLOGIES
    trials: int = 2
    time_scale: float = 1.0
    trace_dir: Optional[Path] = None
    quick_latency_ms: float = 20.0
    final_latency_ms: float = 60.0

    def validate(self) -> None:
        if self.trials < 1:
            raise BenchError("config", "trials must be at least 1")
        if self.time_scale < 0:
            raise BenchError("config", "time_scale must be non-negative")
        unknown = [s for s in self.scenarios if s not in SCENARIOS]
        if unknown:
            raise BenchError("config", f"unknown scenarios {unknown}")


@dataclass
class CellResult:
    scenario: str
    topology: Topology
    ttfa_mean_ms: float
    ttfa_p50_ms: float
    ttfa_p95_ms: float
    quality_score: float
    fidelity: Optional[float]
    trials: int
    time_scale: float
    ttfa_samples_ms: list[float] = field(default_factory=list)


@dataclass
class BenchmarkReport:
    cells: list[CellResult]
    trials: int
    time_scale: float
    ordering_ok: bool
    violations: list[str]
    runtime_s: float

    def cell(self, scenario: str, topology: Topology) -> CellResult:
        for cell in self.cells:
            if cell.scenario == scenario and cell.topology == topology:
                return cell
        raise KeyError((scenario, topology))


def _runtime_for(config: BenchmarkConfig, time_scale: float) -> SessionRuntime:
    options = RuntimeOptions(
        time_scale=time_scale,
        quick_latency_ms=config.quick_latency_ms,
        final_latency_ms=config.final_latency_ms,
        record_frames=False,
    )
    runtime = SessionRuntime(options, connection=None, trace_catalog={})
    runtime.start()
    return runtime


async def _drive_topology(
    runtime: SessionRuntime,
    topology: Topology,
    trace: ScriptedTrace,
    time_scale: float,
    cancel: asyncio.Event,
) -> None:
    handle = BackendHandle(f"{trace.scenario}-backend", time_scale=time_scale)
    if topology is Topology.ASYNC_NARRATION:
        await run_backend(handle, trace, runtime.on_backend_event, cancel=cancel)
    elif topology is Topology.MONOLITHIC:
        buffered: list[ReasoningEvent] = []

        def buffer_sink(event: ReasoningEvent) -> None:
            buffered.append(event)
            if event.kind is EventKind.COMPLETE:
                for item in buffered:
                    runtime.on_backend_event(item)

        await run_backend(handle, trace, buffer_sink, cancel=cancel)
    else:  # explainer-only: one combined stream after its inference delay
        ratio = EXPLAINER_ONLY_DELAY_RATIO[trace.scenario]
        delay_ms = ratio * trace.total_duration_ms * time_scale
        if not await sleep_ms(delay_ms, cancel):
            return
        for event in trace.events():
            runtime.on_backend_event(event)
            await asyncio.sleep(0)


async def _latency_trial(
    config: BenchmarkConfig, topology: Topology, trace: ScriptedTrace
) -> float:
    runtime = _runtime_for(config, config.time_scale)
    cancel = asyncio.Event()
    try:
        runtime.begin_task_epoch(trace.scenario, "latency trial")
        driver = asyncio.create_task(
            _drive_topology(runtime, topology, trace, config.time_scale, cancel)
        )
        budget_s = (trace.total_duration_ms * config.time_scale + 10_000) / 1000.0
        try:
            await asyncio.wait_for(runtime.first_audio_event.wait(), budget_s)
        except asyncio.TimeoutError as exc:
            raise BenchError(
                "no_audio", f"{trace.scenario}/{topology.value} emitted nothing"
            ) from exc
        finally:
            cancel.set()
            driver.cancel()
            await asyncio.gather(driver, return_exceptions=True)
        return measure_ttfa(runtime)
    finally:
        await runtime.aclose()


async def _quality_trial(
    config: BenchmarkConfig, topology: Topology, trace: ScriptedTrace
) -> tuple[float, Optional[float]]:
    runtime = _runtime_for(config, time_scale=0.0)
    cancel = asyncio.Event()
    try:
        runtime.begin_task_epoch(trace.scenario, "quality trial")
        await _drive_topology(runtime, topology, trace, 0.0, cancel)
        await runtime.pipeline.wait_idle()
        accuracy, methodology = quality_terms(runtime.narrations, trace)
        quality = blended_score(accuracy, methodology)
        fidelity = None
        if topology is Topology.ASYNC_NARRATION:
            fidelity = fidelity_score(runtime.narrations, trace)
        return quality, fidelity
    finally:
        await runtime.aclose()


async def run_benchmark(config: BenchmarkConfig) -> BenchmarkReport:
    """Execute every (scenario, topology) cell sequentially and aggregate."""
    config.validate()
    started = time.monotonic()
    catalog = load_scenario_traces(config.trace_dir)
    for scenario in config.scenarios:
        if not catalog.get(scenario):
            raise BenchError("config", f"no traces for scenario {scenario!r}")

    cells: list[CellResult] = []
    for scenario in config.scenarios:
        traces = catalog[scenario]
        latency_trace = traces[0]
        for topology in config.topologies:
            try:
                samples = [
                    await _latency_trial(config, topology, latency_trace)
                    for _ in range(config.trials)
                ]
                qualities: list[float] = []
                fidelities: list[float] = []
                for trace in traces:
                    quality, fidelity = await _quality_trial(
                        config, topology, trace
                    )
                    qualities.append(quality)
                    if fidelity is not None:
                        fidelities.append(fidelity)
            except BenchError as exc:
                raise BenchError(
                    "cell", f"{scenario}/{topology.value}: {exc}"
                ) from exc
            cells.append(
                CellResult(
                    scenario=scenario,
                    topology=topology,
                    ttfa_mean_ms=sum(samples) / len(samples),
                    ttfa_p50_ms=percentile(samples, 0.50),
                    ttfa_p95_ms=percentile(samples, 0.95),
                    quality_score=sum(qualities) / len(qualities),
                    fidelity=(
                        sum(fidelities) / len(fidelities) if fidelities else None
                    ),
                    trials=config.trials,
                    time_scale=config.time_scale,
                    ttfa_samples_ms=samples,
                )
            )

    ordering_ok, violations = _check_ordering(cells, config)
    return BenchmarkReport(
        cells=cells,
        trials=config.trials,
        time_scale=config.time_scale,
        ordering_ok=ordering_ok,
        violations=violations,
        runtime_s=time.monotonic() - started,
    )


def _check_ordering(
    cells: list[CellResult], config: BenchmarkConfig
) -> tuple[bool, list[str]]:
    """async < explainer_only < monolithic must hold per scenario."""
    if set(ALL_TOPOLOGIES) - set(config.topologies):
        return True, []  # partial runs cannot be ordered
    violations = []
    by_key = {(c.scenario, c.topology): c for c in cells}
    for scenario in config.scenarios:
        fast = by_key[(scenario, Topology.ASYNC_NARRATION)].ttfa_mean_ms
        mid = by_key[(scenario, Topology.EXPLAINER_ONLY)].ttfa_mean_ms
        slow = by_key[(scenario, Topology.MONOLITHIC)].ttfa_mean_ms
        if not fast < mid < slow:
            violations.append(
                f"{scenario}: ttfa order broken "
                f"(async {fast:.1f} ms, explainer_only {mid:.1f} ms, "
                f"monolithic {slow:.1f} ms)"
            )
    return not violations, violations
