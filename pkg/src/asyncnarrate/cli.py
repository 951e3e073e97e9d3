"""Operator entry points: serve, bench, replay, validate-trace."""

from __future__ import annotations

import asyncio
import sys
import time
from pathlib import Path

import click

from .backends import BackendHandle, TraceError, load_trace, run_backend
from .bench import ALL_TOPOLOGIES, BenchError, BenchmarkConfig, Topology, run_benchmark
from .config import load_config
from .protocol import encode_event
from .report import format_table, write_report_bundle
from .turn import ConfigError


def _load(config_path, **flag_overrides):
    try:
        return load_config(config_path, overrides=flag_overrides)
    except ConfigError as exc:
        raise click.ClickException(f"configuration: {exc}")


@click.group()
def main():
    """Narrated reasoning server and its benchmark harness."""


@main.command()
@click.option("--listen", default=None, help="host:port to bind")
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--time-scale", type=float, default=None)
@click.option("--trace-dir", type=click.Path(exists=True, file_okay=False), default=None)
def serve(listen, config_path, time_scale, trace_dir):
    """Run the websocket narration server."""
    config = _load(
        config_path,
        listen=listen,
        time_scale=time_scale,
        trace_dir=Path(trace_dir) if trace_dir else None,
    )
    import uvicorn

    from .server import create_app

    host, port_text = config.listen.rsplit(":", 1)
    app = create_app(config)
    uvicorn.run(app, host=host, port=int(port_text), log_level="info")


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--time-scale", type=float, default=None)
@click.option("--trace-dir", type=click.Path(exists=True, file_okay=False), default=None)
@click.option(
    "--topology",
    "topologies",
    multiple=True,
    type=click.Choice([t.value for t in ALL_TOPOLOGIES]),
    help="restrict to specific topologies (repeatable; default all)",
)
@click.option("--trials", type=int, default=2, show_default=True)
@click.option(
    "--report-out",
    type=click.Path(file_okay=False),
    default="bench-report",
    show_default=True,
)
def bench(config_path, time_scale, trace_dir, topologies, trials, report_out):
    """Run the three-topology latency/quality comparison."""
    config = _load(
        config_path,
        time_scale=time_scale,
        trace_dir=Path(trace_dir) if trace_dir else None,
    )
    bench_config = BenchmarkConfig(
        topologies=(
            tuple(Topology(t) for t in topologies) if topologies else ALL_TOPOLOGIES
        ),
        trials=trials,
        time_scale=config.time_scale,
        trace_dir=config.trace_dir,
        quick_latency_ms=config.quick_synth_latency_ms,
        final_latency_ms=config.final_synth_latency_ms,
    )
    try:
        report = asyncio.run(run_benchmark(bench_config))
    except BenchError as exc:
        raise click.ClickException(str(exc))
    bundle = write_report_bundle(report, Path(report_out))
    click.echo(format_table(report))
    click.echo(f"report written to {bundle['json'].parent}")
    if not report.ordering_ok:
        for violation in report.violations:
            click.echo(f"ordering violation: {violation}", err=True)
        sys.exit(1)


@main.command()
@click.argument("trace_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--time-scale", type=float, default=0.0, show_default=True)
def replay(trace_path, time_scale):
    """Print a trace's wire lines to stdout on its schedule."""
    try:
        trace = load_trace(trace_path)
    except TraceError as exc:
        raise click.ClickException(str(exc))

    async def run():
        handle = BackendHandle("replay", time_scale=time_scale)

        def emit(event):
            click.echo(encode_event(event))

        await run_backend(handle, trace, emit)

    asyncio.run(run())


@main.command("validate-trace")
@click.argument("trace_path", type=click.Path(exists=True, dir_okay=False))
def validate_trace(trace_path):
    """Exit 0 iff the trace file parses and satisfies the stream grammar."""
    try:
        trace = load_trace(trace_path)
    except TraceError as exc:
        click.echo(f"invalid: {exc}", err=True)
        sys.exit(1)
    click.echo(
        f"ok: {trace.scenario}, {len(trace.steps)} steps, "
        f"{trace.total_duration_ms:.0f} ms"
    )


if __name__ == "__main__":
    main()
