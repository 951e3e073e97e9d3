"""Benchmark report writers: JSON, CSV, aligned text table, and figures.

One bundle call drops everything next to each other in the output directory
so a single bench invocation leaves machine-readable data (JSON + CSV), a
human-readable comparison table, and rendered charts.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .bench import BenchmarkReport, Topology

_TOPOLOGY_LABELS = {
    Topology.MONOLITHIC: "Monolithic",
    Topology.EXPLAINER_ONLY: "Explainer-Only",
    Topology.ASYNC_NARRATION: "Async",
}

_TABLE_ORDER = (Topology.MONOLITHIC, Topology.EXPLAINER_ONLY, Topology.ASYNC_NARRATION)


def report_to_dict(report: BenchmarkReport) -> dict:
    return {
        "trials": report.trials,
        "time_scale": report.time_scale,
        "ordering_ok": report.ordering_ok,
        "violations": report.violations,
        "runtime_s": round(report.runtime_s, 3),
        "cells": [
            {
                "scenario": cell.scenario,
                "topology": cell.topology.value,
                "ttfa_mean_ms": round(cell.ttfa_mean_ms, 3),
                "ttfa_p50_ms": round(cell.ttfa_p50_ms, 3),
                "ttfa_p95_ms": round(cell.ttfa_p95_ms, 3),
                "ttfa_samples_ms": [round(v, 3) for v in cell.ttfa_samples_ms],
                "quality_score": round(cell.quality_score, 2),
                "fidelity": (
                    round(cell.fidelity, 2) if cell.fidelity is not None else None
                ),
                "trials": cell.trials,
                "time_scale": cell.time_scale,
            }
            for cell in report.cells
        ],
    }


def write_json(report: BenchmarkReport, path: Path) -> None:
    path.write_text(json.dumps(report_to_dict(report), indent=2) + "\n")


def write_csv(report: BenchmarkReport, path: Path) -> None:
    with path.open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(
            [
                "scenario",
                "topology",
                "ttfa_mean_ms",
                "ttfa_p50_ms",
                "ttfa_p95_ms",
                "quality_score",
                "fidelity",
                "trials",
                "time_scale",
            ]
        )
        for cell in report.cells:
            writer.writerow(
                [
                    cell.scenario,
                    cell.topology.value,
                    f"{cell.ttfa_mean_ms:.3f}",
                    f"{cell.ttfa_p50_ms:.3f}",
                    f"{cell.ttfa_p95_ms:.3f}",
                    f"{cell.quality_score:.2f}",
                    f"{cell.fidelity:.2f}" if cell.fidelity is not None else "",
                    cell.trials,
                    cell.time_scale,
                ]
            )


def format_table(report: BenchmarkReport) -> str:
    """Aligned comparison table: scenarios x metrics against each topology."""
    present = [t for t in _TABLE_ORDER if any(c.topology is t for c in report.cells)]
    headers = ["Scenario", "Metric"] + [_TOPOLOGY_LABELS[t] for t in present]
    rows: list[list[str]] = []
    scenarios = []
    for cell in report.cells:
        if cell.scenario not in scenarios:
            scenarios.append(cell.scenario)

    def lookup(scenario, topology):
        for cell in report.cells:
            if cell.scenario == scenario and cell.topology is topology:
                return cell
        return None

    for scenario in scenarios:
        ttfa_row = [scenario.title(), "TTFA (s)"]
        quality_row = ["", "Score"]
        for topology in present:
            cell = lookup(scenario, topology)
            ttfa_row.append(f"{cell.ttfa_mean_ms / 1000.0:.3f}" if cell else "-")
            quality_row.append(f"{cell.quality_score:.2f}" if cell else "-")
        rows.append(ttfa_row)
        rows.append(quality_row)

    fidelity_cells = [c for c in report.cells if c.fidelity is not None]
    if fidelity_cells:
        fidelity = sum(c.fidelity for c in fidelity_cells) / len(fidelity_cells)
        fid_row = ["All Scenarios", "Process Fidelity"]
        for topology in present:
            fid_row.append(
                f"{fidelity:.2f}" if topology is Topology.ASYNC_NARRATION else "N/A"
            )
        rows.append(fid_row)

    widths = [
        max(len(line[i]) for line in [headers] + rows) for i in range(len(headers))
    ]

    def render(line):
        return "  ".join(text.ljust(widths[i]) for i, text in enumerate(line)).rstrip()

    out = [render(headers), render(["-" * w for w in widths])]
    out.extend(render(row) for row in rows)
    meta = (
        f"trials={report.trials}  time_scale={report.time_scale}  "
        f"ordering_ok={report.ordering_ok}  runtime={report.runtime_s:.1f}s"
    )
    return "\n".join(out + ["", meta]) + "\n"


def write_figures(report: BenchmarkReport, out_dir: Path) -> list[Path]:
    """Render TTFA and quality charts next to the tabular output."""
    paths = []
    scenarios = []
    for cell in report.cells:
        if cell.scenario not in scenarios:
            scenarios.append(cell.scenario)
    present = [t for t in _TABLE_ORDER if any(c.topology is t for c in report.cells)]

    def values(topology, attr):
        out = []
        for scenario in scenarios:
            match = [
                c
                for c in report.cells
                if c.scenario == scenario and c.topology is topology
            ]
            out.append(getattr(match[0], attr) if match else float("nan"))
        return out

    x = range(len(scenarios))
    width = 0.8 / max(len(present), 1)

    fig, ax = plt.subplots(figsize=(7.0, 4.2))
    for i, topology in enumerate(present):
        offsets = [xi + (i - (len(present) - 1) / 2) * width for xi in x]
        ax.bar(
            offsets,
            values(topology, "ttfa_mean_ms"),
            width=width,
            label=_TOPOLOGY_LABELS[topology],
        )
    ax.set_yscale("log")
    ax.set_ylabel("Time to first audio (ms, log scale)")
    ax.set_xticks(list(x))
    ax.set_xticklabels([s.title() for s in scenarios])
    ax.set_title(f"TTFA by topology (time_scale={report.time_scale})")
    ax.legend()
    ax.grid(True, axis="y", alpha=0.3)
    fig.tight_layout()
    ttfa_path = out_dir / "ttfa_by_topology.png"
    fig.savefig(ttfa_path, dpi=120)
    plt.close(fig)
    paths.append(ttfa_path)

    fig, ax = plt.subplots(figsize=(7.0, 4.2))
    for i, topology in enumerate(present):
        offsets = [xi + (i - (len(present) - 1) / 2) * width for xi in x]
        ax.bar(
            offsets,
            values(topology, "quality_score"),
            width=width,
            label=_TOPOLOGY_LABELS[topology],
        )
    ax.set_ylim(0, 105)
    ax.set_ylabel("Blended quality score")
    ax.set_xticks(list(x))
    ax.set_xticklabels([s.title() for s in scenarios])
    ax.set_title("Quality score by topology")
    ax.legend()
    ax.grid(True, axis="y", alpha=0.3)
    fig.tight_layout()
    quality_path = out_dir / "quality_by_topology.png"
    fig.savefig(quality_path, dpi=120)
    plt.close(fig)
    paths.append(quality_path)
    return paths


def write_report_bundle(report: BenchmarkReport, out_dir: Path) -> dict[str, Path]:
    """Write JSON + CSV + text table + figures into `out_dir`."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    json_path = out_dir / "report.json"
    csv_path = out_dir / "report.csv"
    table_path = out_dir / "report.txt"
    write_json(report, json_path)
    write_csv(report, csv_path)
    table_path.write_text(format_table(report))
    figures = write_figures(report, out_dir)
    bundle = {"json": json_path, "csv": csv_path, "table": table_path}
    for figure in figures:
        bundle[figure.stem] = figure
    return bundle
