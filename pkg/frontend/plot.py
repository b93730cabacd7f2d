#!/usr/bin/env python3
"""Render simulator CSV sweeps as line charts.

    plot.py --csv <path> --preset <fig5|fig6|fig7> --out <path>

Consumes only the CSV files the simulator CLI emits; each preset knows
the sweep column, the metric columns to draw, and whether the metric
axis is logarithmic. Rerunning overwrites the output deterministically.
"""

from __future__ import annotations

import argparse
import csv
from dataclasses import dataclass, field

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


@dataclass(frozen=True)
class PlotSpec:
    """What to read and what to draw."""

    csv_path: str
    x_column: str
    y_columns: tuple[tuple[str, str], ...]  # (column, legend label)
    out_path: str
    log_y: bool = False
    x_label: str = ""
    y_label: str = ""
    title: str = ""


PRESETS = {
    "fig5": dict(
        x_column="side_m",
        y_columns=(("gain_perfect", "perfect registration"),
                   ("gain_baba", "AB-SRA + BABA"),
                   ("gain_conventional", "AB-SRA + conventional")),
        log_y=False,
        x_label="sensing unit side (m)",
        y_label="fused echo power gain",
        title="Space registration gain",
    ),
    "fig7": dict(
        x_column="snr_db",
        y_columns=(("rmse_range_single_m", "single BS"),
                   ("rmse_range_data_m", "data-level fusion"),
                   ("rmse_range_signal_m", "signal-level fusion")),
        log_y=True,
        x_label="per-link SNR (dB)",
        y_label="range RMSE (m)",
        title="Cooperative active sensing",
    ),
    "fig6": dict(
        x_column="passive_snr_db",
        y_columns=(("nmse_active", "active only"),
                   ("nmse_passive", "passive only"),
                   ("nmse_coop", "cooperative (CSCC)")),
        log_y=True,
        x_label="passive echo SNR (dB)",
        y_label="ranging NMSE",
        title="Cooperative active and passive sensing",
    ),
}


def spec_for_preset(preset: str, csv_path: str, out_path: str) -> PlotSpec:
    if preset not in PRESETS:
        raise ValueError(f"unknown preset {preset!r}, expected one of "
                         f"{sorted(PRESETS)}")
    return PlotSpec(csv_path=csv_path, out_path=out_path, **PRESETS[preset])


def read_columns(csv_path: str, names) -> dict[str, list[float]]:
    with open(csv_path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise ValueError(f"{csv_path}: empty CSV")
        missing = [n for n in names if n not in reader.fieldnames]
        if missing:
            raise ValueError(f"{csv_path}: missing columns {missing}")
        out: dict[str, list[float]] = {n: [] for n in names}
        for row in reader:
            for n in names:
                out[n].append(float(row[n]))
    if not next(iter(out.values())):
        raise ValueError(f"{csv_path}: no data rows")
    return out


def build_figure(spec: PlotSpec):
    """Figure for a spec; separate from render so tests can inspect it."""
    names = [spec.x_column] + [c for c, _ in spec.y_columns]
    data = read_columns(spec.csv_path, names)
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    x = data[spec.x_column]
    markers = ["o", "s", "^", "d", "v"]
    for (column, label), marker in zip(spec.y_columns, markers):
        ax.plot(x, data[column], marker=marker, markersize=4, label=label)
    if spec.log_y:
        ax.set_yscale("log")
    ax.set_xlabel(spec.x_label or spec.x_column)
    ax.set_ylabel(spec.y_label or "value")
    if spec.title:
        ax.set_title(spec.title)
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.tight_layout()
    return fig


def render(spec: PlotSpec) -> str:
    """Write the chart for a spec; returns the output path."""
    fig = build_figure(spec)
    fig.savefig(spec.out_path, dpi=150)
    plt.close(fig)
    return spec.out_path


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--csv", required=True, help="simulator sweep CSV")
    parser.add_argument("--preset", required=True, choices=sorted(PRESETS))
    parser.add_argument("--out", required=True, help="output image path")
    args = parser.parse_args(argv)
    render(spec_for_preset(args.preset, args.csv, args.out))
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
