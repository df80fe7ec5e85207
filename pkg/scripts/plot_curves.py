#!/usr/bin/env python3
"""Render result CSVs to PNG, one panel per file. Needs matplotlib.

Usage: python3 scripts/plot_curves.py results/fig1_mrt_rate_vs_B.csv [more.csv ...]
"""
from __future__ import annotations

import argparse
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from limfb.results import CurveResult  # noqa: E402

LOG_X = {"Tc", "gamma"}
AXIS_LABEL = {"B": "feedback bits B", "Tc": "coherence time Tc (symbols)",
              "gamma": "SIR threshold", "N": "antennas N", "beta": "pathloss exponent"}


def plot(csv_path: Path) -> Path:
    result = CurveResult.read_csv(csv_path)
    meta_path = csv_path.with_suffix(".json")
    axis = "B"
    if meta_path.exists():
        axis = json.loads(meta_path.read_text())["config"]["axis"]
    fig, ax = plt.subplots(figsize=(6, 4))
    for name in result.series_names():
        rows = [r for r in result.series(name) if r.status == "ok"]
        xs = [r.x for r in rows]
        ys = [r.value for r in rows]
        if rows and rows[0].source == "simulation":
            err = [[r.value - r.ci_low for r in rows], [r.ci_high - r.value for r in rows]]
            ax.errorbar(xs, ys, yerr=err, fmt="o", ms=3, capsize=2, label=name)
        else:
            ax.plot(xs, ys, "-", marker="." if len(xs) < 30 else None, label=name)
    if axis in LOG_X:
        ax.set_xscale("log")
    ax.set_xlabel(AXIS_LABEL.get(axis, axis))
    ax.set_title(csv_path.stem)
    ax.grid(alpha=0.3)
    ax.legend(fontsize=7)
    out = csv_path.with_suffix(".png")
    fig.tight_layout()
    fig.savefig(out, dpi=120)
    plt.close(fig)
    return out


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("csv", nargs="+", type=Path)
    for path in parser.parse_args().csv:
        print(plot(path))


if __name__ == "__main__":
    main()
