#!/usr/bin/env python3
"""Run every config in configs/ and summarize the headline checks.

Usage: python3 scripts/reproduce_figures.py [--out results] [--seed S] [--only fig1 fig5]
"""
from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path

from limfb.harness import load_config, run

ROOT = Path(__file__).resolve().parent.parent


def summarize(outcome) -> list[str]:
    res, exp = outcome.result, outcome.metadata["config"]["experiment"]
    lines = []
    if exp in ("fig1_mrt_rate_vs_B", "fig3_zf_rate_vs_B"):
        sims = {r.x: r for r in res if r.source == "simulation"}
        gaps = [(x, a.value - sims[x].value) for x, a in
                ((r.x, r) for r in res.series("analytic_scvq")) if x in sims]
        worst = max(gaps, key=lambda g: g[1])
        lines.append(f"largest analytic-minus-simulation gap {worst[1]:.3f} bps/Hz at B={worst[0]:g}")
    elif exp in ("fig2_mrt_bstar_vs_Tc", "fig4_zf_bstar_vs_Tc"):
        for opt, bnd in zip(res.series("optimum_exhaustive"), res.series("bound_ceil")):
            lines.append(f"Tc={opt.x:>7g}  B*={opt.value:>4g}  bound={bnd.value:>4g}")
    elif exp == "fig5_crossover":
        cross = outcome.metadata["crossover"]
        for c in cross["crossovers"]:
            lines.append(f"ZF overtakes MRT near Tc={c['threshold_Tc']:.0f} "
                         f"(between {c['between'][0]:g} and {c['between'][1]:g})")
        lines.append(f"sign changes: {cross['sign_changes']}")
    elif exp == "ccdf":
        sim = [r for r in res if r.source == "simulation"]
        ana = {r.x: r.value for r in res.series("analytic")}
        sup = max(abs(r.value - ana[r.x]) for r in sim) if sim else math.nan
        lines.append(f"sup |analytic - simulation| = {sup:.4f}")
    return lines


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out", default=str(ROOT / "results"))
    parser.add_argument("--seed", type=int)
    parser.add_argument("--only", nargs="*", help="config name prefixes to run")
    args = parser.parse_args()

    status = 0
    for path in sorted((ROOT / "configs").glob("*.json")):
        if args.only and not any(path.stem.startswith(p) for p in args.only):
            continue
        cfg = load_config(path).with_seed(args.seed).with_out_dir(args.out)
        outcome = run(cfg)
        print(f"[{path.stem}] {outcome.csv_path} ({outcome.metadata['wall_time_s']:.1f} s)")
        for line in summarize(outcome):
            print("    " + line)
        if outcome.failed_rows:
            print(f"    {outcome.failed_rows} failed row(s)")
            status = 3
    return status


if __name__ == "__main__":
    sys.exit(main())
