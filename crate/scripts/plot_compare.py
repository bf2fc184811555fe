#!/usr/bin/env python3
"""Box plots of tracking error per task axis from `hmpc compare` output.

    python3 scripts/plot_compare.py OUT_DIR [figure.png]

Reads OUT_DIR/boxstats.csv (columns: scenario, chain, controller, axis,
count, median, q1, q3, iqr, whisker_low, whisker_high, outliers, max) and
draws one panel per scenario with the three controllers side by side.
"""
import csv
import sys
from collections import defaultdict

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

AXES = ["px", "py", "pz", "ox", "oy", "oz"]
CONTROLLERS = ["hmpc", "mpc", "hqp"]
COLORS = {"hmpc": "tab:blue", "mpc": "tab:orange", "hqp": "tab:green"}


def main():
    out = sys.argv[1]
    figure = sys.argv[2] if len(sys.argv) > 2 else f"{out}/boxstats.png"
    rows = defaultdict(dict)
    with open(f"{out}/boxstats.csv", newline="") as f:
        for r in csv.DictReader(f):
            rows[r["scenario"]][(r["controller"], r["axis"])] = r
    scenarios = sorted(rows)
    fig, panels = plt.subplots(len(scenarios), 1, figsize=(10, 2.6 * len(scenarios)), squeeze=False)
    for ax, sc in zip(panels[:, 0], scenarios):
        for k, ctrl in enumerate(CONTROLLERS):
            stats = []
            for axis in AXES:
                r = rows[sc].get((ctrl, axis))
                if r is None:
                    continue
                stats.append({
                    "med": float(r["median"]),
                    "q1": float(r["q1"]),
                    "q3": float(r["q3"]),
                    "whislo": float(r["whisker_low"]),
                    "whishi": float(r["whisker_high"]),
                    "fliers": [],
                    "label": axis,
                })
            positions = [i * 4 + k for i in range(len(stats))]
            b = ax.bxp(stats, positions=positions, widths=0.8, patch_artist=True, showfliers=False)
            for patch in b["boxes"]:
                patch.set_facecolor(COLORS[ctrl])
        ax.set_xticks([i * 4 + 1 for i in range(len(AXES))], AXES)
        ax.set_yscale("symlog", linthresh=1e-6)
        ax.set_title(sc)
        ax.set_ylabel("|error|")
    handles = [plt.Rectangle((0, 0), 1, 1, color=COLORS[c]) for c in CONTROLLERS]
    fig.legend(handles, CONTROLLERS, loc="upper right")
    fig.tight_layout()
    fig.savefig(figure, dpi=120)
    print(figure)


if __name__ == "__main__":
    main()
