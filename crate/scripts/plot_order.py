#!/usr/bin/env python3
"""Log-log plot of model prediction error against step size from `hmpc verify`.

    python3 scripts/plot_order.py OUT_DIR [figure.png]

Reads OUT_DIR/order_report.csv (columns: section, step_size,
relinearized_error, frozen_error, win_rate, neglected_term_scale, trials).
"""
import csv
import sys
from collections import defaultdict

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt


def main():
    out = sys.argv[1]
    figure = sys.argv[2] if len(sys.argv) > 2 else f"{out}/order.png"
    sections = defaultdict(list)
    with open(f"{out}/order_report.csv", newline="") as f:
        for r in csv.DictReader(f):
            sections[r["section"]].append(r)
    fig, panels = plt.subplots(1, len(sections), figsize=(5 * len(sections), 4), squeeze=False)
    for ax, (name, rows) in zip(panels[0], sorted(sections.items())):
        h = [float(r["step_size"]) for r in rows]
        ax.loglog(h, [float(r["relinearized_error"]) for r in rows], "o-", label="re-linearized")
        ax.loglog(h, [float(r["frozen_error"]) for r in rows], "s-", label="frozen")
        ax.loglog(h, [float(r["neglected_term_scale"]) for r in rows], "k:", label="|dq|^2")
        ax.set_xlabel("step size [rad]")
        ax.set_ylabel("mean error")
        ax.set_title(name)
        ax.legend()
    fig.tight_layout()
    fig.savefig(figure, dpi=120)
    print(figure)


if __name__ == "__main__":
    main()
