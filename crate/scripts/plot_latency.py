#!/usr/bin/env python3
"""Plot latency distributions from a `tiersim run --dump-latencies` CSV.

usage: plot_latency.py latencies.csv [out.png]
"""
import csv
import sys
from collections import defaultdict

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt


def main():
    if len(sys.argv) < 2:
        sys.exit(__doc__)
    by_class = defaultdict(list)
    with open(sys.argv[1], newline="") as f:
        for row in csv.DictReader(f):
            by_class[row["class"]].append((int(row["t_complete_ps"]) - int(row["t_inject_ps"])) / 1000.0)

    fig, axes = plt.subplots(len(by_class), 1, figsize=(7, 2.6 * len(by_class)), squeeze=False)
    for ax, (cls, lat) in zip(axes[:, 0], sorted(by_class.items())):
        ax.hist(lat, bins=80, log=True)
        ax.set_title(f"{cls} (n={len(lat)}, mean={sum(lat) / len(lat):.1f} ns)")
        ax.set_xlabel("latency [ns]")
    fig.tight_layout()
    out = sys.argv[2] if len(sys.argv) > 2 else "latency.png"
    fig.savefig(out, dpi=120)
    print(f"wrote {out}")


if __name__ == "__main__":
    main()
