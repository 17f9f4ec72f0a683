#!/usr/bin/env python3
"""Render plot-data CSVs to PNG. Plot rendering stays out of the core
package so its outputs can be byte-exact; this helper is optional.

    chaineval plot-data --scores demo/scores.jsonl --mode info_trend --out demo/trend.csv
    python scripts/render_figures.py --csv demo/trend.csv --mode info_trend --out demo/trend.png
"""

import argparse
import csv
from collections import defaultdict


def render_info_trend(rows, out):
    import matplotlib.pyplot as plt

    by_chain = defaultdict(list)
    for row in rows:
        by_chain[row["chain_id"]].append((int(row["step_index"]), float(row["gain"])))
    fig, ax = plt.subplots(figsize=(7, 4))
    for chain_id, points in sorted(by_chain.items())[:12]:
        points.sort()
        ax.plot([p[0] for p in points], [p[1] for p in points], marker="o", label=chain_id)
    ax.axhline(0.0, color="gray", linewidth=0.8)
    ax.set_xlabel("step")
    ax.set_ylabel("information gain (bits)")
    if len(by_chain) <= 12:
        ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(out, dpi=150)


def render_api_rates(rows, out):
    import matplotlib.pyplot as plt

    by_group = defaultdict(list)
    for row in rows:
        by_group[row["group"]].append((int(row["k"]), float(row["fraction"])))
    fig, ax = plt.subplots(figsize=(6, 4))
    for group, points in sorted(by_group.items()):
        points.sort()
        ax.plot([p[0] for p in points], [p[1] for p in points], marker="s", label=group)
    ax.set_xlabel("window size k")
    ax.set_ylabel("fraction of chains with all-positive windows")
    ax.set_ylim(0, 1.05)
    ax.legend()
    fig.tight_layout()
    fig.savefig(out, dpi=150)


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--csv", required=True)
    parser.add_argument("--mode", choices=["info_trend", "api_rates"], required=True)
    parser.add_argument("--out", required=True)
    args = parser.parse_args()

    with open(args.csv, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    if args.mode == "info_trend":
        render_info_trend(rows, args.out)
    else:
        render_api_rates(rows, args.out)
    print(f"wrote {args.out}")


if __name__ == "__main__":
    main()
