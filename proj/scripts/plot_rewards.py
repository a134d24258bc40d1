#!/usr/bin/env python3
"""Plot episode_reward_mean against env_steps for a set of run directories.

Runs named <variant>_<setting>_s<seed> are grouped by everything before the
seed; each group is drawn as its seed mean with a min/max band.

    scripts/plot_rewards.py runs/grid --out rewards.png
"""
import argparse
import re
from collections import defaultdict
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
import pandas as pd  # noqa: E402


def load_runs(root):
    groups = defaultdict(list)
    for csv in sorted(Path(root).glob("*/metrics.csv")):
        name = csv.parent.name
        group = re.sub(r"_s\d+$", "", name)
        frame = pd.read_csv(csv)
        groups[group].append(frame[["env_steps", "episode_reward_mean"]].dropna())
    return groups


def plot_group(ax, label, frames, points=200):
    top = min(f["env_steps"].max() for f in frames)
    grid = np.linspace(0, top, points)
    curves = np.array([np.interp(grid, f["env_steps"], f["episode_reward_mean"]) for f in frames])
    ax.plot(grid, curves.mean(axis=0), label=f"{label} (n={len(frames)})")
    ax.fill_between(grid, curves.min(axis=0), curves.max(axis=0), alpha=0.2)


def main():
    parser = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("root", help="directory holding one sub-directory per run")
    parser.add_argument("--out", default="rewards.png")
    parser.add_argument("--filter", default="", help="regex on group names")
    args = parser.parse_args()

    groups = {k: v for k, v in load_runs(args.root).items() if re.search(args.filter, k)}
    if not groups:
        raise SystemExit(f"no runs with metrics.csv under {args.root}")
    fig, ax = plt.subplots(figsize=(8, 5))
    for label in sorted(groups):
        plot_group(ax, label, groups[label])
    ax.set_xlabel("environment steps")
    ax.set_ylabel("episode reward (window mean)")
    ax.legend(fontsize="small")
    fig.tight_layout()
    fig.savefig(args.out, dpi=120)
    print(f"wrote {args.out}")


if __name__ == "__main__":
    main()
