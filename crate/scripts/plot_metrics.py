#!/usr/bin/env python3
"""Plot a caseidx metrics CSV: one PNG per experiment.

usage: plot_metrics.py metrics.csv [out_dir]
"""

import sys
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import pandas as pd

COLUMNS = [
    "experiment", "dataset", "records", "parameter_name", "parameter", "run",
    "elapsed_s", "space_bytes", "accuracy", "cache_hits", "cache_misses",
]

# experiment -> (y column, y label, log x)
PLOTS = {
    "exp1_index": ("elapsed_s", "index time (s)", True),
    "exp2_knn": ("elapsed_s", "seconds per query", False),
    "exp3_range": ("elapsed_s", "seconds per query", True),
    "exp4_space": ("space_bytes", "estimated bytes", True),
    "exp5_accuracy": ("accuracy", "accuracy", False),
}


def main(argv):
    if len(argv) < 2:
        print(__doc__.strip(), file=sys.stderr)
        return 2
    src = Path(argv[1])
    out = Path(argv[2]) if len(argv) > 2 else src.parent
    df = pd.read_csv(src)
    if list(df.columns) != COLUMNS:
        print(f"{src}: unexpected header {list(df.columns)}", file=sys.stderr)
        return 2
    out.mkdir(parents=True, exist_ok=True)
    for exp, rows in df.groupby("experiment"):
        if exp not in PLOTS:
            continue
        y, label, logx = PLOTS[exp]
        # mean over runs, with min/max as the error band
        g = rows.groupby("parameter")[y].agg(["mean", "min", "max"]).reset_index()
        fig, ax = plt.subplots(figsize=(6, 4))
        ax.plot(g["parameter"], g["mean"], marker="o")
        ax.fill_between(g["parameter"], g["min"], g["max"], alpha=0.2)
        ax.set_xlabel(rows["parameter_name"].iloc[0])
        ax.set_ylabel(label)
        ax.set_title(f"{exp} ({rows['dataset'].iloc[0]})")
        if logx:
            ax.set_xscale("log")
        if exp == "exp5_accuracy":
            ax.set_ylim(0, 1.05)
        fig.tight_layout()
        path = out / f"{exp}.png"
        fig.savefig(path, dpi=120)
        plt.close(fig)
        print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main(sys.argv))
