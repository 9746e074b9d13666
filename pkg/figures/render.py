#!/usr/bin/env python3
"""Render plot-data CSV emitted by the kam3bp CLI into figures.

Usage:
    render.py <csv> <out.png> [--style paper]

The CSV has columns (x, y, series).  Series named ``<name>_lower`` /
``<name>_upper`` are drawn as a shaded region between the two boundaries;
everything else is a line.  No numbers are computed here: any numeric
disagreement with the source data is a bug on the emitting side.
"""

import argparse
import csv
import sys
from collections import OrderedDict

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

STYLES = {
    "paper": {
        "curve_C": dict(color="tab:blue", lw=2.0),
        "slope_k_minus": dict(color="tab:orange", lw=1.4),
        "slope_k_plus": dict(color="tab:green", lw=1.4),
        "L0": dict(color="tab:blue", alpha=0.35),
        "L1": dict(color="tab:green", alpha=0.45),
    },
    "plain": {},
}


def read_series(path):
    """CSV -> ordered {series: ([x...], [y...])}; malformed rows raise."""
    series = OrderedDict()
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["x", "y", "series"]:
            raise ValueError(f"unexpected header {header!r}")
        for i, row in enumerate(reader, start=2):
            if len(row) != 3:
                raise ValueError(f"malformed row {i}: {row!r}")
            x, y, label = float(row[0]), float(row[1]), row[2]
            series.setdefault(label, ([], []))
            series[label][0].append(x)
            series[label][1].append(y)
    return series


def render(csv_path, out_image, style="paper"):
    series = read_series(csv_path)
    styles = STYLES.get(style, {})
    fig, ax = plt.subplots(figsize=(6.0, 4.5), dpi=110)
    regions = {}
    for label in list(series):
        if label.endswith("_lower") or label.endswith("_upper"):
            base = label.rsplit("_", 1)[0]
            regions.setdefault(base, {})[label.rsplit("_", 1)[1]] = series.pop(label)
    for base, parts in regions.items():
        if "lower" in parts and "upper" in parts:
            lo_x, lo_y = parts["lower"]
            up_x, up_y = parts["upper"]
            common = sorted(set(lo_x) & set(up_x))
            lo_map = dict(zip(lo_x, lo_y))
            up_map = dict(zip(up_x, up_y))
            kw = styles.get(base, dict(alpha=0.4))
            ax.fill_between(common, [lo_map[x] for x in common],
                            [up_map[x] for x in common], label=base, **kw)
    for label, (xs, ys) in series.items():
        ax.plot(xs, ys, label=label, **styles.get(label, {}))
    if series or regions:
        ax.legend(loc="upper left", fontsize=8)
    ax.set_xlabel("x")
    ax.set_ylabel("y")
    fig.savefig(out_image)
    plt.close(fig)
    return out_image


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("csv")
    ap.add_argument("out")
    ap.add_argument("--style", default="paper", choices=sorted(STYLES))
    args = ap.parse_args(argv)
    try:
        render(args.csv, args.out, style=args.style)
    except (OSError, ValueError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
