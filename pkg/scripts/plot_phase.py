"""Plot success rates of an experiment CSV against the gap p - q.

usage: python scripts/plot_phase.py results.csv [--out phase.png]

One line per (n, m, r, k) group and metric, with standard-error bars.
"""
import argparse
import csv
import sys
from collections import defaultdict
from pathlib import Path

import matplotlib
matplotlib.use('Agg')
import matplotlib.pyplot as plt

METRICS = {
    'cert_rate': 'certificate',
    'exact_rate_exhaustive': 'exhaustive',
    'exact_rate_local_search': 'local search',
    'exact_rate_conditional_gradient': 'conditional gradient',
}


def load(path):
    series = defaultdict(list)
    with open(path, newline='') as handle:
        for row in csv.DictReader(handle):
            if row['row_type'] != 'aggregate':
                continue
            group = (row['n'], row['m'], row['r'], row['k'])
            gap = float(row['p']) - float(row['q'])
            trials = int(row['completed'])
            for column, label in METRICS.items():
                if row.get(column):
                    rate = float(row[column])
                    se = (rate * (1 - rate) / trials) ** 0.5 if trials else 0.0
                    series[(group, label)].append((gap, rate, se))
    return series


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument('csv', type=Path)
    parser.add_argument('--out', type=Path, default=Path('phase.png'))
    args = parser.parse_args(argv)

    series = load(args.csv)
    if not series:
        print(f"{args.csv}: no aggregate rows with success rates", file=sys.stderr)
        return 1

    fig, ax = plt.subplots(figsize=(7, 4.5))
    for ((n, m, r, k), label), points in sorted(series.items()):
        points.sort()
        gaps, rates, errors = zip(*points)
        ax.errorbar(gaps, rates, yerr=errors, marker='o', capsize=3, label=f"{label} n={n} m={m} r={r} k={k}")
    ax.axhline(0.9, color='grey', linestyle=':', linewidth=1)
    ax.set_xlabel('p - q')
    ax.set_ylabel('success rate')
    ax.set_ylim(-0.05, 1.05)
    ax.legend(fontsize='small')
    fig.tight_layout()
    fig.savefig(args.out, dpi=150)
    print(f"wrote {args.out}")
    return 0


if __name__ == '__main__':
    sys.exit(main())
