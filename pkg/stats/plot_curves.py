"""
Plots first-try accuracy against training size for one or more bench CSVs, with the Wilson intervals as error bars.

Usage: python -m stats.plot_curves out.png bench_one.csv [bench_two.csv ...]
"""
import csv
import pathlib
import sys

import matplotlib

matplotlib.use('Agg')
import matplotlib.pyplot as plt  # noqa: E402


def read_curve(path):
    with open(path, newline='') as f:
        rows = [{k: float(v) for k, v in row.items()} for row in csv.DictReader(f)]
    return {k: [r[k] for r in rows] for k in ('training_size', 'gmm_accuracy', 'baseline_accuracy', 'gmm_ci',
                                               'baseline_ci')}


def plot(out_path, csv_paths):
    fig, ax = plt.subplots(figsize=(7, 4.5))
    for path in csv_paths:
        curve = read_curve(path)
        name = pathlib.Path(path).stem
        ax.errorbar(curve['training_size'], curve['gmm_accuracy'], yerr=curve['gmm_ci'], marker='o', capsize=3,
                    label=f"{name}: mixture model")
        ax.errorbar(curve['training_size'], curve['baseline_accuracy'], yerr=curve['baseline_ci'], marker='s',
                    capsize=3, linestyle='--', label=f"{name}: random search")
    ax.set_xscale('log')
    ax.set_xlabel("training set size")
    ax.set_ylabel("first-try accuracy")
    ax.set_ylim(0, 1)
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)


if __name__ == '__main__':
    if len(sys.argv) < 3:
        print(__doc__.strip())
        sys.exit(1)
    plot(sys.argv[1], sys.argv[2:])
