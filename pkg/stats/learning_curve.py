"""
Runs the first-try benchmark for many seeds and saves every (seed, training size) result to a CSV.

EM on a handful of points is unstable, so a single seed's curve can wobble; this shows how much. It prints, per
training size, the median accuracy over seeds, the spread between the best and worst seed, and how many seeds beat
the random baseline.

Usage: python -m stats.learning_curve [config.json] [out.csv]
"""
import csv
import sys

from oms import sim
from stats.utils import SweepRow, summarize, timer

NUM_SEEDS = 20
NUM_THREADS = 4
# fewer trials than a full bench; the spread between seeds dominates the trial noise at this size
NUM_TRIALS = 20_000


def sweep(config_path, out_path, seeds=NUM_SEEDS, n_trials=NUM_TRIALS):
    base = sim.load_experiment_config(config_path).copy(update={'n_trials': n_trials})
    rows = []
    for seed in range(seeds):
        with timer('SWEEP', f'seed {seed}'):
            curve = sim.run_experiment(base.copy(update={'seed': seed}), threads=NUM_THREADS)
        for point in curve.points:
            rows.append(SweepRow(
                seed=seed,
                training_size=point.training_size,
                selected_k=point.selected_k,
                gmm_accuracy=point.gmm_accuracy,
                baseline_accuracy=point.baseline_accuracy,
                gmm_ci=point.gmm_ci,
                baseline_ci=point.baseline_ci
            ))

    with open(out_path, 'w', newline='') as f:
        writer = csv.DictWriter(f, fieldnames=SweepRow.__fields__.keys())
        writer.writeheader()
        for row in rows:
            writer.writerow(row.dict())
    return rows


if __name__ == '__main__':
    config_path = sys.argv[1] if len(sys.argv) > 1 else 'configs/distribution_one.json'
    out_path = sys.argv[2] if len(sys.argv) > 2 else 'learning_curve.csv'
    with timer('MAIN', 'all'):
        results = sweep(config_path, out_path)
    print(f"{'size':>6} {'median':>8} {'spread':>8} {'baseline':>9} {'beats':>6}")
    for s in summarize(results):
        print(f"{s.training_size:>6} {s.median_gmm:>8.4f} {s.spread_gmm:>8.4f} {s.median_baseline:>9.4f} "
              f"{s.runs_beating_baseline:>3}/{s.runs}")
