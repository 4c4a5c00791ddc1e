"""
First-try search benchmark.

An object is spawned at one of a few cluster centers (chosen by prior) plus isotropic Gaussian placement noise.
A mixture is fit on a sampled history of placements, then each trial spawns a fresh object and checks whether the
first location proposed by the model, and the first location of a random search over the true centers, land
within the hit radius. Both policies see the same spawn.

Seeds: the training set for size n comes from SeedSequence(seed, spawn_key=(n, TRAIN_STREAM)); trial i from
SeedSequence(seed, spawn_key=(n, TRIAL_STREAM, i)). Trials are aggregated as counts, so the curve does not depend on
how trials are split across threads.
"""
import csv
import json
import logging
import math
import pathlib
import re
from concurrent.futures import ThreadPoolExecutor
from typing import Iterable, List, TextIO, Tuple, Union

import numpy as np
import pydantic
from scipy import stats

from . import errors, gmm, search
from .models import AccuracyCurve, AccuracyPoint, Cluster, ExperimentConfig, GmmModel, GroundTruthDistribution, \
    HitCriterion, SearchStrategy, TrialOutcome

TRAIN_STREAM = 0
TRIAL_STREAM = 1
TRIALS_PER_CHUNK = 5_000
Z_95 = float(stats.norm.ppf(0.975))
CSV_FIELDS = ('training_size', 'gmm_accuracy', 'baseline_accuracy', 'gmm_ci', 'baseline_ci')

log = logging.getLogger(__name__)

# three household spots, 2 m or more apart
CLUSTER_CENTERS = ((0.0, 0.0, 0.9), (2.0, 0.0, 0.9), (0.0, 2.0, 0.45))
DISTRIBUTION_ONE = GroundTruthDistribution(
    clusters=[Cluster(center=c, prior=p) for c, p in zip(CLUSTER_CENTERS, (0.7, 0.2, 0.1))],
    noise_sigma=0.1
)
DISTRIBUTION_TWO = GroundTruthDistribution(
    clusters=[Cluster(center=c, prior=1 / 3) for c in CLUSTER_CENTERS],
    noise_sigma=0.1
)


# ==== spawning ====
def spawn(distribution: GroundTruthDistribution, rng: np.random.Generator) -> Tuple[np.ndarray, int]:
    """One placement: (location, index of the cluster it was placed around)."""
    index = int(search.draw_index(distribution.priors, rng.random()))
    location = distribution.centers[index] + rng.normal(0.0, distribution.noise_sigma, size=3)
    return location, index


def spawn_many(distribution: GroundTruthDistribution, n: int, rng: np.random.Generator) \
        -> Tuple[np.ndarray, np.ndarray]:
    indices = search.draw_index(distribution.priors, rng.random(n))
    locations = distribution.centers[indices] + rng.normal(0.0, distribution.noise_sigma, size=(n, 3))
    return locations, indices


def generate_training(distribution: GroundTruthDistribution, n: int, rng: np.random.Generator) -> np.ndarray:
    """*n* placements with their cluster labels dropped."""
    if n < 1:
        raise errors.InputError(f"training set size must be >= 1, got {n}")
    locations, _ = spawn_many(distribution, n, rng)
    return locations


# ==== trials ====
def run_trial(
        model: GmmModel,
        distribution: GroundTruthDistribution,
        strategy: SearchStrategy,
        hit_radius: Union[float, HitCriterion],
        rng: np.random.Generator,
        training_size: int = 0,
        trial_index: int = 0) -> TrialOutcome:
    """One paired trial: a single spawn, judged against the model's first pick and the baseline's first pick."""
    truth, _ = spawn(distribution, rng)
    baseline_first = distribution.centers[rng.permutation(distribution.k)[0]]
    if strategy is SearchStrategy.MODE_RANKED:
        candidate = model.means[search.rank_components(model.weights)[0]]
    elif strategy is SearchStrategy.GMM_SAMPLE:
        candidate = search.sample_mixture(model.weights, model.means, model.covariances, 1, rng)[0]
    else:
        raise errors.InputError(f"cannot run trials with strategy {strategy.value}")
    return TrialOutcome(
        training_size=training_size,
        trial_index=trial_index,
        gmm_hit=search.is_hit(candidate, truth, hit_radius),
        baseline_hit=search.is_hit(baseline_first, truth, hit_radius)
    )


def run_experiment(config: ExperimentConfig, threads: int = 1) -> AccuracyCurve:
    """
    For each training size: fit once, run config.n_trials paired trials, report accuracies with Wilson 95%
    half-widths. A size whose fit fails is logged and skipped.
    """
    curve = AccuracyCurve()
    for size in config.training_sizes:
        try:
            model = fit_training_model(config, size)
        except (errors.OMSError, ValueError):
            log.exception(f"fit for training size {size} failed, skipping it")
            curve.skipped_sizes.append(size)
            continue
        gmm_hits, baseline_hits = count_hits(model, config, size, threads)
        n = config.n_trials
        curve.points.append(AccuracyPoint(
            training_size=size,
            gmm_accuracy=gmm_hits / n,
            baseline_accuracy=baseline_hits / n,
            gmm_ci=wilson_halfwidth(gmm_hits, n),
            baseline_ci=wilson_halfwidth(baseline_hits, n),
            n_trials=n,
            selected_k=model.k
        ))
        log.info(f"training size {size}: K={model.k}, gmm {gmm_hits / n:.4f}, baseline {baseline_hits / n:.4f}")
    return curve


def fit_training_model(config: ExperimentConfig, size: int) -> GmmModel:
    rng = np.random.default_rng(np.random.SeedSequence(config.seed, spawn_key=(size, TRAIN_STREAM)))
    training = generate_training(config.distribution, size, rng)
    if config.fixed_k is not None:
        return gmm.fit_em(training, config.fixed_k, config.em)
    k_max = min(config.k_max, size)
    return gmm.select_model(training, min(config.k_min, k_max), k_max, config.em)


def count_hits(model: GmmModel, config: ExperimentConfig, size: int, threads: int = 1) -> Tuple[int, int]:
    def run_chunk(chunk: range) -> Tuple[int, int]:
        gmm_hits = baseline_hits = 0
        for i in chunk:
            outcome = run_trial(model, config.distribution, config.strategy, criterion,
                                trial_rng(config.seed, size, i), size, i)
            gmm_hits += outcome.gmm_hit
            baseline_hits += outcome.baseline_hit
        return gmm_hits, baseline_hits

    criterion = HitCriterion(radius=config.hit_radius)
    chunks = [range(start, min(start + TRIALS_PER_CHUNK, config.n_trials))
              for start in range(0, config.n_trials, TRIALS_PER_CHUNK)]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            counts = list(pool.map(run_chunk, chunks))
    else:
        counts = [run_chunk(chunk) for chunk in chunks]
    return sum(g for g, _ in counts), sum(b for _, b in counts)


def trial_rng(seed: int, training_size: int, trial_index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(training_size, TRIAL_STREAM, trial_index)))


# ==== statistics ====
def wilson_halfwidth(hits: int, n: int, z: float = Z_95) -> float:
    """Half-width of the Wilson score interval for *hits* successes out of *n*."""
    p = hits / n
    return z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / (1 + z * z / n)


def expected_accuracy(distribution: GroundTruthDistribution, hit_radius: float) -> Tuple[float, float]:
    """
    Analytic first-try accuracy of (a model that knows the true centers and priors, the random baseline):
    max prior * P(chi2_3 <= (r/sigma)^2) and 1/K * the same probability. Assumes well separated clusters.
    """
    if distribution.noise_sigma == 0:
        within = 1.0
    else:
        within = float(stats.chi2.cdf((hit_radius / distribution.noise_sigma) ** 2, df=3))
    return float(distribution.priors.max()) * within, within / distribution.k


# ==== files ====
def load_experiment_config(path) -> ExperimentConfig:
    """Reads a JSON experiment config; errors point at the offending line."""
    path = pathlib.Path(path)
    try:
        text = path.read_text(encoding='utf-8')
    except OSError as e:
        raise errors.ConfigError(f"{path}: {e.strerror}")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise errors.ConfigError(f"{path}:{e.lineno}:{e.colno}: {e.msg}")
    try:
        return ExperimentConfig.parse_obj(data)
    except pydantic.ValidationError as e:
        first = e.errors()[0]
        where = '.'.join(str(part) for part in first['loc'])
        raise errors.ConfigError(f"{path}:{_line_of_key(text, first['loc'][0])}: {where}: {first['msg']}")


def write_csv(curve: AccuracyCurve, f: TextIO):
    writer = csv.writer(f, lineterminator='\n')
    writer.writerow(CSV_FIELDS)
    for point in curve.points:
        writer.writerow([repr(getattr(point, field)) for field in CSV_FIELDS])


def summary_table(curve: AccuracyCurve, config: ExperimentConfig) -> Iterable[str]:
    ideal, baseline = expected_accuracy(config.distribution, config.hit_radius)
    yield f"{'size':>6} {'K':>3} {'gmm':>8} {'±':>7} {'baseline':>9} {'±':>7}"
    for p in curve.points:
        yield f"{p.training_size:>6} {p.selected_k:>3} {p.gmm_accuracy:>8.4f} {p.gmm_ci:>7.4f} " \
              f"{p.baseline_accuracy:>9.4f} {p.baseline_ci:>7.4f}"
    yield f"analytic: ideal model {ideal:.4f}, random baseline {baseline:.4f}"
    for size in curve.skipped_sizes:
        yield f"size {size}: fit failed, no result"


def _line_of_key(text: str, key) -> int:
    match = re.search(rf'"{re.escape(str(key))}"\s*:', text)
    return text.count('\n', 0, match.start()) + 1 if match else 1


def trial_outcomes(model: GmmModel, config: ExperimentConfig, size: int, trials: Iterable[int]) -> List[TrialOutcome]:
    """Per-trial outcomes for inspection; run_experiment only keeps the counts."""
    criterion = HitCriterion(radius=config.hit_radius)
    return [run_trial(model, config.distribution, config.strategy, criterion, trial_rng(config.seed, size, i), size, i)
            for i in trials]
