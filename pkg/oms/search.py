import logging
from typing import Union

import numpy as np

from . import config, errors
from .models import GmmModel, HitCriterion, SearchPlan, SearchStrategy

DEFAULT_HIT = HitCriterion()

log = logging.getLogger(__name__)


def plan_search(
        model: GmmModel,
        strategy: SearchStrategy = SearchStrategy.MODE_RANKED,
        seed: int = config.DEFAULT_SEED,
        n_candidates: int = 1) -> SearchPlan:
    """
    mode_ranked: component means by descending weight (ties by component index), at most K of them.
    gmm_sample: *n_candidates* independent draws from the mixture.
    """
    strategy = SearchStrategy(strategy)
    if n_candidates < 1:
        raise errors.InputError(f"need at least one candidate, got {n_candidates}")
    if strategy is SearchStrategy.MODE_RANKED:
        order = rank_components(model.weights)
        return SearchPlan(candidates=model.means[order[:n_candidates]], strategy=strategy)
    if strategy is SearchStrategy.GMM_SAMPLE:
        rng = np.random.default_rng(seed)
        candidates = sample_mixture(model.weights, model.means, model.covariances, n_candidates, rng)
        return SearchPlan(candidates=candidates, strategy=strategy, seed=seed)
    raise errors.InputError(f"{strategy.value} is not a model-driven strategy; use random_baseline()")


def random_baseline(cluster_locations, seed: int = config.DEFAULT_SEED) -> SearchPlan:
    """The known locations in a uniformly random order."""
    locations = np.asarray(cluster_locations, dtype=float).reshape(-1, 3)
    if len(locations) == 0:
        raise errors.InputError("the random baseline needs at least one location")
    order = np.random.default_rng(seed).permutation(len(locations))
    return SearchPlan(candidates=locations[order], strategy=SearchStrategy.RANDOM_BASELINE, seed=seed)


def is_hit(candidate, truth, criterion: Union[HitCriterion, float] = DEFAULT_HIT) -> bool:
    """Whether *candidate* is within the criterion radius of *truth*, boundary included."""
    radius = criterion.radius if isinstance(criterion, HitCriterion) else criterion
    return bool(np.linalg.norm(np.subtract(candidate, truth, dtype=float)) <= radius)


# ==== helpers ====
def rank_components(weights) -> np.ndarray:
    """Component indices by descending weight; equal weights keep index order."""
    return np.argsort(-np.asarray(weights, dtype=float), kind='stable')


def sample_mixture(weights, means, covariances, n: int, rng: np.random.Generator) -> np.ndarray:
    """*n* draws: pick a component by weight, then draw from its Gaussian."""
    components = draw_index(weights, rng.random(n))
    chol = np.linalg.cholesky(covariances)
    z = rng.standard_normal((n, 3))
    return means[components] + np.einsum('nij,nj->ni', chol[components], z)


def draw_index(probabilities, u):
    """
    Inverse-CDF categorical draw for uniforms *u* in [0, 1). Never returns a zero-probability index, even when the
    cumulative sum falls a rounding error short of 1.
    """
    probabilities = np.asarray(probabilities, dtype=float)
    cumulative = np.cumsum(probabilities)
    last_possible = np.flatnonzero(probabilities > 0)[-1]
    return np.minimum(np.searchsorted(cumulative, u, side='right'), last_possible)
