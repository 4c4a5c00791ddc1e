"""
Gaussian mixtures over 3D points, fit by expectation-maximization and compared by BIC.

Everything is pure given an explicit seed: restart r of a K-component fit draws from
SeedSequence(seed, spawn_key=(K, r)), and the best restart is chosen by value with the lowest index winning ties,
so fits come out the same however they are scheduled.
"""
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from typing import List, NamedTuple, Optional, Sequence

import numpy as np
from scipy import linalg
from scipy.special import logsumexp

from . import errors
from .models import BicDefinition, EmConfig, GaussianComponent, GmmModel, ResponsibilityMatrix

DIM = 3
LOG_2PI = math.log(2 * math.pi)
PARAMS_PER_COMPONENT = DIM + DIM * (DIM + 1) // 2  # mean + symmetric covariance
DEGENERATE_MASS = 1e-12  # total responsibility below which a component is considered dead

log = logging.getLogger(__name__)


class _EmRun(NamedTuple):
    weights: np.ndarray
    means: np.ndarray
    covariances: np.ndarray
    log_likelihood: float
    iterations: int
    converged: bool
    trace: List[float]


# ==== densities ====
def gaussian_logpdf(x, component: GaussianComponent) -> float:
    """ln N(x; mean, covariance) for a single 3D point."""
    return float(_component_logpdf(as_points(x), component.mean, component.covariance)[0])


def e_step(points, model: GmmModel) -> ResponsibilityMatrix:
    x = as_points(points, allow_empty=False)
    log_prob = _weighted_logpdf(x, model.weights, model.means, model.covariances)
    return ResponsibilityMatrix(values=_responsibilities(log_prob))


def m_step(points, responsibilities: ResponsibilityMatrix, covariance_floor: float) -> List[GaussianComponent]:
    """
    Re-estimates weights, means and covariances from *responsibilities*. Raises DegenerateComponentError if a
    component has (almost) no responsibility left; the caller decides how to revive it.
    """
    x = as_points(points, allow_empty=False)
    resp = responsibilities.values
    if resp.shape[0] != len(x):
        raise errors.InputError(f"{resp.shape[0]} responsibility rows for {len(x)} points")
    weights, means, covariances, degenerate = _maximize(x, resp, covariance_floor)
    if degenerate:
        raise errors.DegenerateComponentError(degenerate)
    return [GaussianComponent(weight=w, mean=m, covariance=c) for w, m, c in zip(weights, means, covariances)]


def log_likelihood(points, model: GmmModel) -> float:
    x = as_points(points, allow_empty=False)
    return _total_log_likelihood(_weighted_logpdf(x, model.weights, model.means, model.covariances))


# ==== fitting ====
def fit_em(points, k: int, config: Optional[EmConfig] = None, label: str = "") -> GmmModel:
    """
    Fits a *k*-component mixture with config.restarts independent EM runs and keeps the one with the highest
    final log-likelihood.
    """
    config = config or EmConfig()
    x = as_points(points, allow_empty=False)
    if k < 1:
        raise errors.InputError(f"a mixture needs at least one component, got K={k}")

    best = None
    for restart in range(config.restarts):
        run = _run_em(x, k, config, restart_rng(config.seed, k, restart))
        log.debug(f"K={k} restart {restart}: log-likelihood {run.log_likelihood:.6f} "
                  f"after {run.iterations} iterations (converged={run.converged})")
        if best is None or run.log_likelihood > best.log_likelihood:
            best = run
    return GmmModel(
        components=[GaussianComponent(weight=w, mean=m, covariance=c)
                    for w, m, c in zip(best.weights, best.means, best.covariances)],
        log_likelihood=best.log_likelihood,
        bic=bic_value(k, len(x), best.log_likelihood, config.bic_definition),
        bic_definition=config.bic_definition,
        n_train=len(x),
        iterations=best.iterations,
        converged=best.converged,
        label=label,
        config_echo=config,
        trace=best.trace
    )


def bic(model: GmmModel, n: Optional[int] = None, definition: Optional[BicDefinition] = None) -> float:
    """k*ln(n) - 2*ln(L), with k counted as the model's bic definition says. *n* defaults to model.n_train."""
    n = model.n_train if n is None else n
    if n < 1:
        raise errors.InputError(f"BIC needs n >= 1, got {n}")
    return bic_value(model.k, n, model.log_likelihood, definition or model.bic_definition)


def bic_value(k: int, n: int, log_likelihood_: float, definition: BicDefinition) -> float:
    return free_parameters(k, definition) * math.log(n) - 2.0 * log_likelihood_


def free_parameters(k: int, definition: BicDefinition) -> int:
    if definition is BicDefinition.COMPONENT_COUNT:
        return k
    return k * PARAMS_PER_COMPONENT + (k - 1)


def bic_table(points, k_min: int, k_max: int, config: Optional[EmConfig] = None,
              threads: int = 1, label: str = "") -> List[GmmModel]:
    """Fits every K in [k_min, k_max]; the result is ordered by K."""
    x = as_points(points, allow_empty=False)
    if not 1 <= k_min <= k_max <= len(x):
        raise errors.InputError(f"need 1 <= k_min <= k_max <= n, got k_min={k_min}, k_max={k_max}, n={len(x)}")
    ks = range(k_min, k_max + 1)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            table = list(pool.map(lambda k: fit_em(x, k, config, label), ks))
    else:
        table = [fit_em(x, k, config, label) for k in ks]
    for model in table:
        log.debug(f"K={model.k}: log-likelihood {model.log_likelihood:.6f}, BIC {model.bic:.6f}")
    return table


def select_from_table(table: Sequence[GmmModel]) -> GmmModel:
    """Minimum BIC; ties go to the smaller K."""
    best = min(table, key=lambda m: (m.bic, m.k))
    log.info(f"selected K={best.k} (BIC {best.bic:.4f}) from K={table[0].k}..{table[-1].k}")
    return best


def select_model(points, k_min: int, k_max: int, config: Optional[EmConfig] = None,
                 threads: int = 1, label: str = "") -> GmmModel:
    return select_from_table(bic_table(points, k_min, k_max, config, threads, label))


def restart_rng(seed: int, k: int, restart: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(k, restart)))


# ==== internals ====
def _run_em(x: np.ndarray, k: int, config: EmConfig, rng: np.random.Generator) -> _EmRun:
    n = len(x)
    floor = config.covariance_floor
    scatter = np.cov(x, rowvar=False, bias=True).reshape(DIM, DIM)
    base_covariance = 0.5 * (scatter + scatter.T) + floor * np.eye(DIM)

    means = x[rng.choice(n, size=k, replace=n < k)].copy()
    covariances = np.repeat(base_covariance[np.newaxis], k, axis=0)
    weights = np.full(k, 1.0 / k)

    log_prob = _weighted_logpdf(x, weights, means, covariances)
    ll = _total_log_likelihood(log_prob)
    trace = [ll]
    converged = False
    iterations = 0
    while iterations < config.max_iterations:
        iterations += 1
        weights, means, covariances, degenerate = _maximize(x, _responsibilities(log_prob), floor)
        if degenerate:
            _revive(degenerate, x, log_prob, weights, means, covariances, base_covariance)
        log_prob = _weighted_logpdf(x, weights, means, covariances)
        new_ll = _total_log_likelihood(log_prob)
        trace.append(new_ll)
        delta, ll = new_ll - ll, new_ll
        if abs(delta) < config.tolerance:
            converged = True
            break
    return _EmRun(weights, means, covariances, ll, iterations, converged, trace)


def _maximize(x: np.ndarray, resp: np.ndarray, floor: float):
    """M-step on raw arrays. Dead components come back with placeholder parameters and are listed."""
    nk = resp.sum(axis=0)
    dead = nk < DEGENERATE_MASS
    mass = np.where(dead, 1.0, nk)
    means = (resp.T @ x) / mass[:, np.newaxis]
    covariances = np.empty((len(nk), DIM, DIM))
    for k in range(len(nk)):
        diff = x - means[k]
        scatter = (resp[:, k, np.newaxis] * diff).T @ diff / mass[k]
        covariances[k] = 0.5 * (scatter + scatter.T) + floor * np.eye(DIM)
    return nk / len(x), means, covariances, np.flatnonzero(dead).tolist()


def _revive(dead: List[int], x, log_prob, weights, means, covariances, base_covariance):
    """Moves each dead component onto the point the mixture currently explains worst."""
    density = logsumexp(log_prob, axis=1)
    for k in dead:
        i = int(np.argmin(density))
        log.debug(f"component {k} collapsed, reinitializing at point {i}")
        means[k] = x[i]
        covariances[k] = base_covariance
        weights[k] = 1.0 / len(x)
        density[i] = np.inf
    weights /= weights.sum()


def _component_logpdf(x: np.ndarray, mean: np.ndarray, covariance: np.ndarray) -> np.ndarray:
    try:
        chol = linalg.cholesky(covariance, lower=True)
    except (linalg.LinAlgError, ValueError):
        raise errors.NumericError("covariance is not symmetric positive definite")
    log_det = 2.0 * np.sum(np.log(np.diagonal(chol)))
    solved = linalg.solve_triangular(chol, (x - mean).T, lower=True)
    return -0.5 * (DIM * LOG_2PI + log_det + np.sum(solved ** 2, axis=0))


def _weighted_logpdf(x: np.ndarray, weights, means, covariances) -> np.ndarray:
    """(n, K) grid of ln(pi_k) + ln N(x_i; mu_k, Sigma_k)."""
    with np.errstate(divide='ignore'):
        log_weights = np.log(weights)
    return np.column_stack([log_weights[k] + _component_logpdf(x, means[k], covariances[k])
                            for k in range(len(weights))])


def _responsibilities(log_prob: np.ndarray) -> np.ndarray:
    log_norm = logsumexp(log_prob, axis=1, keepdims=True)
    if not np.all(np.isfinite(log_norm)):
        raise errors.NumericError("every component density underflowed for some point")
    return np.exp(log_prob - log_norm)


def _total_log_likelihood(log_prob: np.ndarray) -> float:
    per_point = logsumexp(log_prob, axis=1)
    if not np.all(np.isfinite(per_point)):
        raise errors.NumericError("log-likelihood is not finite")
    return float(np.sum(per_point))


def as_points(points, allow_empty: bool = True) -> np.ndarray:
    x = np.asarray(points, dtype=float)
    if x.ndim == 1 and x.size == DIM:
        x = x.reshape(1, DIM)
    if x.ndim != 2 or x.shape[1] != DIM:
        raise errors.InputError(f"expected an (n, 3) array of points, got shape {x.shape}")
    if not allow_empty and len(x) == 0:
        raise errors.InputError("no points given")
    if not np.all(np.isfinite(x)):
        raise errors.InputError("point coordinates must be finite")
    return x
