import math

import numpy as np
import pytest
from scipy import stats

from oms import errors, gmm
from oms.models import BicDefinition, EmConfig, GaussianComponent, GmmModel, ResponsibilityMatrix

CENTERS = np.array([[0.0, 0.0, 0.9], [2.0, 0.0, 0.9], [0.0, 2.0, 0.45]])
RECOVERY_CENTERS = np.array([[0.0, 0.0, 0.0], [2.0, 0.0, 0.0], [0.0, 2.0, 0.0]])
SIGMA = 0.1
FAST = EmConfig(restarts=3)
FREE_PARAMETERS = EmConfig(restarts=5, bic_definition=BicDefinition.FREE_PARAMETER_COUNT)


def three_clusters(per_cluster=100, seed=0) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return np.concatenate([c + rng.normal(0.0, SIGMA, (per_cluster, 3)) for c in CENTERS])


def recovery_set(seed) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return np.concatenate([c + rng.normal(0.0, SIGMA, (100, 3)) for c in RECOVERY_CENTERS])


def tight_cluster(seed) -> np.ndarray:
    return np.random.default_rng(seed).normal([1.0, 1.0, 0.5], 0.05, (100, 3))


def ordering(means: np.ndarray) -> np.ndarray:
    return np.lexsort((means[:, 1], means[:, 0]))


def by_first_coordinates(means: np.ndarray) -> np.ndarray:
    return means[ordering(means)]


def unit_model(mean=(0.0, 0.0, 0.0), n_train=10) -> GmmModel:
    return GmmModel(
        components=[GaussianComponent(weight=1.0, mean=mean, covariance=np.eye(3))],
        log_likelihood=0.0,
        bic=0.0,
        n_train=n_train
    )


# ============= densities =============
class TestDensities:
    def test_standard_normal_at_mean(self):
        component = GaussianComponent(weight=1.0, mean=[0.0, 0.0, 0.0], covariance=np.eye(3))
        assert gmm.gaussian_logpdf([0.0, 0.0, 0.0], component) == pytest.approx(-2.756815599614018, abs=1e-12)

    def test_matches_scipy(self):
        cov = np.array([[0.5, 0.1, 0.0], [0.1, 0.3, 0.05], [0.0, 0.05, 0.2]])
        component = GaussianComponent(weight=1.0, mean=[1.0, -1.0, 0.5], covariance=cov)
        x = [0.7, -0.6, 0.9]
        expected = stats.multivariate_normal(mean=[1.0, -1.0, 0.5], cov=cov).logpdf(x)
        assert gmm.gaussian_logpdf(x, component) == pytest.approx(expected, abs=1e-10)

    def test_far_point_does_not_underflow(self):
        model = unit_model()
        ll = gmm.log_likelihood([[1e3, 0.0, 0.0]], model)
        assert math.isfinite(ll)
        assert ll == pytest.approx(-2.756815599614018 - 0.5e6)

    def test_log_likelihood_sums_points(self):
        model = unit_model()
        points = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]])
        assert gmm.log_likelihood(points, model) == pytest.approx(2 * -2.756815599614018 - 0.5)


# ============= EM steps =============
class TestSteps:
    def test_e_step_rows_sum_to_one(self):
        x = three_clusters(20)
        model = gmm.fit_em(x, 3, FAST)
        resp = gmm.e_step(x, model).values
        assert resp.shape == (60, 3)
        assert np.allclose(resp.sum(axis=1), 1.0)

    def test_single_component_m_step(self):
        x = three_clusters(10)
        resp = ResponsibilityMatrix(values=np.ones((len(x), 1)))
        (component,) = gmm.m_step(x, resp, covariance_floor=1e-6)
        assert component.weight == pytest.approx(1.0)
        assert np.allclose(component.mean, x.mean(axis=0))
        expected = np.cov(x, rowvar=False, bias=True) + 1e-6 * np.eye(3)
        assert np.allclose(component.covariance, expected)

    def test_dead_component(self):
        x = three_clusters(10)
        values = np.zeros((len(x), 2))
        values[:, 0] = 1.0
        with pytest.raises(errors.DegenerateComponentError) as e:
            gmm.m_step(x, ResponsibilityMatrix(values=values), covariance_floor=1e-6)
        assert e.value.components == [1]

    def test_responsibility_rows_mismatch(self):
        with pytest.raises(errors.InputError):
            gmm.m_step(three_clusters(10), ResponsibilityMatrix(values=np.ones((5, 1))), covariance_floor=1e-6)


# ============= fit_em =============
class TestFitEm:
    def test_recovers_separated_clusters(self):
        model = gmm.fit_em(three_clusters(), 3, EmConfig(restarts=5))
        assert np.allclose(by_first_coordinates(model.means), by_first_coordinates(CENTERS), atol=0.05)
        assert np.allclose(np.sort(model.weights), [1 / 3] * 3, atol=1e-6)
        assert model.converged

    def test_single_point(self):
        model = gmm.fit_em([[1.0, 2.0, 3.0]], 1)
        assert np.allclose(model.means[0], [1.0, 2.0, 3.0])
        assert model.weights[0] == 1.0
        assert np.all(np.linalg.eigvalsh(model.covariances[0]) > 0)

    def test_more_components_than_points(self):
        model = gmm.fit_em([[0.0, 0.0, 0.0], [1.0, 1.0, 1.0]], 3, FAST)
        assert model.k == 3
        assert math.isfinite(model.log_likelihood)

    def test_same_seed_same_model(self):
        x = three_clusters(30)
        a = gmm.fit_em(x, 3, FAST)
        b = gmm.fit_em(x, 3, FAST)
        assert a.log_likelihood == b.log_likelihood
        assert np.array_equal(a.means, b.means)
        assert np.array_equal(a.covariances, b.covariances)

    def test_recovers_parameters_across_seeds(self):
        for seed in range(20):
            model = gmm.fit_em(recovery_set(seed), 3, EmConfig(restarts=10, seed=seed))
            nearest = [int(np.argmin(np.linalg.norm(RECOVERY_CENTERS - mean, axis=1))) for mean in model.means]
            assert sorted(nearest) == [0, 1, 2]
            assert np.all(np.linalg.norm(model.means - RECOVERY_CENTERS[nearest], axis=1) <= 0.05)
            assert np.allclose(model.weights, 1 / 3, atol=0.06)
            assert np.diff(model.trace).min() >= -1e-9

    def test_trace_ends_at_the_fit(self):
        model = gmm.fit_em(three_clusters(50, seed=3), 4, FAST)
        assert len(model.trace) == model.iterations + 1
        assert model.trace[-1] == model.log_likelihood

    def test_translation_moves_only_the_means(self):
        x = three_clusters(40, seed=5)
        shift = np.array([10.0, -5.0, 3.0])
        a = gmm.fit_em(x, 3, FAST)
        b = gmm.fit_em(x + shift, 3, FAST)
        order_a, order_b = ordering(a.means), ordering(b.means - shift)
        assert np.allclose(b.means[order_b] - shift, a.means[order_a], rtol=0, atol=1e-6)
        assert np.allclose(b.covariances[order_b], a.covariances[order_a], rtol=0, atol=1e-6)
        assert np.allclose(b.weights[order_b], a.weights[order_a], rtol=0, atol=1e-6)
        assert b.log_likelihood == pytest.approx(a.log_likelihood, abs=1e-6)
        assert gmm.select_model(x + shift, 1, 4, FREE_PARAMETERS).k == gmm.select_model(x, 1, 4, FREE_PARAMETERS).k

    def test_more_restarts_never_worse(self):
        x = three_clusters(15, seed=11)
        one = gmm.fit_em(x, 3, EmConfig(restarts=1))
        many = gmm.fit_em(x, 3, EmConfig(restarts=8))
        # restart 0 is shared, so the best of 8 includes it
        assert many.log_likelihood >= one.log_likelihood

    def test_covariances_stay_positive_definite(self):
        # duplicated points invite collapse onto a single location
        x = np.repeat(three_clusters(3), 4, axis=0)
        model = gmm.fit_em(x, 4, FAST)
        assert np.all(np.linalg.eigvalsh(model.covariances) > 0)

    def test_bad_k(self):
        with pytest.raises(errors.InputError):
            gmm.fit_em(three_clusters(5), 0)

    def test_no_points(self):
        with pytest.raises(errors.InputError):
            gmm.fit_em(np.empty((0, 3)), 1)

    def test_non_finite_points(self):
        with pytest.raises(errors.InputError):
            gmm.fit_em([[0.0, np.nan, 0.0]], 1)


# ============= BIC =============
class TestBic:
    def test_component_count_formula(self):
        x = three_clusters(20)
        model = gmm.fit_em(x, 2, FAST)
        assert model.bic == pytest.approx(2 * math.log(60) - 2 * model.log_likelihood)
        assert gmm.bic(model) == pytest.approx(model.bic)

    def test_free_parameter_formula(self):
        assert gmm.free_parameters(1, BicDefinition.FREE_PARAMETER_COUNT) == 9
        assert gmm.free_parameters(3, BicDefinition.FREE_PARAMETER_COUNT) == 29
        assert gmm.free_parameters(3, BicDefinition.COMPONENT_COUNT) == 3

    def test_bic_with_other_n(self):
        model = unit_model(n_train=10)
        assert gmm.bic(model, n=100) == pytest.approx(math.log(100))

    def test_bic_needs_points(self):
        with pytest.raises(errors.InputError):
            gmm.bic(unit_model(), n=0)

    def test_selects_three_clusters(self):
        model = gmm.select_model(three_clusters(), 1, 6, FREE_PARAMETERS)
        assert model.k == 3

    def test_stored_bic_is_exact(self):
        model = gmm.select_model(recovery_set(0), 1, 6, EmConfig(seed=0))
        assert model.bic == pytest.approx(model.k * math.log(300) - 2 * model.log_likelihood, rel=0, abs=1e-9)

    def test_free_parameter_count_selection_rate(self):
        config = lambda seed: EmConfig(restarts=10, seed=seed, bic_definition=BicDefinition.FREE_PARAMETER_COUNT)
        three = [gmm.select_model(recovery_set(seed), 1, 6, config(seed)).k for seed in range(20)]
        one = [gmm.select_model(tight_cluster(seed), 1, 6, config(seed)).k for seed in range(20)]
        assert three.count(3) >= 18
        assert one.count(1) >= 18

    def test_component_count_overfits(self):
        # ln n per Gaussian is cheaper than what an extra 9-parameter component gains on 3d data
        three = [gmm.select_model(recovery_set(seed), 1, 6, EmConfig(seed=seed)).k for seed in range(20)]
        one = [gmm.select_model(tight_cluster(seed), 1, 6, EmConfig(seed=seed)).k for seed in range(20)]
        assert sum(k > 3 for k in three) >= 18
        assert sum(k > 1 for k in one) >= 18

    def test_literal_alias_is_accepted(self):
        assert EmConfig(bic_definition="paper_literal").bic_definition is BicDefinition.COMPONENT_COUNT

    def test_table_is_ordered_by_k(self):
        table = gmm.bic_table(three_clusters(20), 1, 4, FAST)
        assert [m.k for m in table] == [1, 2, 3, 4]

    def test_table_independent_of_threads(self):
        x = three_clusters(20)
        serial = gmm.bic_table(x, 1, 4, FAST, threads=1)
        parallel = gmm.bic_table(x, 1, 4, FAST, threads=3)
        assert [m.log_likelihood for m in serial] == [m.log_likelihood for m in parallel]
        assert [m.bic for m in serial] == [m.bic for m in parallel]

    def test_ties_go_to_fewer_components(self):
        one = unit_model()
        two = GmmModel(
            components=[GaussianComponent(weight=0.5, mean=[0.0, 0.0, 0.0], covariance=np.eye(3)),
                        GaussianComponent(weight=0.5, mean=[1.0, 0.0, 0.0], covariance=np.eye(3))],
            log_likelihood=0.0,
            bic=0.0,
            n_train=10
        )
        assert gmm.select_from_table([two, one]).k == 1

    @pytest.mark.parametrize("k_min,k_max", [(0, 2), (3, 2), (1, 11)])
    def test_bad_k_range(self, k_min, k_max):
        with pytest.raises(errors.InputError):
            gmm.bic_table(three_clusters(4)[:10], k_min, k_max)


class TestModelValidation:
    def test_weights_must_sum_to_one(self):
        with pytest.raises(ValueError):
            GmmModel(
                components=[GaussianComponent(weight=0.5, mean=[0.0, 0.0, 0.0], covariance=np.eye(3))],
                log_likelihood=0.0,
                bic=0.0,
                n_train=1
            )

    def test_covariance_must_be_positive_definite(self):
        with pytest.raises(ValueError):
            GaussianComponent(weight=1.0, mean=[0.0, 0.0, 0.0], covariance=np.diag([1.0, 1.0, 0.0]))
