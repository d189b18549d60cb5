import numpy as np
from django.test import SimpleTestCase, override_settings
from scipy.optimize import minimize, minimize_scalar

from censored_glm.services.exceptions import DivergenceError, DomainError, EstimationError, NonIdentifiableError
from censored_glm.services.survival import (
    CoxFit,
    CoxOptions,
    Side,
    SurvivalForm,
    breslow_baseline,
    cox_fit,
    cox_log_partial_likelihood,
    cox_survival_at,
    cox_survival_curve,
    km_eval,
    km_fit,
)


def manual_fit(theta, times, increments) -> CoxFit:
    return CoxFit(
        theta=np.asarray(theta, dtype=float),
        baseline_times=np.asarray(times, dtype=float),
        baseline_increments=np.asarray(increments, dtype=float),
        log_partial_likelihood=0.0,
        converged=True,
        covariance=np.zeros((len(theta), len(theta))),
    )


class KaplanMeierTest(SimpleTestCase):
    def setUp(self):
        self.curve = km_fit([1, 2, 3, 4], [1, 0, 1, 1])

    def test_single_observation(self):
        curve = km_fit([5.0], [1])
        self.assertEqual(curve.evaluate(4.9), 1.0)
        self.assertEqual(curve.evaluate(5.0), 0.0)
        self.assertEqual(curve.evaluate(7.0), 0.0)

    def test_hand_product_limit(self):
        np.testing.assert_array_equal(self.curve.times, [1, 3, 4])
        np.testing.assert_array_equal(self.curve.at_risk, [4, 2, 1])
        self.assertEqual(self.curve.evaluate(1), 3 / 4)
        self.assertEqual(self.curve.evaluate(3), 3 / 8)
        self.assertEqual(self.curve.evaluate(4), 0.0)

    def test_sidedness(self):
        self.assertEqual(km_eval(self.curve, 3, Side.RIGHT), 3 / 8)
        self.assertEqual(km_eval(self.curve, 3, Side.LEFT_LIMIT), 3 / 4)

    def test_before_first_and_after_last(self):
        self.assertEqual(km_eval(self.curve, 0.5), 1.0)
        self.assertEqual(km_eval(self.curve, 100.0), 0.0)
        censored_last = km_fit([1, 2, 3], [1, 1, 0])
        self.assertAlmostEqual(km_eval(censored_last, 100.0), 1 / 3, places=15)

    def test_vectorized(self):
        np.testing.assert_array_equal(self.curve.evaluate([0, 1, 2, 3], Side.LEFT_LIMIT), [1, 1, 0.75, 0.75])

    def test_fully_observed_equals_empirical_survival(self):
        rng = np.random.default_rng(4)
        times = rng.exponential(size=40)
        curve = km_fit(times, np.ones(40, dtype=int))
        grid = np.concatenate([times, rng.uniform(0, 3, 20)])
        expected = 1 - np.mean(times[None, :] <= grid[:, None], axis=1)
        np.testing.assert_allclose(curve.evaluate(grid), expected, atol=1e-12)

    def test_ties_process_events_before_censorings(self):
        curve = km_fit([2, 2, 3], [1, 0, 1])
        self.assertEqual(curve.evaluate(2), 2 / 3)

    def test_negative_time_rejected(self):
        with self.assertRaises(DomainError):
            km_fit([-1, 2], [1, 1])


class BreslowBaselineTest(SimpleTestCase):
    def test_nelson_aalen_at_zero(self):
        times, increments = breslow_baseline([0.0], [1, 2, 3], [1, 1, 1], [[0.3], [1.2], [-0.4]])
        np.testing.assert_array_equal(times, [1, 2, 3])
        np.testing.assert_allclose(increments, [1 / 3, 1 / 2, 1])

    def test_two_subjects(self):
        theta = 0.7
        _, increments = breslow_baseline([theta], [1, 2], [1, 0], [[1.0], [0.5]])
        self.assertAlmostEqual(increments[0], 1 / (np.exp(theta) + np.exp(theta * 0.5)), places=14)

    def test_no_increment_without_events(self):
        times, increments = breslow_baseline([0.0], [1, 2, 3], [1, 0, 1], np.zeros((3, 1)))
        np.testing.assert_array_equal(times, [1, 3])
        self.assertEqual(increments.shape, (2,))


class CoxFitTest(SimpleTestCase):
    def test_matches_brute_force_partial_likelihood(self):
        times, event, h = [1, 2, 3, 4], [1, 1, 1, 1], [[0], [1], [0], [1]]
        fit = cox_fit(times, event, h)

        def negative(theta):
            eta = np.array([0, 1, 0, 1]) * theta
            return -sum(eta[j] - np.log(np.sum(np.exp(eta[j:]))) for j in range(4))

        oracle = minimize_scalar(negative, bracket=(-2, 2), tol=1e-12)
        self.assertAlmostEqual(fit.theta[0], oracle.x, delta=1e-6)
        self.assertAlmostEqual(fit.log_partial_likelihood, -oracle.fun, places=8)

    def test_two_covariates_against_optimizer(self):
        designs = [
            (
                [1, 1, 0, 1, 1, 1],
                [[0.5, 1], [-1.0, 0], [0.3, 1], [1.2, 1], [-0.7, 0], [0.1, 0]],
            ),
            (
                [1, 0, 1, 1, 1, 0, 1, 1],
                [[0.2, 0], [1.5, 1], [-0.3, 1], [0.8, 0], [-1.1, 1], [0.4, 0], [0.9, 0], [-0.6, 1]],
            ),
        ]
        for event, h in designs:
            times = np.arange(1, len(event) + 1, dtype=float)
            event, h = np.array(event), np.array(h, dtype=float)
            fit = cox_fit(times, event, h)
            oracle = minimize(
                lambda theta: -cox_log_partial_likelihood(theta, times, event, h),
                np.zeros(2),
                method="Nelder-Mead",
                options={"xatol": 1e-10, "fatol": 1e-14, "maxiter": 20000},
            )
            np.testing.assert_allclose(fit.theta, oracle.x, atol=1e-6)

    def test_information_matches_finite_differences(self):
        rng = np.random.default_rng(9)
        n = 60
        h = rng.normal(size=(n, 2))
        times = rng.exponential(np.exp(-(h @ [0.5, -0.3])))
        event = (rng.uniform(size=n) < 0.8).astype(int)
        fit = cox_fit(times, event, h)
        step = 1e-4
        hessian = np.zeros((2, 2))
        for j in range(2):
            for k in range(2):
                ej, ek = np.eye(2)[j] * step, np.eye(2)[k] * step
                hessian[j, k] = (
                    cox_log_partial_likelihood(fit.theta + ej + ek, times, event, h)
                    - cox_log_partial_likelihood(fit.theta + ej - ek, times, event, h)
                    - cox_log_partial_likelihood(fit.theta - ej + ek, times, event, h)
                    + cox_log_partial_likelihood(fit.theta - ej - ek, times, event, h)
                ) / (4 * step**2)
        np.testing.assert_allclose(np.linalg.inv(fit.covariance), -hessian, rtol=1e-5, atol=1e-4)

    def test_constant_covariate_not_identifiable(self):
        with self.assertRaises(NonIdentifiableError):
            cox_fit([1, 2, 3, 4], [1, 1, 0, 1], np.zeros((4, 1)))

    def test_no_events(self):
        with self.assertRaises(EstimationError):
            cox_fit([1, 2, 3], [0, 0, 0], [[0], [1], [2]])

    def test_fixed_theta_gives_nelson_aalen(self):
        rng = np.random.default_rng(12)
        times = rng.exponential(size=20)
        event = rng.integers(0, 2, 20)
        event[0] = 1
        fit = cox_fit(times, event, rng.normal(size=(20, 2)), fixed_theta=[0.0, 0.0])
        curve = km_fit(times, event)
        np.testing.assert_array_equal(fit.baseline_times, curve.times)
        np.testing.assert_allclose(fit.baseline_increments, curve.events / curve.at_risk)
        self.assertEqual(fit.iterations, 0)

    def test_divergence_guard(self):
        times = np.arange(1, 9, dtype=float)
        h = np.arange(8, 0, -1, dtype=float)[:, None]
        opts = CoxOptions(tolerance=1e-30, divergence_norm=5.0, divergence_patience=2)
        with self.assertRaises(DivergenceError) as ctx:
            cox_fit(times, np.ones(8, dtype=int), h, opts)
        self.assertIsNotNone(ctx.exception.last_iterate)


class CoxSurvivalTest(SimpleTestCase):
    def test_empty_product(self):
        fit = manual_fit([0.4], [2.0, 3.0], [0.1, 0.2])
        self.assertEqual(cox_survival_at(fit, [1.0], 1.5).value, 1.0)

    def test_direct_product(self):
        fit = manual_fit([np.log(2.0)], [1.0], [0.25])
        result = cox_survival_at(fit, [1.0], 2.0)
        self.assertAlmostEqual(result.value, 0.5, places=14)
        self.assertFalse(result.degenerate)

    def test_left_limit_excludes_event_at_u(self):
        fit = manual_fit([0.0], [1.0], [0.25])
        self.assertEqual(cox_survival_at(fit, [0.0], 1.0, Side.LEFT_LIMIT).value, 1.0)
        self.assertEqual(cox_survival_at(fit, [0.0], 1.0, Side.RIGHT).value, 0.75)

    def test_exponential_form(self):
        fit = manual_fit([np.log(2.0)], [1.0], [0.25])
        value = cox_survival_at(fit, [1.0], 2.0, form=SurvivalForm.EXPONENTIAL).value
        self.assertAlmostEqual(value, np.exp(-0.5), places=14)

    def test_degenerate_factor_is_floored(self):
        fit = manual_fit([np.log(2.0)], [1.0], [0.75])
        with self.assertLogs("censored_glm.services.survival", level="WARNING"):
            result = cox_survival_at(fit, [1.0], 2.0, floor=1e-6)
        self.assertTrue(result.degenerate)
        self.assertEqual(result.value, 1e-6)

    def test_zero_theta_matches_km_left_limit(self):
        rng = np.random.default_rng(31)
        for _ in range(10):
            times = np.round(rng.exponential(size=30), 1)
            event = rng.integers(0, 2, 30)
            event[0] = 1
            h = rng.normal(size=(30, 2))
            fit = cox_fit(times, event, h, fixed_theta=[0.0, 0.0])
            values, _ = cox_survival_curve(fit, h, times, Side.LEFT_LIMIT)
            expected = km_fit(times, event).evaluate(times, Side.LEFT_LIMIT)
            np.testing.assert_array_equal(values, expected)

    def test_covariate_offset_leaves_survival_unchanged(self):
        rng = np.random.default_rng(5)
        times = rng.exponential(size=200)
        event = rng.integers(0, 2, 200)
        h = rng.normal(size=(200, 1))
        fit = cox_fit(times, event, h)
        shifted = cox_fit(times, event, h + 1000)
        np.testing.assert_allclose(shifted.theta, fit.theta, rtol=1e-6)
        np.testing.assert_allclose(shifted.center, fit.center + 1000)

        values, _ = cox_survival_curve(fit, h, times)
        shifted_values, _ = cox_survival_curve(shifted, h + 1000, times)
        self.assertTrue(np.all(np.isfinite(shifted_values)))
        np.testing.assert_allclose(shifted_values, values, rtol=1e-6, atol=1e-12)


class CoxOptionsTest(SimpleTestCase):
    @override_settings(COX_MAX_HALVINGS=3, GLM_MAX_HALVINGS=11, COX_DIVERGENCE_NORM=12.0, GLM_DIVERGENCE_NORM=99.0)
    def test_reads_its_own_settings(self):
        opts = CoxOptions.from_settings()
        self.assertEqual(opts.max_halvings, 3)
        self.assertEqual(opts.divergence_norm, 12.0)
