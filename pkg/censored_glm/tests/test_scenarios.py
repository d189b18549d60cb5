import numpy as np
from django.conf import settings
from django.test import SimpleTestCase
from unittest import skipUnless

from censored_glm.services.exceptions import CalibrationError, SchemaError
from censored_glm.services.scenarios import (
    REFERENCE_SCALES,
    CensorLevel,
    ScenarioFamily,
    calibrate_censoring,
    calibrate_scale,
    generate_scenario_A,
    generate_scenario_B,
    latent_draws,
)


class ScenarioATest(SimpleTestCase):
    def test_same_seed_same_dataset(self):
        first, _ = generate_scenario_A(200, "light", "independent", np.random.default_rng(42))
        second, _ = generate_scenario_A(200, "light", "independent", np.random.default_rng(42))
        self.assertEqual(first.records, second.records)

    def test_no_censoring_hook(self):
        d, truth = generate_scenario_A(
            300, CensorLevel.HEAVY, ScenarioFamily.OUTCOME_DEPENDENT, np.random.default_rng(1), no_censoring=True
        )
        np.testing.assert_array_equal(d.delta, 1)
        np.testing.assert_array_equal(d.v, truth.x)

    def test_observed_value_is_minimum(self):
        rng = np.random.default_rng(3)
        d, truth = generate_scenario_A(500, "heavy", "independent", rng)
        np.testing.assert_array_equal(d.v[d.complete_cases], truth.x[d.complete_cases])
        self.assertTrue(np.all(d.v[~d.complete_cases] < truth.x[~d.complete_cases]))

    def test_truth_follows_design_order(self):
        _, truth = generate_scenario_A(100, "light", "independent", np.random.default_rng(0))
        np.testing.assert_array_equal(truth.beta, [0.005, -0.05, 0.01, -0.01])
        self.assertEqual(truth.targets, (("x", -0.05),))

    def test_noise_free_outcome_is_linear(self):
        d, truth = generate_scenario_A(100, "light", "independent", np.random.default_rng(0), noise_free=True)
        np.testing.assert_allclose(d.y, d.design(truth.x) @ truth.beta, rtol=1e-12, atol=1e-12)

    def test_hooks_do_not_shift_the_stream(self):
        plain, _ = generate_scenario_A(100, "light", "independent", np.random.default_rng(8))
        quiet, _ = generate_scenario_A(100, "light", "independent", np.random.default_rng(8), noise_free=True)
        np.testing.assert_array_equal(plain.z, quiet.z)
        np.testing.assert_array_equal(plain.delta, quiet.delta)

    def test_level_must_match_family(self):
        with self.assertRaises(SchemaError):
            generate_scenario_A(100, "c20", "independent", np.random.default_rng(0))

    def test_calibrated_light_censoring_fraction(self):
        scale = calibrate_censoring("independent", "light", 0.20, rng=np.random.default_rng(0)).scale
        fractions = [
            generate_scenario_A(
                400, "light", "independent", np.random.default_rng(seed), censor_scale=scale
            )[0].censoring_fraction
            for seed in range(100)
        ]
        self.assertAlmostEqual(float(np.mean(fractions)), 0.20, delta=0.03)


class ScenarioBTest(SimpleTestCase):
    def test_design_without_interaction(self):
        d, truth = generate_scenario_B(200, "c20", False, np.random.default_rng(0))
        self.assertEqual(d.p, 2)
        self.assertEqual(d.design().shape, (200, 4))
        self.assertEqual(truth.target_indices, (1,))

    def test_design_with_interaction(self):
        d, truth = generate_scenario_B(200, "c40", True, np.random.default_rng(0))
        design = d.design(truth.x)
        self.assertEqual(design.shape, (200, 5))
        np.testing.assert_array_equal(design[:, 4], truth.x * d.z[:, 0])
        self.assertEqual(truth.targets, (("x", 0.045), ("x:z1", 0.05)))

    def test_x_support(self):
        _, truth = generate_scenario_B(5000, "c65", False, np.random.default_rng(12))
        self.assertTrue(np.all((truth.x >= 0.3) & (truth.x <= 1.30)))

    def test_binary_covariates(self):
        d, _ = generate_scenario_B(1000, "c20", False, np.random.default_rng(2))
        self.assertTrue(set(np.unique(d.z)) <= {0.0, 1.0})

    def test_reference_scales_order_the_levels(self):
        means = [
            np.mean(
                [
                    generate_scenario_B(850, level, False, np.random.default_rng(seed))[0].censoring_fraction
                    for seed in range(10)
                ]
            )
            for level in ("c20", "c40", "c65")
        ]
        self.assertLess(means[0], means[1])
        self.assertLess(means[1], means[2])

    def test_calibrated_levels(self):
        for level, target in (("c20", 0.20), ("c40", 0.40), ("c65", 0.65)):
            scale = calibrate_censoring(
                "covariate_dependent", level, target, rng=np.random.default_rng(1), draws=50_000
            ).scale
            fractions = [
                generate_scenario_B(
                    850, level, False, np.random.default_rng(seed), censor_scale=scale
                )[0].censoring_fraction
                for seed in range(20)
            ]
            self.assertAlmostEqual(float(np.mean(fractions)), target, delta=0.05)


class CalibrationTest(SimpleTestCase):
    def test_exponential_inversion(self):
        rng = np.random.default_rng(0)
        x = np.full(200_000, 0.8)
        c_unit = rng.exponential(size=200_000)
        result = calibrate_scale(x, c_unit, target=0.5, tol=0.002)
        analytic = 0.8 / np.log(2)
        self.assertAlmostEqual(result.scale, analytic, delta=0.02 * analytic)
        self.assertAlmostEqual(result.achieved_fraction, 0.5, delta=0.002)

    def test_loose_tolerance_returns_immediately(self):
        rng = np.random.default_rng(1)
        x = rng.uniform(size=1000)
        result = calibrate_scale(x, rng.exponential(size=1000), target=0.4, tol=0.25, start=1.0)
        self.assertEqual(result.iterations, 0)
        self.assertEqual(result.scale, 1.0)

    def test_target_out_of_range(self):
        with self.assertRaises(CalibrationError):
            calibrate_scale(np.ones(10), np.ones(10), target=0.99)

    def test_bracket_failure(self):
        with self.assertRaises(CalibrationError):
            calibrate_scale(np.zeros(100), np.ones(100), target=0.5)

    def test_achieved_fraction_recovers_reference_scale(self):
        draws = latent_draws(ScenarioFamily.COVARIATE_DEPENDENT, 100_000, np.random.default_rng(5))
        reference = REFERENCE_SCALES[CensorLevel.C40]
        achieved = float(np.mean(reference * draws.c_unit < draws.x))
        result = calibrate_scale(draws.x, draws.c_unit, achieved, tol=0.001, start=2 * reference)
        self.assertAlmostEqual(result.scale, reference, delta=0.05 * reference)

    def test_calibrate_censoring_hits_target(self):
        result = calibrate_censoring(
            "independent", "heavy", 0.40, rng=np.random.default_rng(3), draws=50_000
        )
        self.assertAlmostEqual(result.achieved_fraction, 0.40, delta=0.01)
        self.assertGreater(result.scale, 0)

    @skipUnless(settings.RUN_SLOW_TESTS, "slow acceptance run")
    def test_light_fraction_over_full_scale_reps(self):
        scale = calibrate_censoring("independent", "light", 0.20, rng=np.random.default_rng(0)).scale
        fractions = [
            generate_scenario_A(
                400, "light", "independent", np.random.default_rng(seed), censor_scale=scale
            )[0].censoring_fraction
            for seed in range(5000)
        ]
        self.assertAlmostEqual(float(np.mean(fractions)), 0.20, delta=0.03)
