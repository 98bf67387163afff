from unittest import TestCase

import numpy as np
from numpy.testing import assert_allclose

from fluoro import engine, qubit, weak
from fluoro.config import GridConfig, ModelConfig
from fluoro.errors import ConfigError, SingularConditioning
from fluoro.qubit import DensityMatrix, Effect

PLUS_X = DensityMatrix.pure([1, 1])
GROUND = Effect(qubit.projector('g'))
EXCITED = DensityMatrix(qubit.projector('e'))


class TestWeakValues(TestCase):
    def test_plus_x_postselected_in_ground(self):
        value, denominator = weak.weak_sigma_minus(PLUS_X, GROUND)
        self.assertAlmostEqual(value, 1.0, places=12)
        self.assertAlmostEqual(denominator, 0.5, places=12)

    def test_identity_effect_gives_unconditioned_average(self):
        value, _ = weak.weak_sigma_minus(EXCITED, Effect(np.eye(2)))
        self.assertEqual(value, 0j)

    def test_orthogonal_past_and_future_are_singular(self):
        with self.assertRaises(SingularConditioning):
            weak.weak_sigma_minus(EXCITED, GROUND, eps=1e-12)

    def test_eps_must_be_positive(self):
        with self.assertRaises(ConfigError):
            weak.weak_sigma_minus(PLUS_X, GROUND, eps=0)

    def test_hermitian_weak_values(self):
        self.assertAlmostEqual(weak.weak_hermitian(PLUS_X, GROUND, np.eye(2)), 1.0, places=12)
        self.assertAlmostEqual(weak.weak_hermitian(PLUS_X, GROUND, weak.HALF_SIGMA_X), 0.5, places=12)

    def test_hermitian_weak_value_rejects_non_hermitian_operator(self):
        with self.assertRaises(ConfigError):
            weak.weak_hermitian(PLUS_X, GROUND, engine.SIGMA_MINUS)
        with self.assertRaises(ConfigError):
            weak.weak_hermitian(PLUS_X, GROUND, [[1e6, 1e6], [1e6 + 1.0, 0.0]])

    def test_post_only_expectation(self):
        self.assertEqual(weak.post_only_expectation(np.eye(2)), 0j)
        self.assertAlmostEqual(weak.post_only_expectation(PLUS_X), 0.5, places=12)
        self.assertEqual(weak.post_only_expectation(GROUND), 0j)
        with self.assertRaises(SingularConditioning):
            weak.post_only_expectation(np.zeros((2, 2)))

    def test_degenerate_future_collapses_to_expectation(self):
        rng = np.random.default_rng(7)
        identity = Effect(np.eye(2))
        for _ in range(5):
            ket = rng.normal(size=2) + 1j * rng.normal(size=2)
            rho = DensityMatrix.pure(ket)
            expected = qubit.expect(rho, qubit.make_pauli('Minus'))
            value, _ = weak.weak_sigma_minus(rho, identity)
            self.assertAlmostEqual(value, expected, places=12)
            self.assertAlmostEqual(weak.weak_hermitian(rho, identity, weak.HALF_SIGMA_X).real, expected.real,
                                   places=12)

    def test_pure_state_weak_value(self):
        rng = np.random.default_rng(8)
        for _ in range(5):
            psi = rng.normal(size=2) + 1j * rng.normal(size=2)
            phi = rng.normal(size=2) + 1j * rng.normal(size=2)
            psi, phi = psi / np.linalg.norm(psi), phi / np.linalg.norm(phi)
            value, _ = weak.weak_sigma_minus(DensityMatrix.pure(psi), Effect.projector(phi))
            expected = (phi.conj() @ engine.SIGMA_MINUS @ psi) / (phi.conj() @ psi)
            self.assertAlmostEqual(value, expected, places=12)

    def test_scaling_the_effect_changes_nothing(self):
        rho = DensityMatrix([[0.3, 0.2 - 0.1j], [0.2 + 0.1j, 0.7]])
        effect = Effect([[0.8, 0.1j], [-0.1j, 0.3]])
        value, _ = weak.weak_sigma_minus(rho, effect)
        for factor in (1.0, 0.5, 0.01):
            scaled, _ = weak.weak_sigma_minus(rho, Effect(factor * effect.matrix))
            self.assertAlmostEqual(scaled, value, places=12)

    def test_hermitian_and_lowering_weak_values_split(self):
        rho = DensityMatrix([[0.3, 0.2 - 0.1j], [0.2 + 0.1j, 0.7]])
        effect = Effect([[0.8, 0.1j], [-0.1j, 0.3]])
        lowering, _ = weak.weak_sigma_minus(rho, effect)
        product = rho.matrix @ effect.matrix
        raising = np.trace(product @ engine.SIGMA_PLUS) / np.trace(product).real
        hermitian = weak.weak_hermitian(rho, effect, weak.HALF_SIGMA_X)
        self.assertAlmostEqual(hermitian.real - lowering.real, (raising - np.conj(lowering)).real / 2, places=12)

    def test_conditioned_stack_marks_singular_cells_missing(self):
        rho = np.stack([qubit.projector('e'), PLUS_X.matrix])
        effect = np.stack([qubit.projector('g'), qubit.projector('g')])
        values, denominators = weak.conditioned_stack(rho, effect, engine.SIGMA_MINUS)
        self.assertTrue(np.isnan(values[0]))
        self.assertAlmostEqual(values[1], 1.0, places=12)
        assert_allclose(denominators, [0.0, 0.5])


class TestModeChecks(TestCase):
    def test_consistent_selections(self):
        weak.check_mode('pre_only', 'e', 'none')
        weak.check_mode('post_only', 'maximally_mixed', 'g')
        weak.check_mode('pre_and_post', 'e', 'g')

    def test_inconsistent_selections(self):
        for mode, prep, post in (('pre_only', 'e', 'g'), ('post_only', 'e', 'g'),
                                 ('pre_and_post', 'e', 'none'), ('bogus', 'e', 'g')):
            with self.assertRaises(ConfigError):
                weak.check_mode(mode, prep, post)

    def test_empty_grid(self):
        with self.assertRaises(ConfigError):
            weak.build_map(ModelConfig(), [], 'pre_only')


class TestClosedFormMaps(TestCase):
    def setUp(self):
        self.cfg = ModelConfig(gamma1=0.0, gamma1b=0.0, p0=0.0, p_t=0.0)
        self.rabi = np.array([0.0, 0.3, 0.7, 1.0])

    def test_pre_only_map_is_rabi_oscillation(self):
        result = weak.build_map(self.cfg, self.rabi, 'pre_only', 'e', 'none', stride=10)
        t = result.times[:, None]
        assert_allclose(result.values.real, np.sin(2 * np.pi * self.rabi * t) / 2, atol=1e-9)
        self.assertFalse(result.conditioned)

    def test_post_only_map_is_time_reversed(self):
        result = weak.build_map(self.cfg, self.rabi, 'post_only', 'maximally_mixed', 'g', stride=10)
        tau = self.cfg.duration - result.times[:, None]
        assert_allclose(result.values.real, np.sin(2 * np.pi * self.rabi * tau) / 2, atol=1e-9)
        assert_allclose(result.denominators, 0.5, atol=1e-9)

    def test_workers_do_not_change_the_map(self):
        serial = weak.build_map(ModelConfig(), self.rabi, 'pre_and_post', 'e', 'g', stride=10)
        parallel = weak.build_map(ModelConfig(), self.rabi, 'pre_and_post', 'e', 'g', stride=10, workers=2)
        np.testing.assert_array_equal(serial.values, parallel.values)


class TestDefaultGridMaps(TestCase):
    @classmethod
    def setUpClass(cls):
        cls.model = ModelConfig()
        grid = GridConfig()
        cls.stride = grid.time_stride(cls.model)
        cls.rabi = grid.rabi_freqs
        cls.pre_only = weak.build_map(cls.model, cls.rabi, 'pre_only', 'e', 'none', cls.stride)
        cls.conditioned = weak.build_map(cls.model, cls.rabi, 'pre_and_post', 'e', 'g', cls.stride)

    def test_grid_shape(self):
        self.assertEqual(self.pre_only.values.shape, (251, 101))

    def test_unconditioned_map_respects_classical_bound(self):
        self.assertLessEqual(np.max(np.abs(self.pre_only.values.real)), 0.5 + 1e-9)
        self.assertFalse(weak.bound_violation_contours(self.pre_only))

    def test_conditioned_map_violates_classical_bound(self):
        report = weak.bound_violation_contours(self.conditioned)
        self.assertTrue(report)
        self.assertGreater(len(report), 0)
        value, _, _ = self.conditioned.extremum()
        self.assertGreater(abs(value), 0.8)
        self.assertAlmostEqual(abs(report.components[0].extremum), abs(value), places=12)

    def test_denominators_stay_regular(self):
        self.assertGreater(self.conditioned.denominators.min(), 1e-6)
        self.assertFalse(self.conditioned.missing.any())

    def test_conditioned_cut_is_steeper(self):
        conditioned = self.conditioned.cut(0.99).real
        unconditioned = self.pre_only.cut(0.99).real
        self.assertGreater(weak.max_slope(self.rabi, conditioned), 2 * weak.max_slope(self.rabi, unconditioned))

    def test_conditioned_cut_crosses_zero_at_even_rotations(self):
        crossings = np.array(weak.zero_crossings(self.rabi, self.conditioned.cut(0.99).real))
        for k in range(2, 6):
            even_rotation = k / self.model.duration
            self.assertLess(np.min(np.abs(crossings - even_rotation)), 0.07, f"{even_rotation} MHz: {crossings}")

    def test_hermitian_map_differs_from_lowering_map(self):
        hermitian = weak.build_map(self.model, self.rabi, 'hermitian_xw', 'e', 'g', self.stride)
        self.assertGreater(np.max(np.abs(hermitian.values.real - self.conditioned.values.real)), 0.1)

    def test_off_grid_time_is_rejected(self):
        with self.assertRaises(ConfigError):
            self.conditioned.cut(0.995)


class TestCutStatistics(TestCase):
    def test_zero_crossings_interpolate(self):
        rabi = np.array([0.0, 1.0, 2.0, 3.0])
        self.assertEqual(weak.zero_crossings(rabi, [1.0, -1.0, -3.0, 1.0]), [0.5, 2.75])

    def test_zero_crossings_skip_missing_cells(self):
        self.assertEqual(weak.zero_crossings(np.arange(3.0), [1.0, np.nan, -1.0]), [])

    def test_zero_at_either_end_is_a_crossing(self):
        rabi = np.arange(3.0)
        self.assertEqual(weak.zero_crossings(rabi, [1.0, -1.0, 0.0]), [0.5, 2.0])
        self.assertEqual(weak.zero_crossings(rabi, [0.0, 1.0, 2.0]), [0.0])

    def test_max_slope(self):
        rabi = np.linspace(0, 1, 11)
        self.assertAlmostEqual(weak.max_slope(rabi, 3 * rabi), 3.0, places=12)

    def test_violation_components_are_separated(self):
        values = np.zeros((4, 5), dtype=np.complex128)
        values[0, 0] = 0.7
        values[3, 3:] = -0.9
        conditional_map = weak.ConditionalMap(np.arange(4.0), np.arange(5.0), values, 'pre_and_post', 'e', 'g',
                                              np.ones((4, 5)))
        report = weak.bound_violation_contours(conditional_map)
        self.assertEqual(len(report), 3)
        self.assertEqual([component.size for component in report.components], [2, 1])
        self.assertEqual(report.components[0].extremum, -0.9)
