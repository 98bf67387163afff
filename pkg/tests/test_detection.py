import math
from unittest import TestCase

import numpy as np
from numpy.testing import assert_allclose

from fluoro import detection, weak
from fluoro.config import DetectionConfig, ModelConfig
from fluoro.detection import CascadedLowPass, SignalTrace
from fluoro.errors import ConfigError, NumericalError

DT = 0.001


class TestOutgoingField(TestCase):
    def setUp(self):
        self.model = ModelConfig()
        self.det = DetectionConfig(offset_re=0.3, offset_im=-0.2, scale=2.0)

    def test_zero_coherence_gives_the_offset(self):
        trace = detection.outgoing_field(np.zeros(5), self.det, self.model)
        assert_allclose(trace.v_re, 0.3)
        assert_allclose(trace.v_im, -0.2)
        assert_allclose(trace.times, np.arange(5) * self.model.dt)

    def test_field_sign(self):
        trace = detection.outgoing_field([0.5], DetectionConfig(), self.model)
        self.assertEqual(trace.v_re[0], -0.5)
        self.assertEqual(trace.v_im[0], 0.0)

    def test_s_minus_round_trip(self):
        rng = np.random.default_rng(2)
        series = rng.uniform(-0.5, 0.5, 50)
        trace = detection.outgoing_field(series, self.det, self.model)
        assert_allclose(detection.extract_s_minus(trace, self.det), series, atol=1e-12)

    def test_constant_offset_extracts_to_zero(self):
        trace = SignalTrace(np.arange(4.0), np.full(4, 0.3), np.full(4, -0.2))
        assert_allclose(detection.extract_s_minus(trace, self.det), 0.0)

    def test_doubling_scale_halves_s_minus(self):
        trace = detection.outgoing_field([0.4, -0.2], self.det, self.model)
        doubled = self.det.replace(scale=4.0)
        assert_allclose(detection.extract_s_minus(trace, doubled), [0.2, -0.1], atol=1e-12)

    def test_empty_series_is_rejected(self):
        with self.assertRaises(ConfigError):
            detection.outgoing_field([], self.det, self.model)

    def test_signal_trace_validation(self):
        with self.assertRaises(ValueError):
            SignalTrace(np.arange(3.0), np.zeros(3), np.zeros(2))
        with self.assertRaises(ValueError):
            SignalTrace(np.arange(3.0), np.zeros(3), np.zeros(3), filtered=True)


class TestLowPass(TestCase):
    def test_starts_quiescent_and_settles_to_dc(self):
        output = detection.lowpass(np.ones(2000), DT, 1.6)
        self.assertEqual(output[0], 0.0)
        self.assertLess(abs(output[-1] - 1.0), 1e-6)

    def test_rise_time_constant(self):
        output = detection.lowpass(np.ones(1000), DT, 1.6)
        crossing = np.argmax(output >= 1 - math.exp(-1))
        # discrete update; continuous-time value is 99.5 ns
        self.assertAlmostEqual(crossing * DT * 1000, 99.5, delta=1.0)

    def test_steady_state_attenuation_at_one_mhz(self):
        times = np.arange(20000) * DT
        output = detection.lowpass(np.sin(2 * np.pi * times), DT, 1.6)
        amplitude = np.max(np.abs(output[-2000:]))
        self.assertAlmostEqual(amplitude, 0.848, delta=0.01)
        self.assertAlmostEqual(detection.first_order_attenuation(1.0, 1.6), 0.848, delta=0.001)

    def test_wide_bandwidth_tracks_input(self):
        times = np.arange(6000) * 0.0005
        series = np.sin(2 * np.pi * times)
        output = detection.lowpass(series, 0.0005, 100.0)
        self.assertLess(np.max(np.abs(output[400:] - series[400:])), 0.02)

    def test_linearity(self):
        rng = np.random.default_rng(4)
        x, y = rng.normal(size=500), rng.normal(size=500)
        combined = detection.lowpass(2 * x - 3 * y, DT, 1.6)
        assert_allclose(combined, 2 * detection.lowpass(x, DT, 1.6) - 3 * detection.lowpass(y, DT, 1.6),
                        atol=1e-12)

    def test_unstable_gain_is_rejected(self):
        with self.assertRaises(ConfigError):
            detection.lowpass(np.ones(10), 0.1, 1.6)

    def test_filters_along_the_requested_axis(self):
        columns = np.ones((500, 3))
        output = detection.lowpass(columns, DT, 1.6, axis=0)
        assert_allclose(output[:, 0], detection.lowpass(np.ones(500), DT, 1.6))


class TestCascadedLowPass(TestCase):
    def test_first_order_is_the_plain_filter(self):
        series = np.random.default_rng(1).normal(size=300)
        assert_allclose(CascadedLowPass(1.6).apply(series, DT), detection.lowpass(series, DT, 1.6))

    def test_three_db_point_is_kept_for_any_order(self):
        for order in (1, 2, 4):
            self.assertAlmostEqual(CascadedLowPass(1.6, order).attenuation(1.6), 1 / math.sqrt(2), places=12)

    def test_higher_order_rolls_off_faster(self):
        self.assertLess(CascadedLowPass(1.6, 3).attenuation(4.0), CascadedLowPass(1.6, 1).attenuation(4.0))

    def test_order_must_be_positive(self):
        with self.assertRaises(ConfigError):
            CascadedLowPass(1.6, 0)

    def test_engine_is_resolved_by_dotted_path(self):
        det = DetectionConfig(filter_order=2)
        detector = detection.get_filter(det, 'fluoro.detection.CascadedLowPass')
        self.assertIsInstance(detector, CascadedLowPass)
        self.assertEqual(detector.order, 2)
        with self.assertRaises(ConfigError):
            detection.get_filter(det, 'fluoro.detection.NoSuchFilter')


class TestFresnelTraces(TestCase):
    @classmethod
    def setUpClass(cls):
        cls.model = ModelConfig()
        cls.det = DetectionConfig()
        cls.traces = detection.fresnel_traces(cls.model, cls.det)

    def test_one_trace_per_amplitude_and_preparation(self):
        self.assertEqual([(trace.nu_r, trace.prep) for trace in self.traces],
                         [(0.6, 'g'), (0.6, 'e'), (1.0, 'g'), (1.0, 'e'), (1.4, 'g'), (1.4, 'e')])

    def test_offsets_grow_with_drive_amplitude(self):
        offsets = [trace.offset for trace in self.traces if trace.prep == 'e']
        assert_allclose(offsets, [self.det.crosstalk * nu_r for nu_r in (0.6, 1.0, 1.4)])

    def test_oscillation_stays_on_the_real_quadrature(self):
        for trace in self.traces:
            assert_allclose(trace.raw.v_im, trace.offset.imag, atol=1e-12)

    def test_filter_lowers_amplitude_and_slows_rise(self):
        det = DetectionConfig(crosstalk_re=0.0, crosstalk_im=0.0)
        for trace in detection.fresnel_traces(self.model, det, rabi_freqs=(0.6, 1.4)):
            s_raw = detection.extract_s_minus(trace.raw, det)
            s_filtered = detection.extract_s_minus(trace.filtered, det)
            self.assertLess(np.max(np.abs(s_filtered)), np.max(np.abs(s_raw)))
            self.assertLess(abs(s_filtered[1] - s_filtered[0]), abs(s_raw[1] - s_raw[0]))
            self.assertTrue(trace.filtered.filtered)

    def test_population_runs_from_prepared_state(self):
        excited = next(trace for trace in self.traces if trace.prep == 'e')
        self.assertAlmostEqual(excited.sigma_z[0], 1 - 2 * self.model.p0, places=12)


class TestFilterMap(TestCase):
    def test_each_column_is_filtered_in_time(self):
        model = ModelConfig()
        rabi = np.array([0.5, 1.0])
        conditional_map = weak.build_map(model, rabi, 'pre_only', 'e', 'none')
        filtered = detection.filter_map(conditional_map, DetectionConfig())
        expected = detection.lowpass(conditional_map.values[:, 1].real, model.dt, 1.6)
        assert_allclose(filtered.values[:, 1].real, expected, atol=1e-12)
        self.assertEqual(filtered.values[0, 0], 0)

    def test_missing_cells_cannot_be_filtered(self):
        values = np.array([[0.1, np.nan], [0.2, 0.3]], dtype=np.complex128)
        conditional_map = weak.ConditionalMap(np.array([0.0, 0.01]), np.array([0.5, 1.0]), values,
                                              'pre_and_post', 'e', 'g', np.ones((2, 2)))
        with self.assertRaises(NumericalError):
            detection.filter_map(conditional_map, DetectionConfig())
