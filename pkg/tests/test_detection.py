"""Detection contracts: prominence scan vs brute-force oracle, threshold
scaling, polarity symmetry."""

import numpy as np
import pytest
from numpy.testing import assert_allclose

from fibertraffic.detection import (DetectorConfig, WINDOW_SPACING, detect_matrix,
                                    per_sensor_detect, prominence_scan)
from fibertraffic.types import (CalibrationTable, ChannelCalibration, ChannelMatrix,
                                Detection, Pattern, Polarity)

from oracles import brute_prominence_scan

FS = 250.0


def _entry(k=0, t=5000.0, pos=None):
    pattern = Pattern.BELL if t > 0 else Pattern.FLIPPED
    return ChannelCalibration(k, float(k) if pos is None else pos, t, pattern)


class TestProminenceScan:
    def test_single_triangle(self):
        x = np.zeros(200)
        x[90:101] = np.linspace(0, 2.0, 11)
        x[100:111] = np.linspace(2.0, 0, 11)
        times, proms, idx = prominence_scan(x, FS)
        assert idx.tolist() == [100]
        assert proms[0] == pytest.approx(2.0)
        assert times[0] == pytest.approx(100 / FS, abs=0.5 / FS)

    def test_monotone_ramp_empty(self):
        times, proms, idx = prominence_scan(np.arange(100.0), FS)
        assert idx.size == 0

    @pytest.mark.parametrize("window_s", [None, 0.5, 0.1])
    def test_matches_brute_force_oracle(self, window_s):
        rng = np.random.default_rng(2024)
        for _ in range(5):
            x = rng.standard_normal(3000)
            _, proms, idx = prominence_scan(x, FS, window_s)
            half = None if window_s is None else int(round(window_s * FS))
            oracle_idx, oracle_proms = brute_prominence_scan(x, half)
            assert np.array_equal(idx, oracle_idx)
            assert np.array_equal(proms, oracle_proms)

    def test_valley_polarity_is_mirrored(self):
        rng = np.random.default_rng(5)
        x = rng.standard_normal(2000)
        tp, pp, ip = prominence_scan(x, FS, 0.5, Polarity.PEAK)
        tv, pv, iv = prominence_scan(-x, FS, 0.5, Polarity.VALLEY)
        assert np.array_equal(ip, iv)
        assert np.array_equal(pp, pv)
        assert_allclose(tp, tv, atol=1e-12)

    def test_subsample_refinement(self):
        # quadratic apex between samples: x(t) = 1 - (t - t*)^2
        t = np.arange(100) / FS
        t_star = 50.3 / FS
        x = 1.0 - ((t - t_star) * FS) ** 2 * 0.01
        times, _, _ = prominence_scan(x, FS)
        assert times[0] == pytest.approx(t_star, abs=1e-9 / FS)

    def test_non_finite_rejected(self):
        x = np.zeros(100)
        x[7] = np.inf
        with pytest.raises(ValueError, match="index 7"):
            prominence_scan(x, FS)


def _bell_series(amp, t_center=10.0, width=1.0, duration=20.0, noise=0.0, seed=0):
    t = np.arange(int(duration * FS)) / FS
    x = amp * np.exp(-0.5 * ((t - t_center) / width) ** 2)
    if noise:
        x = x + np.random.default_rng(seed).normal(0, noise, x.size)
    return x


class TestPerSensorDetect:
    def test_single_bell_detected_once(self):
        x = _bell_series(1000.0, noise=5.0)
        cfg = DetectorConfig(r0=100.0)
        dets = per_sensor_detect(x, FS, _entry(t=5000.0), 5000.0, cfg)
        assert len(dets) == 1
        assert dets[0].polarity is Polarity.PEAK
        assert abs(dets[0].time_s - 10.0) < 0.1

    def test_flipped_channel_valley(self):
        x = -_bell_series(1000.0, noise=5.0)
        cfg = DetectorConfig(r0=100.0)
        dets = per_sensor_detect(x, FS, _entry(t=-5000.0), 5000.0, cfg)
        assert len(dets) == 1
        assert dets[0].polarity is Polarity.VALLEY

    def test_polarity_symmetry_full_pipeline(self):
        rng = np.random.default_rng(9)
        x = _bell_series(800.0) + rng.normal(0, 20.0, int(20 * FS))
        cfg = DetectorConfig(r0=50.0)
        pos = per_sensor_detect(x, FS, _entry(t=4000.0), 4000.0, cfg)
        neg = per_sensor_detect(-x, FS, _entry(t=-4000.0), 4000.0, cfg)
        assert len(pos) == len(neg) > 0
        for a, b in zip(pos, neg):
            assert a.time_s == b.time_s
            assert a.prominence == b.prominence

    def test_threshold_scales_with_transmissibility(self):
        # doubling |T_k| and the signal together leaves the detection set intact
        rng = np.random.default_rng(3)
        x = _bell_series(600.0) + rng.normal(0, 30.0, int(20 * FS))
        cfg = DetectorConfig(r0=100.0)
        base = per_sensor_detect(x, FS, _entry(t=2000.0), 2000.0, cfg)
        scaled = per_sensor_detect(2 * x, FS, _entry(t=4000.0), 2000.0, cfg)
        assert [d.time_s for d in base] == [d.time_s for d in scaled]
        assert_allclose([d.prominence * 2 for d in base],
                        [d.prominence for d in scaled], rtol=1e-12)

    def test_amplitude_equivariance(self):
        rng = np.random.default_rng(13)
        x = _bell_series(500.0) + rng.normal(0, 25.0, int(20 * FS))
        a = 3.7
        d1 = per_sensor_detect(x, FS, _entry(t=1000.0), 1000.0, DetectorConfig(r0=80.0))
        d2 = per_sensor_detect(a * x, FS, _entry(t=1000.0), 1000.0,
                               DetectorConfig(r0=80.0 * a))
        assert [d.time_s for d in d1] == [d.time_s for d in d2]

    def test_r0_monotonicity(self):
        rng = np.random.default_rng(21)
        x = rng.normal(0, 50.0, int(40 * FS)) + _bell_series(400.0, duration=40.0)
        entry = _entry(t=1000.0)
        sets = []
        for r0 in (30.0, 60.0, 120.0, 240.0):
            dets = per_sensor_detect(x, FS, entry, 1000.0, DetectorConfig(r0=r0))
            sets.append({(d.time_s, d.prominence) for d in dets})
        for small, big in zip(sets, sets[1:]):
            assert big <= small

    def test_spooled_channel_empty(self):
        entry = ChannelCalibration(0, float("nan"), None, Pattern.SPOOLED)
        dets = per_sensor_detect(_bell_series(100.0), FS, entry, 1000.0,
                                 DetectorConfig(r0=10.0))
        assert dets == []

    def test_spacing_mode_one_per_window(self):
        # two bells 0.6 s apart merge under spacing mode, survive bounded mode
        t = np.arange(int(20 * FS)) / FS
        x = (1000.0 * np.exp(-0.5 * ((t - 10.0) / 0.15) ** 2)
             + 900.0 * np.exp(-0.5 * ((t - 10.6) / 0.15) ** 2))
        entry = _entry(t=5000.0)
        bounded = per_sensor_detect(x, FS, entry, 5000.0,
                                    DetectorConfig(r0=100.0, span_s=0.2))
        spacing = per_sensor_detect(x, FS, entry, 5000.0,
                                    DetectorConfig(r0=100.0, span_s=0.2,
                                                   window_mode=WINDOW_SPACING))
        assert len(bounded) == 2
        assert len(spacing) == 1
        assert abs(spacing[0].time_s - 10.0) < 0.1  # larger prominence wins


class TestDetectMatrix:
    def test_channels_and_diagnostics(self):
        t = np.arange(int(20 * FS)) / FS
        bell = 1000.0 * np.exp(-0.5 * ((t - 8.0) / 1.0) ** 2)
        data = np.vstack([bell, np.zeros_like(bell), -bell])
        cm = ChannelMatrix(data, FS, start_time=100.0)
        entries = (
            ChannelCalibration(0, 0.0, 5000.0, Pattern.BELL),
            ChannelCalibration(1, float("nan"), None, Pattern.SPOOLED),
            ChannelCalibration(2, 2.0, -5000.0, Pattern.FLIPPED),
        )
        table = CalibrationTable(entries)
        result = detect_matrix(cm, table, DetectorConfig(r0=100.0))
        assert result.spooled_skipped == (1,)
        by_ch = result.by_channel()
        assert set(by_ch) == {0, 2}
        # absolute times include the record start
        assert abs(by_ch[0][0].time_s - 108.0) < 0.1
