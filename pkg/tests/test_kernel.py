"""Half-space kernel shape contracts and gauge averaging."""

import numpy as np
import pytest
from numpy.testing import assert_allclose

from fibertraffic.kernel import (gauge_average, gauge_averaged_kernel, kernel_peak,
                                 quasistatic_kernel)

B, D = 3.0, 1.5


class TestQuasistaticKernel:
    def test_weight_proportionality(self):
        for dist in (0.0, 2.0, 11.0):
            one = quasistatic_kernel(dist, B, D, 1.0)
            two = quasistatic_kernel(dist, B, D, 2.0)
            assert_allclose(two, 2.0 * one, rtol=1e-14)

    @pytest.mark.parametrize("dist", [1.0, 5.0, 20.0])
    def test_even_in_distance(self, dist):
        assert quasistatic_kernel(dist, B, D, 1.0) == quasistatic_kernel(-dist, B, D, 1.0)

    def test_amplitude_decays_with_offset(self):
        assert quasistatic_kernel(0.0, 6.0, D, 1.0) < quasistatic_kernel(0.0, 3.0, D, 1.0)

    def test_bell_shape(self):
        x = np.linspace(0, 50, 1001)
        k = quasistatic_kernel(x, B, D, 1.0)
        assert np.all(k > 0)
        assert np.all(np.diff(k) < 0)  # strictly decreasing away from apex

    def test_singularity_guard(self):
        with pytest.raises(ValueError, match="lane_offset_m"):
            quasistatic_kernel(0.0, 0.0, D, 1.0)
        with pytest.raises(ValueError, match="depth_m"):
            quasistatic_kernel(0.0, B, -1.0, 1.0)


class TestGaugeAveragedKernel:
    def test_matches_numerical_quadrature(self):
        # closed-form gauge mean vs adaptive quadrature of the point kernel
        from scipy.integrate import quad

        gauge = 10.0
        for delta in (0.0, 3.0, 7.5, 15.0):
            num = quad(lambda x: quasistatic_kernel(x, B, D, 1.0),
                       delta - gauge / 2, delta + gauge / 2, epsrel=1e-13)[0] / gauge
            ana = gauge_averaged_kernel(delta, B, D, 1.0, gauge)
            assert_allclose(ana, num, rtol=1e-12)

    def test_unimodal_and_positive(self):
        x = np.linspace(-40, 40, 4001)
        g = gauge_averaged_kernel(x, B, D, 1.0, 10.0)
        assert np.all(g > 0)
        apex = np.argmax(g)
        assert abs(x[apex]) < 0.05
        assert np.all(np.diff(g[: apex + 1]) >= 0)
        assert np.all(np.diff(g[apex:]) <= 0)

    def test_zero_gauge_reduces_to_point_kernel(self):
        assert gauge_averaged_kernel(2.0, B, D, 1.0, 0.0) == quasistatic_kernel(2.0, B, D, 1.0)

    def test_peak_ratio_decreases_with_offset(self):
        near = kernel_peak(3.0, D, gauge_length_m=10.0)
        far = kernel_peak(6.0, D, gauge_length_m=10.0)
        assert 0 < far < near


class TestGaugeAverage:
    def test_constant_field(self):
        vals = gauge_average(np.full(1001, 4.2), 0.1, 10.0, 1.0)
        assert vals.size > 0
        assert_allclose(vals, 4.2, rtol=1e-12)

    def test_linear_field_gives_window_centers(self):
        dx = 0.5
        field_pos = np.arange(201) * dx  # 100 m extent
        a = 0.3
        vals = gauge_average(a * field_pos, dx, 10.0, 1.0)
        centers = 5.0 + np.arange(vals.size) * 1.0
        assert_allclose(vals, a * centers, rtol=1e-12)

    def test_impulse_plateau_width_near_gauge(self):
        dx = 0.25
        field = np.zeros(2001)  # 500 m extent
        field[1000] = 1.0  # impulse at 250 m
        gauge = 10.0
        vals = gauge_average(field, dx, gauge, 1.0)
        hit = np.where(vals > 0)[0]
        width_m = (hit.max() - hit.min()) * 1.0
        assert abs(width_m - gauge) <= 1.0

    def test_gauge_must_cover_spacing(self):
        with pytest.raises(ValueError, match="gauge_length_m"):
            gauge_average(np.zeros(100), 1.0, 0.5, 1.0)
