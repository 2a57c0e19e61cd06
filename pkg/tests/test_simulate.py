"""Simulator contracts: arrival alignment, polarity, superposition, determinism."""

import numpy as np
import pytest
from numpy.testing import assert_allclose

from fibertraffic.scene import (Direction, SceneConfig, Trajectory, VehicleSpec,
                                build_sensor_layout)
from fibertraffic.simulate import synthesize
from fibertraffic.types import CalibrationTable, ChannelCalibration, Pattern

FS = 250.0


def _layout(n=60, spool=(), seed=3, flipped=0.0):
    return build_sensor_layout(n, 1.0, spool_segments=spool, seed=seed,
                               flipped_fraction=flipped,
                               transmissibility_range=(4000.0, 9000.0))


def _scene(sensors, vehicles, duration=30.0, **kw):
    return SceneConfig(sensors=sensors, vehicles=tuple(vehicles), duration_s=duration,
                       sample_rate_hz=FS, **kw)


def _one_car(speed=10.0, lane=3.0, start=-80.0, end=140.0, t0=1.0, weight=1.47):
    spec = VehicleSpec(weight_tons=weight, wheelbase_m=2.7, label="sedan")
    traj = Trajectory.constant_speed(t0, start, speed, end, lane)
    return spec, traj


class TestSynthesize:
    def test_peak_at_ground_truth_arrival(self):
        sensors = _layout()
        cm, truth = synthesize(_scene(sensors, [_one_car()]), seed=0)
        arrivals = truth.arrivals["v000"]
        for k in (10, 30, 50):
            ch = cm.channel(k)
            t_peak = cm.start_time + np.argmax(np.abs(ch)) / FS
            assert abs(t_peak - arrivals[k]) <= 1.0 / FS

    def test_flipped_channel_shows_minimum(self):
        entries = [ChannelCalibration(k, float(k), -5000.0, Pattern.FLIPPED)
                   for k in range(40)]
        sensors = CalibrationTable(tuple(entries))
        cm, truth = synthesize(_scene(sensors, [_one_car(end=120.0)]), seed=0)
        k = 20
        ch = cm.channel(k)
        assert ch.min() < 0
        t_min = cm.start_time + np.argmin(ch) / FS
        assert abs(t_min - truth.arrivals["v000"][k]) <= 1.0 / FS

    def test_superposition_of_crossing_vehicles(self):
        sensors = _layout()
        car_out = _one_car(speed=10.0, start=-80.0, end=140.0, t0=0.0)
        # same vehicle inbound, crossing mid-road
        spec_in = VehicleSpec(weight_tons=1.47, wheelbase_m=2.7)
        traj_in = Trajectory.constant_speed(0.0, 140.0, 10.0, -80.0, 3.0)
        both, _ = synthesize(_scene(sensors, [car_out, (spec_in, traj_in)]), seed=0)
        only_a, _ = synthesize(_scene(sensors, [car_out]), seed=0)
        only_b, _ = synthesize(_scene(sensors, [(spec_in, traj_in)]), seed=0)
        assert_allclose(both.data, only_a.data + only_b.data, atol=1e-9)

    def test_weight_linearity_end_to_end(self):
        sensors = _layout()
        light, _ = synthesize(_scene(sensors, [_one_car(weight=1.0)]), seed=0)
        heavy, _ = synthesize(_scene(sensors, [_one_car(weight=2.0)]), seed=0)
        peaks_light = np.abs(light.data).max(axis=1)
        peaks_heavy = np.abs(heavy.data).max(axis=1)
        assert_allclose(peaks_heavy, 2.0 * peaks_light, rtol=1e-6)

    def test_reference_lane_peak_equals_t_times_weight(self):
        sensors = _layout()
        weight = 1.47
        cm, _ = synthesize(_scene(sensors, [_one_car(weight=weight)]), seed=0)
        k = 30
        t_k = sensors[k].transmissibility
        assert_allclose(np.abs(cm.channel(k)).max(), abs(t_k) * weight, rtol=1e-3)

    def test_determinism(self):
        sensors = _layout(spool=((20.0, 10.0),))
        scene = _scene(sensors, [_one_car()], noise_sigma=100.0, drift_amplitude=50.0)
        a, _ = synthesize(scene, seed=11)
        b, _ = synthesize(scene, seed=11)
        assert np.array_equal(a.data, b.data)
        c, _ = synthesize(scene, seed=12)
        assert not np.array_equal(a.data, c.data)

    def test_spooled_channels_noise_only(self):
        sensors = _layout(n=60, spool=((20.0, 10.0),))
        scene = _scene(sensors, [_one_car()], noise_sigma=0.0)
        cm, _ = synthesize(scene, seed=0)
        for k in range(20, 30):
            assert np.all(cm.channel(k) == 0.0)
        assert np.abs(cm.channel(10)).max() > 0

    def test_arrival_times_match_trajectory(self):
        sensors = _layout()
        spec, traj = _one_car(speed=12.5)
        cm, truth = synthesize(_scene(sensors, [(spec, traj)]), seed=0)
        for k, t_arr in truth.arrivals["v000"].items():
            pos = sensors[k].road_position_m
            assert abs(t_arr - traj.arrival_time_at(pos)) <= 1.0 / FS

    def test_overlapping_spools_rejected(self):
        sensors = _layout()
        with pytest.raises(ValueError, match="overlapping spool"):
            _scene(sensors, [_one_car()], spool_segments=((10.0, 20.0), (25.0, 10.0)))

    def test_wheel_impulses_present_at_feature(self):
        sensors = _layout()
        with_wheels, _ = synthesize(
            _scene(sensors, [_one_car()], road_features_m=(30.0,),
                   wheel_amplitude_per_ton=500.0), seed=0)
        without, _ = synthesize(_scene(sensors, [_one_car()]), seed=0)
        wavelet = with_wheels.data - without.data
        assert np.abs(wavelet[30]).max() > 100.0
        # coupling decays away from the feature
        assert np.abs(wavelet[59]).max() < np.abs(wavelet[30]).max() * 0.01


class TestTrajectory:
    def test_monotonicity_enforced(self):
        with pytest.raises(ValueError, match="increasing"):
            Trajectory(np.array([0.0, 1.0]), np.array([5.0, 1.0]),
                       Direction.OUTBOUND, 3.0)

    def test_arrival_and_speed(self):
        traj = Trajectory.constant_speed(2.0, 0.0, 10.0, 100.0, 3.0)
        assert traj.arrival_time_at(50.0) == pytest.approx(7.0)
        assert traj.speed_at(5.0) == pytest.approx(10.0)
        assert np.isnan(traj.arrival_time_at(150.0))

    def test_inbound(self):
        traj = Trajectory.constant_speed(0.0, 100.0, 20.0, 0.0, 3.0)
        assert traj.direction is Direction.INBOUND
        assert traj.arrival_time_at(60.0) == pytest.approx(2.0)
