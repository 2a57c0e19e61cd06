"""Synthetic strain recordings with full ground truth.

Each coupled channel receives, per vehicle, the gauge-averaged half-space
kernel scaled so that a pass on the reference lane peaks at exactly
``T_k * weight``; other lanes scale by the kernel-peak ratio of the two
geometries. Wheel-impulse wavelets fire when each axle crosses a road
feature, and every channel carries white noise plus a sub-0.1 Hz drift.
Spooled channels receive noise only.
"""

from __future__ import annotations

import numpy as np
from scipy.signal import butter, sosfiltfilt

from .kernel import gauge_averaged_kernel, kernel_peak
from .scene import GroundTruth, SceneConfig, Trajectory
from .types import ChannelMatrix

# Per-channel contributions below this fraction of the channel's peak are
# skipped; keeps synthesis O(active window) instead of O(record length).
_KERNEL_TAIL_FRACTION = 1e-7
_DRIFT_CUTOFF_HZ = 0.1


def _kernel_reach_m(lane_offset_m, depth_m, gauge_length_m) -> float:
    peak = kernel_peak(lane_offset_m, depth_m, 1.0, gauge_length_m)
    reach = gauge_length_m / 2.0 + 1.0
    while gauge_averaged_kernel(reach, lane_offset_m, depth_m, 1.0, gauge_length_m) > _KERNEL_TAIL_FRACTION * peak:
        reach *= 1.5
        if reach > 1e5:
            break
    return reach


def _wheel_wavelet(t_rel: np.ndarray, freq_hz: float, decay_s: float) -> np.ndarray:
    w = np.zeros_like(t_rel)
    m = t_rel >= 0
    w[m] = np.exp(-t_rel[m] / decay_s) * np.sin(2.0 * np.pi * freq_hz * t_rel[m])
    return w


def synthesize(scene: SceneConfig, seed: int = 0) -> tuple[ChannelMatrix, GroundTruth]:
    """Render a scene into a (ChannelMatrix, GroundTruth) pair.

    Deterministic for a given (scene, seed); noise streams are spawned per
    channel from the seed, so the result does not depend on evaluation order.
    """
    fs = scene.sample_rate_hz
    n = int(round(scene.duration_s * fs))
    t = scene.start_time + np.arange(n) / fs
    data = np.zeros((len(scene.sensors), n))

    ref_peak = kernel_peak(scene.reference_lane_offset_m, scene.depth_m, 1.0, scene.gauge_length_m)

    vehicle_ids = [f"v{i:03d}" for i in range(len(scene.vehicles))]
    arrivals: dict[str, dict[int, float]] = {vid: {} for vid in vehicle_ids}

    # Vehicle position series over the record, computed once per vehicle;
    # clamped outside the pass (a stopped vehicle keeps loading the ground).
    veh_pos = [traj.position_at(t) for _, traj in scene.vehicles]
    lane_cache: dict[float, tuple[float, float, float]] = {}

    def lane_params(offset_m: float):
        if offset_m not in lane_cache:
            pk = kernel_peak(offset_m, scene.depth_m, 1.0, scene.gauge_length_m)
            lane_cache[offset_m] = (pk / ref_peak, pk, _kernel_reach_m(
                offset_m, scene.depth_m, scene.gauge_length_m))
        return lane_cache[offset_m]

    for idx, entry in enumerate(scene.sensors):
        if entry.spooled:
            continue
        pos = entry.road_position_m
        for vi, (spec, traj) in enumerate(scene.vehicles):
            scale, peak_here, reach = lane_params(traj.lane_offset_m)
            xv = veh_pos[vi]
            a, b = _reach_slice(xv, traj, pos, reach)
            if b > a:
                delta = xv[a:b] - pos
                shape = gauge_averaged_kernel(delta, traj.lane_offset_m, scene.depth_m, 1.0,
                                              scene.gauge_length_m) / peak_here
                data[idx, a:b] += entry.transmissibility * spec.weight_tons * scale * shape
            t_in = traj.arrival_time_at(pos)
            if not np.isnan(t_in) and t[0] <= t_in <= t[-1]:
                arrivals[vehicle_ids[vi]][entry.channel_index] = t_in

    if scene.wheel_amplitude_per_ton > 0 and scene.road_features_m:
        _add_wheel_impulses(data, t, scene, vehicle_ids)

    _add_noise(data, scene, seed, fs, n)

    cm = ChannelMatrix(
        data=data,
        sample_rate_hz=fs,
        start_time=scene.start_time,
        channel_spacing_m=scene.channel_spacing_m,
        gauge_length_m=scene.gauge_length_m,
    )
    truth = GroundTruth(
        vehicles=tuple((vid, spec, traj) for vid, (spec, traj) in zip(vehicle_ids, scene.vehicles)),
        arrivals=arrivals,
        sensors=scene.sensors,
    )
    return cm, truth


def _reach_slice(xv: np.ndarray, traj: Trajectory, pos: float, reach: float) -> tuple[int, int]:
    """Index range of samples where the vehicle is within kernel reach."""
    from .scene import Direction

    if traj.direction is Direction.OUTBOUND:
        a = int(np.searchsorted(xv, pos - reach, side="left"))
        b = int(np.searchsorted(xv, pos + reach, side="right"))
    else:
        neg = -xv  # ascending
        a = int(np.searchsorted(neg, -(pos + reach), side="left"))
        b = int(np.searchsorted(neg, -(pos - reach), side="right"))
    return a, b


def _add_wheel_impulses(data, t, scene: SceneConfig, vehicle_ids):
    positions = scene.sensors.road_positions()
    wave_dur = scene.wheel_decay_s * 8.0
    for vid, (spec, traj) in zip(vehicle_ids, scene.vehicles):
        for feat in scene.road_features_m:
            t_front = traj.arrival_time_at(feat)
            if np.isnan(t_front):
                continue
            v = traj.speed_at(t_front)
            axle_times = [t_front, t_front + spec.wheelbase_m / v]
            for idx, entry in enumerate(scene.sensors):
                if entry.spooled:
                    continue
                dist = abs(positions[idx] - feat)
                if dist > scene.wheel_coupling_radius_m * 3:
                    continue
                coupling = np.exp(-0.5 * (dist / scene.wheel_coupling_radius_m) ** 2)
                amp = scene.wheel_amplitude_per_ton * spec.weight_tons * coupling
                for ta in axle_times:
                    a = int(np.searchsorted(t, ta))
                    b = int(np.searchsorted(t, ta + wave_dur))
                    if a >= t.size or b <= a:
                        continue
                    data[idx, a:b] += amp * _wheel_wavelet(
                        t[a:b] - ta, scene.wheel_frequency_hz, scene.wheel_decay_s
                    )


def _add_noise(data, scene: SceneConfig, seed: int, fs: float, n: int):
    if scene.noise_sigma == 0 and scene.drift_amplitude == 0:
        return
    drift_sos = None
    if scene.drift_amplitude > 0:
        drift_sos = butter(2, _DRIFT_CUTOFF_HZ, btype="low", fs=fs, output="sos")
    root = np.random.SeedSequence(seed)
    children = root.spawn(data.shape[0])
    for idx, entry in enumerate(scene.sensors):
        rng = np.random.default_rng(children[idx])
        if scene.noise_sigma > 0:
            data[idx] += rng.normal(0.0, scene.noise_sigma, n)
        if drift_sos is not None and not entry.spooled:
            walk = np.cumsum(rng.normal(0.0, 1.0, n))
            drift = sosfiltfilt(drift_sos, walk)
            rms = np.sqrt(np.mean(drift**2))
            if rms > 0:
                data[idx] += drift * (scene.drift_amplitude / rms)
