"""Per-track vehicle characterization: wheelbase from the lag of repeating
wheel impulses in the high-passed signal at road features, weight from the
transmissibility-normalized quasi-static prominences."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .filters import highpass_wheel
from .tracker import VehicleTrack
from .types import CalibrationTable, ChannelMatrix

WHEELBASE_MIN_M = 1.5
WHEELBASE_MAX_M = 12.0


@dataclass(frozen=True)
class VehicleCharacter:
    """Wheelbase and weight estimates with per-channel spread.

    Either estimate may be None (no usable channels); spreads are standard
    deviations over the contributing channels.
    """

    wheelbase_m: float | None
    wheelbase_spread_m: float
    weight_tons: float | None
    weight_spread_tons: float
    n_channels_used: int
    n_feature_channels_used: int

    def __post_init__(self):
        if self.wheelbase_m is not None and not (self.wheelbase_m > 0):
            raise ValueError(f"wheelbase_m must be > 0, got {self.wheelbase_m}")
        if self.weight_tons is not None and not (self.weight_tons > 0):
            raise ValueError(f"weight_tons must be > 0, got {self.weight_tons}")
        if self.wheelbase_spread_m < 0 or self.weight_spread_tons < 0:
            raise ValueError("spreads must be >= 0")


def _autocorr(x: np.ndarray) -> np.ndarray:
    x = x - x.mean()
    return np.correlate(x, x, mode="full")[x.size - 1:]


def _refined_argmax(r: np.ndarray, lo: int, hi: int, n: int) -> float | None:
    """Sub-sample argmax of r over [lo, hi] via parabolic refinement.

    The argmax runs on the raw (stable) estimate; the three-point refinement
    uses locally unbiased values, since the finite-window (1 - lag/N) taper
    tilts the apex toward zero lag.
    """
    if hi <= lo or hi >= r.size:
        return None
    seg = r[lo : hi + 1]
    i = int(np.argmax(seg)) + lo
    if i <= 0 or i >= r.size - 1:
        return float(i)
    y = r[i - 1 : i + 2] / (n - np.arange(i - 1, i + 2))
    denom = y[0] - 2.0 * y[1] + y[2]
    if denom == 0:
        return float(i)
    return i + float(np.clip(0.5 * (y[0] - y[2]) / denom, -0.5, 0.5))


def estimate_wheelbase(track: VehicleTrack, das: ChannelMatrix,
                       feature_channels, snr_floor: float = 4.5,
                       window_pad_s: float = 0.5, exclude_windows=None):
    """Wheelbase from the repeating wheel-impulse pattern at road features.

    For every feature channel covered by the track: window the high-passed
    channel around the track's arrival, autocorrelate, and take the refined
    lag of the autocorrelation maximum inside the physically plausible lag
    band [1.5 m / v, 12 m / v] (which also excludes the zero-lag lobe);
    wheelbase is that lag times the local speed. The final estimate is the
    median over feature channels. The SNR gate compares the windowed peak to
    the channel's robust noise scale, since the impulses are sparse in the
    window.

    ``exclude_windows`` maps channel -> [(t0, t1), ...] of intervals where
    other vehicles' wheel impulses contaminate the channel; overlapping
    feature windows are skipped. Returns (wheelbase_m, spread_m, n_used) or
    None when no feature channel clears the gates.
    """
    fs = das.sample_rate_hz
    arrivals = {p.channel_index: p.smoothed.arrival_time for p in track.points}
    speeds = dict(zip([p.channel_index for p in track.points], track.speeds_mps()))
    estimates = []
    for ch in feature_channels:
        ch = int(ch)
        if ch not in arrivals or ch >= das.channel_count:
            continue
        v = speeds[ch]
        if not (0.1 < v < 100.0):
            continue
        tau_max = WHEELBASE_MAX_M / v
        t_arr = arrivals[ch] - das.start_time
        lo_t = t_arr - window_pad_s - 3.0 / v
        hi_t = t_arr + tau_max + window_pad_s
        if exclude_windows and any(
            w0 < hi_t + das.start_time and w1 > lo_t + das.start_time
            for w0, w1 in exclude_windows.get(ch, ())
        ):
            continue
        hp = highpass_wheel(das.channel(ch), fs)
        noise = 1.4826 * np.median(np.abs(hp - np.median(hp)))
        a = max(0, int(lo_t * fs))
        b = min(hp.size, int(hi_t * fs) + 1)
        seg = hp[a:b]
        if seg.size < 8:
            continue
        if noise > 0 and np.abs(seg).max() < snr_floor * noise:
            continue
        r = _autocorr(seg)
        lo = max(1, int(math.ceil(WHEELBASE_MIN_M / v * fs)))
        hi = min(r.size - 2, int(math.floor(tau_max * fs)))
        lag = _refined_argmax(r, lo, hi, seg.size)
        if lag is None:
            continue
        estimates.append(lag / fs * v)
    if not estimates:
        return None
    est = np.asarray(estimates)
    return float(np.median(est)), float(np.std(est)), est.size


def estimate_weight(track: VehicleTrack, calib: CalibrationTable,
                    min_channels: int = 5, outlier_mads: float = 3.0):
    """Weight as the mean of prominence / |T_k| over associated channels.

    Channels without an associated detection or with spooled calibration are
    skipped; the normalizing count is the number of channels actually used.
    Channels whose ratio sits more than ``outlier_mads`` MADs from the median
    are dropped before averaging: superposed passes (masking, crosstalk)
    corrupt a minority of per-channel prominences and would otherwise bias
    the plain mean. Returns (weight_tons, spread_tons, n_used) or None when
    fewer than ``min_channels`` channels are usable.
    """
    ratios = []
    for p in track.points:
        if not p.associated:
            continue
        try:
            entry = calib[p.channel_index]
        except KeyError:
            continue
        if entry.spooled:
            continue
        ratios.append(p.detection.prominence / abs(entry.transmissibility))
    if len(ratios) < min_channels:
        return None
    r = np.asarray(ratios)
    if outlier_mads is not None and r.size >= 5:
        med = np.median(r)
        mad = np.median(np.abs(r - med))
        if mad > 0:
            r = r[np.abs(r - med) <= outlier_mads * 1.4826 * mad]
    if r.size < min_channels:
        return None
    return float(r.mean()), float(r.std()), r.size


def characterize_track(track: VehicleTrack, das: ChannelMatrix, calib: CalibrationTable,
                       feature_channels, min_weight_channels: int = 5,
                       snr_floor: float = 4.5, exclude_windows=None) -> VehicleCharacter:
    """Bundle wheelbase and weight estimation for one track."""
    wb = estimate_wheelbase(track, das, feature_channels, snr_floor=snr_floor,
                            exclude_windows=exclude_windows)
    wt = estimate_weight(track, calib, min_channels=min_weight_channels)
    return VehicleCharacter(
        wheelbase_m=None if wb is None else wb[0],
        wheelbase_spread_m=0.0 if wb is None else wb[1],
        weight_tons=None if wt is None else wt[0],
        weight_spread_tons=0.0 if wt is None else wt[1],
        n_channels_used=0 if wt is None else wt[2],
        n_feature_channels_used=0 if wb is None else wb[2],
    )
