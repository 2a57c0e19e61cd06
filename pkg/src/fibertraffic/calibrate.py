"""System characterization from driving tests: clock sync via tap tests,
per-channel geo-localization from GPS tracks, transmissibility estimation,
and signal-pattern classification."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .filters import lowpass_quasistatic
from .kernel import kernel_peak
from .types import (CalibrationTable, ChannelCalibration, ChannelMatrix, Pattern,
                    classify_pattern)


@dataclass(frozen=True)
class TapEvent:
    """One tap test: the same physical knock in both clocks."""

    das_time_s: float
    reference_time_s: float

    def __post_init__(self):
        if not (math.isfinite(self.das_time_s) and math.isfinite(self.reference_time_s)):
            raise ValueError("tap times must be finite")


def sync_clocks(taps: list[TapEvent]) -> tuple[float, float]:
    """Clock offset (reference minus recorder) from tap tests.

    Returns (offset_s, spread_s); the offset is the mean difference, the
    spread the max-min range across taps (0 for a single tap) for QA.
    """
    if not taps:
        raise ValueError("need at least one tap event")
    diffs = np.array([t.reference_time_s - t.das_time_s for t in taps])
    return float(diffs.mean()), float(diffs.max() - diffs.min())


@dataclass(frozen=True)
class GpsTrack:
    """One driving-test pass: raw ~1 Hz GPS fixes plus their road projection.

    Times are in the reference (GPS) clock; ``road_positions_m`` come from
    nearest-point projection onto the road centerline.
    """

    times_s: np.ndarray
    lats: np.ndarray
    lons: np.ndarray
    road_positions_m: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.times_s, dtype=float)
        if np.any(np.diff(t) <= 0):
            raise ValueError("GPS times must be strictly increasing")
        for name in ("lats", "lons", "road_positions_m"):
            a = np.asarray(getattr(self, name), dtype=float)
            if a.shape != t.shape or not np.all(np.isfinite(a)):
                raise ValueError(f"{name} must be finite and match times")
            object.__setattr__(self, name, a)
        object.__setattr__(self, "times_s", t)

    @classmethod
    def from_fixes(cls, times_s, lats, lons, centerline) -> "GpsTrack":
        lats = np.asarray(lats, dtype=float)
        lons = np.asarray(lons, dtype=float)
        pos = np.array([project_to_road(la, lo, centerline) for la, lo in zip(lats, lons)])
        return cls(np.asarray(times_s, dtype=float), lats, lons, pos)

    def position_at(self, t_ref):
        """Road position at reference-clock time(s), linear interpolation."""
        return np.interp(t_ref, self.times_s, self.road_positions_m)

    def arrival_at_position(self, position_m: float) -> float:
        """Reference-clock time the test vehicle passes a road position."""
        pos = self.road_positions_m
        if pos[0] <= pos[-1]:
            return float(np.interp(position_m, pos, self.times_s))
        return float(np.interp(position_m, pos[::-1], self.times_s[::-1]))

    @property
    def span(self) -> tuple[float, float]:
        return float(self.times_s[0]), float(self.times_s[-1])


_M_PER_DEG_LAT = 111_320.0


def project_to_road(lat: float, lon: float, centerline) -> float:
    """Distance along a polyline centerline of the nearest point to (lat, lon).

    The centerline is a sequence of (lat, lon) vertices; a local
    equirectangular projection around its first vertex is used, which is
    adequate for sub-kilometer road sections.
    """
    pts = np.asarray(centerline, dtype=float)
    if pts.ndim != 2 or pts.shape[0] < 2 or pts.shape[1] != 2:
        raise ValueError("centerline must be a sequence of at least two (lat, lon) points")
    lat0 = pts[0, 0]
    scale_lon = _M_PER_DEG_LAT * math.cos(math.radians(lat0))
    xy = np.column_stack([(pts[:, 1] - pts[0, 1]) * scale_lon,
                          (pts[:, 0] - pts[0, 0]) * _M_PER_DEG_LAT])
    p = np.array([(lon - pts[0, 1]) * scale_lon, (lat - pts[0, 0]) * _M_PER_DEG_LAT])
    seg = np.diff(xy, axis=0)
    seg_len = np.hypot(seg[:, 0], seg[:, 1])
    cum = np.concatenate([[0.0], np.cumsum(seg_len)])
    best = (math.inf, 0.0)
    for i in range(seg.shape[0]):
        if seg_len[i] == 0:
            continue
        rel = p - xy[i]
        frac = np.clip(np.dot(rel, seg[i]) / seg_len[i] ** 2, 0.0, 1.0)
        foot = xy[i] + frac * seg[i]
        d = float(np.hypot(*(p - foot)))
        if d < best[0]:
            best = (d, float(cum[i] + frac * seg_len[i]))
    return best[1]


@dataclass(frozen=True)
class GeolocationResult:
    """Per-channel geo-localization output."""

    positions_m: np.ndarray          # NaN where spooled
    spooled: np.ndarray              # bool mask
    per_run_positions_m: np.ndarray  # (runs, channels)
    prominences: np.ndarray          # mean |prominence| of the test pass


def _channel_pass_extremum(dev: np.ndarray, fs: float, lo_t: float, hi_t: float):
    """Strongest deviation from baseline within a time window.

    Returns (refined time_s from record start, signed deviation).
    """
    a = max(0, int(lo_t * fs))
    b = min(dev.size, int(hi_t * fs) + 1)
    if b - a < 3:
        return math.nan, 0.0
    seg = dev[a:b]
    i = int(np.argmax(np.abs(seg)))
    j = a + i
    t = j / fs
    if 0 < j < dev.size - 1:
        y = dev if seg[i] >= 0 else -dev
        denom = y[j - 1] - 2.0 * y[j] + y[j + 1]
        if denom != 0:
            t = (j + float(np.clip(0.5 * (y[j - 1] - y[j + 1]) / denom, -0.5, 0.5))) / fs
    return t, float(seg[i])


def geolocate_channels(das: ChannelMatrix, runs: list[GpsTrack], offset_s: float,
                       spool_tolerance_m: float = 5.0,
                       prominence_floor_mads: float = 3.0,
                       outlier_mads: float = 3.0) -> GeolocationResult:
    """Locate every channel on the road from driving-test passes.

    Per channel and per run: low-pass the channel, find the strongest
    baseline deviation inside the run's window, and map its (clock-corrected)
    time through the run's time-to-position interpolation. The final position
    is the mean over runs after >3 MAD outlier rejection. Channels whose
    per-run positions disagree by more than ``spool_tolerance_m`` or whose
    pass prominence sits below ``prominence_floor_mads`` channel MADs are
    flagged spooled.
    """
    if not runs:
        raise ValueError("need at least one driving-test run")
    fs = das.sample_rate_hz
    k_total = das.channel_count
    n_runs = len(runs)
    per_run = np.full((n_runs, k_total), np.nan)
    proms = np.zeros(k_total)
    spooled = np.zeros(k_total, dtype=bool)
    positions = np.full(k_total, np.nan)

    for k in range(k_total):
        lp = lowpass_quasistatic(das.channel(k), fs)
        dev = lp - np.median(lp)
        mad = np.median(np.abs(dev - np.median(dev)))
        floor = prominence_floor_mads * 1.4826 * mad
        amps = []
        for r, run in enumerate(runs):
            lo_ref, hi_ref = run.span
            lo = lo_ref - offset_s - das.start_time
            hi = hi_ref - offset_s - das.start_time
            t_peak, amp = _channel_pass_extremum(dev, fs, lo, hi)
            if math.isnan(t_peak):
                continue
            amps.append(abs(amp))
            t_ref = das.start_time + t_peak + offset_s
            per_run[r, k] = run.position_at(t_ref)
        proms[k] = float(np.mean(amps)) if amps else 0.0
        got = per_run[:, k][np.isfinite(per_run[:, k])]
        if got.size == 0 or proms[k] < floor:
            spooled[k] = True
            continue
        if got.size > 1 and (got.max() - got.min()) > spool_tolerance_m:
            spooled[k] = True
            continue
        positions[k] = _mean_with_outlier_rejection(got, outlier_mads)

    return GeolocationResult(positions, spooled, per_run, proms)


def _mean_with_outlier_rejection(values: np.ndarray, n_mads: float) -> float:
    med = np.median(values)
    mad = np.median(np.abs(values - med))
    if mad == 0:
        return float(values.mean())
    keep = np.abs(values - med) <= n_mads * 1.4826 * mad
    return float(values[keep].mean()) if keep.any() else float(values.mean())


def estimate_transmissibility(das: ChannelMatrix, runs: list[GpsTrack],
                              positions_m: np.ndarray, test_weight_tons: float,
                              offset_s: float = 0.0,
                              search_window_s: float = 2.0) -> np.ndarray:
    """Signed transmissibility per channel from the test-vehicle passes.

    T_k is the mean signed prominence amplitude of the pass (the strongest
    baseline deviation near the GPS-predicted arrival, sign intact) divided
    by the test vehicle weight. Restricting the search to the predicted
    arrival keeps bystander traffic from hijacking the estimate. Channels
    with no position (spooled) get NaN.
    """
    if not (test_weight_tons > 0):
        raise ValueError(f"test_weight_tons must be > 0, got {test_weight_tons}")
    fs = das.sample_rate_hz
    out = np.full(das.channel_count, np.nan)
    for k in range(das.channel_count):
        pos = positions_m[k]
        if not np.isfinite(pos):
            continue
        lp = lowpass_quasistatic(das.channel(k), fs)
        dev = lp - np.median(lp)
        vals = []
        for run in runs:
            t_pred_ref = run.arrival_at_position(pos)
            t_pred = t_pred_ref - offset_s - das.start_time
            _, amp = _channel_pass_extremum(dev, fs, t_pred - search_window_s,
                                            t_pred + search_window_s)
            if amp != 0.0:
                vals.append(amp)
        if vals:
            out[k] = float(np.mean(vals)) / test_weight_tons
    return out


def extrapolate_lane(t_near: float, near_offset_m: float, far_offset_m: float,
                     depth_m: float, gauge_length_m: float = 0.0) -> float:
    """Predict a channel's transmissibility for a farther lane.

    Scales by the ratio of half-space kernel peaks at the two offsets
    (gauge-averaged when ``gauge_length_m`` > 0), preserving sign.
    """
    if not (near_offset_m > 0 and far_offset_m > 0):
        raise ValueError("lane offsets must be > 0")
    ratio = (kernel_peak(far_offset_m, depth_m, 1.0, gauge_length_m)
             / kernel_peak(near_offset_m, depth_m, 1.0, gauge_length_m))
    return t_near * ratio


def _isotonic_non_decreasing(y: np.ndarray) -> np.ndarray:
    """L2 isotonic projection (pool adjacent violators), unit weights."""
    vals: list[float] = []
    counts: list[int] = []
    for v in y:
        vals.append(float(v))
        counts.append(1)
        while len(vals) > 1 and vals[-1] < vals[-2]:
            total = vals[-1] * counts[-1] + vals[-2] * counts[-2]
            c = counts[-1] + counts[-2]
            vals.pop(), counts.pop()
            vals[-1], counts[-1] = total / c, c
    return np.repeat(vals, counts)


def build_calibration_table(das: ChannelMatrix, runs: list[GpsTrack],
                            taps: list[TapEvent], test_weight_tons: float,
                            centerline=None,
                            spool_tolerance_m: float = 5.0) -> CalibrationTable:
    """Full driving-test calibration: sync, geolocate, estimate T, classify.

    Channels whose position disagrees with their fiber-order neighborhood by
    more than the spool tolerance are uncoupled fiber that slipped through
    the per-run checks and get flagged spooled here; the survivors are
    projected onto a non-decreasing sequence (isotonic, a no-op up to GPS
    noise) so the table invariant holds.
    """
    from scipy.ndimage import median_filter

    offset_s, _spread = sync_clocks(taps)
    geo = geolocate_channels(das, runs, offset_s, spool_tolerance_m=spool_tolerance_m)
    t_k = estimate_transmissibility(das, runs, geo.positions_m, test_weight_tons,
                                    offset_s=offset_s)
    positions = geo.positions_m.copy()
    coupled = np.isfinite(positions) & ~geo.spooled & np.isfinite(t_k) & (t_k != 0)
    idx = np.where(coupled)[0]
    if idx.size >= 3:
        local = median_filter(positions[idx], size=min(11, idx.size), mode="nearest")
        inconsistent = np.abs(positions[idx] - local) > spool_tolerance_m
        coupled[idx[inconsistent]] = False
        idx = np.where(coupled)[0]
    if idx.size:
        positions[idx] = _isotonic_non_decreasing(positions[idx])

    entries = []
    for k in range(das.channel_count):
        if not coupled[k]:
            entries.append(ChannelCalibration(k, math.nan, None, Pattern.SPOOLED))
            continue
        lat = lon = None
        if centerline is not None:
            lat, lon = _position_to_latlon(positions[k], centerline)
        entries.append(ChannelCalibration(k, float(positions[k]), float(t_k[k]),
                                          classify_pattern(float(t_k[k])), lat, lon))
    return CalibrationTable(tuple(entries))


def _position_to_latlon(position_m: float, centerline) -> tuple[float, float]:
    pts = np.asarray(centerline, dtype=float)
    lat0 = pts[0, 0]
    scale_lon = _M_PER_DEG_LAT * math.cos(math.radians(lat0))
    xy = np.column_stack([(pts[:, 1] - pts[0, 1]) * scale_lon,
                          (pts[:, 0] - pts[0, 0]) * _M_PER_DEG_LAT])
    seg = np.diff(xy, axis=0)
    seg_len = np.hypot(seg[:, 0], seg[:, 1])
    cum = np.concatenate([[0.0], np.cumsum(seg_len)])
    s = float(np.clip(position_m, 0.0, cum[-1]))
    i = int(np.clip(np.searchsorted(cum, s, side="right") - 1, 0, len(seg_len) - 1))
    frac = 0.0 if seg_len[i] == 0 else (s - cum[i]) / seg_len[i]
    x, y = xy[i] + frac * seg[i]
    return lat0 + y / _M_PER_DEG_LAT, pts[0, 1] + x / scale_lon
