"""Per-sensor vehicle detection: LOESS smoothing followed by prominence
scanning of peaks (bell channels) or valleys (flipped channels), with a
transmissibility-adaptive threshold r0 * |T_k| / T0."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.signal import find_peaks, peak_prominences

from .filters import loess_smooth
from .types import CalibrationTable, ChannelCalibration, ChannelMatrix, Detection, Polarity

# How the one-second detection window is interpreted (see DetectorConfig):
#  - "bounded": the window bounds the prominence reference region
#    (+-window_s/2 around each extremum);
#  - "spacing": prominence is global and the window enforces a minimum
#    spacing of one detection per window_s.
WINDOW_BOUNDED = "bounded"
WINDOW_SPACING = "spacing"


@dataclass(frozen=True)
class DetectorConfig:
    """Detection parameters.

    ``r0`` is the prominence threshold applied at the sensor whose absolute
    transmissibility is the table minimum T0; every other sensor's threshold
    scales by |T_k| / T0.
    """

    r0: float
    window_s: float = 1.0
    span_s: float = 1.0
    window_mode: str = WINDOW_BOUNDED
    min_separation_s: float = 0.2

    def __post_init__(self):
        if not (self.r0 > 0):
            raise ValueError(f"r0 must be > 0, got {self.r0}")
        if not (self.window_s > 0):
            raise ValueError(f"window_s must be > 0, got {self.window_s}")
        if self.window_mode not in (WINDOW_BOUNDED, WINDOW_SPACING):
            raise ValueError(f"window_mode must be bounded|spacing, got {self.window_mode!r}")


def prominence_scan(series, sample_rate_hz: float, window_s: float | None = None,
                    polarity: Polarity = Polarity.PEAK):
    """All local extrema of the given polarity with topographic prominence.

    Prominence is the height of the extremum above the higher of the two
    lowest intervening levels toward the nearest strictly higher sample (or
    the window edge) on each side; ``window_s`` limits the reference region
    to +-window_s around the extremum (None = whole series). Returned times
    are sample indices refined to sub-sample precision by parabolic
    interpolation; raw integer indices are returned alongside.

    Returns
    -------
    times_s : np.ndarray
        Refined extremum times in seconds from the series start.
    prominences : np.ndarray
    indices : np.ndarray
        Unrefined sample indices of the extrema.
    """
    x = np.asarray(series, dtype=float)
    if x.ndim != 1:
        raise ValueError(f"series must be 1-D, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError(f"non-finite input at index {int(np.argmin(np.isfinite(x)))}")
    work = x if polarity is Polarity.PEAK else -x
    idx, _ = find_peaks(work)
    if idx.size == 0:
        return np.array([]), np.array([]), np.array([], dtype=int)
    if window_s is None:
        prom = peak_prominences(work, idx)[0]
    else:
        half = int(round(window_s * sample_rate_hz))
        prom = peak_prominences(work, idx, wlen=2 * max(half, 1) + 1)[0]
    times = (idx + _parabolic_offset(work, idx)) / sample_rate_hz
    return times, prom, idx


def _parabolic_offset(y: np.ndarray, idx: np.ndarray) -> np.ndarray:
    """Sub-sample apex offset from a parabola through the 3 samples at each extremum."""
    off = np.zeros(idx.shape)
    inner = (idx > 0) & (idx < y.size - 1)
    i = idx[inner]
    denom = y[i - 1] - 2.0 * y[i] + y[i + 1]
    ok = denom != 0
    d = np.zeros(i.shape)
    d[ok] = 0.5 * (y[i - 1] - y[i + 1])[ok] / denom[ok]
    off[inner] = np.clip(d, -0.5, 0.5)
    return off


def per_sensor_detect(series, sample_rate_hz: float, calib_k: ChannelCalibration,
                      t0: float, cfg: DetectorConfig, start_time: float = 0.0) -> list[Detection]:
    """Detect vehicle arrivals on one channel.

    Pipeline: LOESS smooth over ``cfg.span_s``, prominence scan with polarity
    from the sign of T_k, threshold at r0 * |T_k| / T0, then merge detections
    closer than ``cfg.min_separation_s`` keeping the larger prominence.
    Spooled channels yield an empty list (callers should skip them and report
    the skip; see ``detect_matrix``).
    """
    if calib_k.spooled:
        return []
    smoothed = loess_smooth(series, sample_rate_hz, span_s=cfg.span_s)
    polarity = calib_k.polarity
    if cfg.window_mode == WINDOW_BOUNDED:
        ref_window = cfg.window_s / 2.0
        spacing = cfg.min_separation_s
    else:
        ref_window = None
        spacing = max(cfg.min_separation_s, cfg.window_s)
    times, proms, _ = prominence_scan(smoothed, sample_rate_hz, ref_window, polarity)
    threshold = cfg.r0 * abs(calib_k.transmissibility) / t0
    keep = proms >= threshold
    times, proms = times[keep], proms[keep]
    times, proms = _merge_close(times, proms, spacing)
    return [
        Detection(calib_k.channel_index, start_time + t, p, polarity)
        for t, p in zip(times, proms)
    ]


def _merge_close(times: np.ndarray, proms: np.ndarray, min_sep_s: float):
    """Merge detections closer than min_sep_s, keeping the larger prominence."""
    if times.size <= 1:
        return times, proms
    order = np.argsort(times)
    times, proms = times[order], proms[order]
    kept_t: list[float] = []
    kept_p: list[float] = []
    for t, p in zip(times, proms):
        if kept_t and t - kept_t[-1] < min_sep_s:
            if p > kept_p[-1]:
                kept_t[-1], kept_p[-1] = t, p
        else:
            kept_t.append(t)
            kept_p.append(p)
    return np.asarray(kept_t), np.asarray(kept_p)


@dataclass(frozen=True)
class DetectionSet:
    """All detections of a record plus per-channel diagnostics."""

    detections: tuple[Detection, ...]
    spooled_skipped: tuple[int, ...] = ()

    def by_channel(self) -> dict[int, list[Detection]]:
        out: dict[int, list[Detection]] = {}
        for d in self.detections:
            out.setdefault(d.channel_index, []).append(d)
        for lst in out.values():
            lst.sort(key=lambda d: d.time_s)
        return out

    def __len__(self):
        return len(self.detections)


def detect_matrix(cm: ChannelMatrix, table: CalibrationTable, cfg: DetectorConfig) -> DetectionSet:
    """Run per-sensor detection over every channel of a record.

    Channels are independent; results are ordered by (channel, time).
    """
    detections: list[Detection] = []
    skipped: list[int] = []
    for entry in table:
        k = entry.channel_index
        if k >= cm.channel_count:
            continue
        if entry.spooled:
            skipped.append(k)
            continue
        detections.extend(
            per_sensor_detect(cm.channel(k), cm.sample_rate_hz, entry, table.t0, cfg,
                              start_time=cm.start_time)
        )
    detections.sort(key=lambda d: (d.channel_index, d.time_s))
    return DetectionSet(tuple(detections), tuple(skipped))
