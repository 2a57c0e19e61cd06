"""Filter bank separating quasi-static and wheel-impulse signal components.

All three filters are zero-phase so that arrival-time estimates carry no
group-delay bias: the two band filters are forward-backward Butterworth
cascades, and the LOESS smoother is symmetric by construction.
"""

from __future__ import annotations

import numpy as np
from scipy.signal import butter, sosfiltfilt

QUASISTATIC_CUTOFF_HZ = 1.0
WHEEL_CUTOFF_HZ = 3.0
_FILTER_ORDER = 4


def _min_samples(sample_rate_hz: float, cutoff_hz: float) -> int:
    return int(np.ceil(4.0 * sample_rate_hz / cutoff_hz))


def _check_series(series, sample_rate_hz: float, cutoff_hz: float) -> np.ndarray:
    x = np.asarray(series, dtype=float)
    if x.ndim != 1:
        raise ValueError(f"series must be 1-D, got shape {x.shape}")
    if sample_rate_hz <= 0:
        raise ValueError(f"sample_rate_hz must be > 0, got {sample_rate_hz}")
    need = _min_samples(sample_rate_hz, cutoff_hz)
    if x.size < need:
        raise ValueError(
            f"series too short for {cutoff_hz:g} Hz cutoff at {sample_rate_hz:g} Hz: "
            f"need at least {need} samples, got {x.size}"
        )
    if cutoff_hz >= sample_rate_hz / 2:
        raise ValueError(
            f"cutoff {cutoff_hz:g} Hz must be below Nyquist ({sample_rate_hz / 2:g} Hz)"
        )
    return x


def lowpass_quasistatic(series, sample_rate_hz: float) -> np.ndarray:
    """Zero-phase low-pass at 1 Hz, isolating the quasi-static weight signal.

    DC is preserved; the pass is applied forward and backward, so impulse
    positions do not shift.
    """
    x = _check_series(series, sample_rate_hz, QUASISTATIC_CUTOFF_HZ)
    sos = butter(_FILTER_ORDER, QUASISTATIC_CUTOFF_HZ, btype="low", fs=sample_rate_hz, output="sos")
    return sosfiltfilt(sos, x)


def highpass_wheel(series, sample_rate_hz: float) -> np.ndarray:
    """Zero-phase high-pass at 3 Hz, isolating wheel-induced surface waves."""
    x = _check_series(series, sample_rate_hz, WHEEL_CUTOFF_HZ)
    sos = butter(_FILTER_ORDER, WHEEL_CUTOFF_HZ, btype="high", fs=sample_rate_hz, output="sos")
    return sosfiltfilt(sos, x)


def _tricube(u: np.ndarray) -> np.ndarray:
    w = np.clip(1.0 - np.abs(u) ** 3, 0.0, None) ** 3
    return w


def loess_smooth(series, sample_rate_hz: float, span_s: float = 1.0) -> np.ndarray:
    """Locally weighted degree-1 smoothing with tricube weights.

    Each output sample is the value at the window center of a weighted linear
    fit over the ``span_s`` window. Windows shrink (truncate) at the series
    boundaries, never extend. An exact line is reproduced exactly.

    Parameters
    ----------
    series : array_like
        1-D strain series; must be finite.
    sample_rate_hz : float
        Sampling rate of the series.
    span_s : float
        Full window span in seconds; must exceed 2 / sample_rate_hz.
    """
    x = np.asarray(series, dtype=float)
    if x.ndim != 1:
        raise ValueError(f"series must be 1-D, got shape {x.shape}")
    if not (span_s > 2.0 / sample_rate_hz):
        raise ValueError(
            f"span_s must exceed 2/sample_rate_hz = {2.0 / sample_rate_hz:g} s, got {span_s:g}"
        )
    finite = np.isfinite(x)
    if not finite.all():
        raise ValueError(f"non-finite input at index {int(np.argmin(finite))}")

    n = x.size
    half = int(round(span_s * sample_rate_hz / 2.0))
    half = max(half, 1)
    if n <= 2:
        return x.copy()
    half = min(half, n - 1)

    offs = np.arange(-half, half + 1)
    w = _tricube(offs / float(half))
    w_sum = w.sum()

    # Interior points: the symmetric window makes the degree-1 fit collapse to
    # a weighted mean, which is a plain convolution.
    if n >= 2 * half + 1:
        out = np.convolve(x, w[::-1] / w_sum, mode="same")
    else:
        out = np.empty(n)

    # Boundary points need the full weighted linear fit on the truncated window.
    n_edge = min(half, n)
    for i in list(range(n_edge)) + list(range(max(n - n_edge, n_edge), n)):
        lo = max(0, i - half)
        hi = min(n - 1, i + half)
        d = np.arange(lo, hi + 1) - i
        wi = _tricube(d / float(half))
        y = x[lo : hi + 1]
        s0 = wi.sum()
        s1 = (wi * d).sum()
        s2 = (wi * d * d).sum()
        b0 = (wi * y).sum()
        b1 = (wi * d * y).sum()
        den = s0 * s2 - s1 * s1
        if abs(den) > 1e-12 * max(s0 * s2, 1e-300):
            out[i] = (s2 * b0 - s1 * b1) / den
        else:
            out[i] = b0 / s0
    return out
