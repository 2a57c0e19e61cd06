"""Half-space point-load strain kernel and gauge-length averaging.

The quasi-static response of a buried fiber to a surface wheel load is
modeled with the Boussinesq point-load solution for an elastic half space,
evaluated along the fiber line at depth ``depth_m`` and perpendicular offset
``lane_offset_m``. The vertical-stress form is used because its along-road
profile is a strictly positive, even, single-peaked bell whose amplitude is
proportional to load and strictly decreasing in lane offset; those are the
properties calibration relies on, and the coupling constant is absorbed by
each channel's transmissibility anyway.
"""

from __future__ import annotations

import numpy as np

DEFAULT_DEPTH_M = 1.5


def _check_geometry(lane_offset_m: float, depth_m: float):
    if not (lane_offset_m > 0):
        raise ValueError(f"lane_offset_m must be > 0 (singularity guard), got {lane_offset_m}")
    if not (depth_m > 0):
        raise ValueError(f"depth_m must be > 0 (singularity guard), got {depth_m}")


def quasistatic_kernel(distance_along_road_m, lane_offset_m: float, depth_m: float,
                       weight_tons: float):
    """Axial strain shape at signed along-road distance from a point load.

    Even in distance, bell-shaped, amplitude proportional to ``weight_tons``
    and strictly decreasing in ``lane_offset_m``. Units are arbitrary strain
    shape units per ton; per-channel transmissibility supplies the physical
    scale.
    """
    _check_geometry(lane_offset_m, depth_m)
    x = np.asarray(distance_along_road_m, dtype=float)
    r2 = x * x + lane_offset_m**2 + depth_m**2
    return 3.0 * weight_tons * depth_m**3 / (2.0 * np.pi * r2**2.5)


def _kernel_antiderivative(x, c2: float):
    # antiderivative of (x^2 + c2)^(-5/2): x (3 c2 + 2 x^2) / (3 c2^2 (x^2+c2)^(3/2))
    return x * (3.0 * c2 + 2.0 * x * x) / (3.0 * c2 * c2 * (x * x + c2) ** 1.5)


def gauge_averaged_kernel(delta_m, lane_offset_m: float, depth_m: float,
                          weight_tons: float, gauge_length_m: float):
    """Exact mean of the point kernel over a gauge window centered ``delta_m``
    from the load (closed-form integral, no spatial discretization)."""
    _check_geometry(lane_offset_m, depth_m)
    if gauge_length_m <= 0:
        return quasistatic_kernel(delta_m, lane_offset_m, depth_m, weight_tons)
    d = np.asarray(delta_m, dtype=float)
    c2 = lane_offset_m**2 + depth_m**2
    pref = 3.0 * weight_tons * depth_m**3 / (2.0 * np.pi * gauge_length_m)
    half = gauge_length_m / 2.0
    return pref * (_kernel_antiderivative(d + half, c2) - _kernel_antiderivative(d - half, c2))


def kernel_peak(lane_offset_m: float, depth_m: float, weight_tons: float = 1.0,
                gauge_length_m: float = 0.0) -> float:
    """Peak response (at zero along-road distance) for the given geometry."""
    return float(gauge_averaged_kernel(0.0, lane_offset_m, depth_m, weight_tons, gauge_length_m))


def gauge_average(field, field_spacing_m: float, gauge_length_m: float,
                  channel_spacing_m: float) -> np.ndarray:
    """Average a finely sampled point strain field into per-channel values.

    Channel k is centered at ``gauge_length_m/2 + k*channel_spacing_m`` along
    the field and takes the mean of the field samples within half a gauge
    length of its center. Only channels whose full gauge window fits inside
    the field extent are emitted.
    """
    f = np.asarray(field, dtype=float)
    if f.ndim != 1:
        raise ValueError(f"field must be 1-D, got shape {f.shape}")
    if field_spacing_m <= 0 or channel_spacing_m <= 0:
        raise ValueError("field_spacing_m and channel_spacing_m must be > 0")
    if gauge_length_m < channel_spacing_m:
        raise ValueError(
            f"gauge_length_m ({gauge_length_m}) must be >= channel_spacing_m ({channel_spacing_m})"
        )
    extent = (f.size - 1) * field_spacing_m
    if extent < gauge_length_m:
        raise ValueError("field shorter than one gauge length")

    csum = np.concatenate([[0.0], np.cumsum(f)])
    half = gauge_length_m / 2.0
    centers = []
    values = []
    k = 0
    eps = 1e-9 * field_spacing_m
    while True:
        c = half + k * channel_spacing_m
        if c + half > extent + eps:
            break
        lo = int(np.ceil((c - half - eps) / field_spacing_m))
        hi = int(np.floor((c + half + eps) / field_spacing_m))
        values.append((csum[hi + 1] - csum[lo]) / (hi - lo + 1))
        centers.append(c)
        k += 1
    return np.asarray(values)
