"""Scene description for the synthetic strain recorder: vehicles, trajectories,
sensor layout with fiber spools, noise levels, and ground truth bookkeeping."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .kernel import DEFAULT_DEPTH_M
from .types import CalibrationTable, ChannelCalibration, Pattern, classify_pattern


class Direction(str, Enum):
    OUTBOUND = "outbound"  # road position increasing with time
    INBOUND = "inbound"    # road position decreasing with time


@dataclass(frozen=True)
class VehicleSpec:
    """Physical vehicle parameters; only two axles are modeled."""

    weight_tons: float
    wheelbase_m: float
    axle_count: int = 2
    label: str = ""

    def __post_init__(self):
        if not (self.weight_tons > 0):
            raise ValueError(f"weight_tons must be > 0, got {self.weight_tons}")
        if not (self.wheelbase_m > 0):
            raise ValueError(f"wheelbase_m must be > 0, got {self.wheelbase_m}")
        if self.axle_count < 2:
            raise ValueError(f"axle_count must be >= 2, got {self.axle_count}")


@dataclass(frozen=True)
class Trajectory:
    """Piecewise-linear road position vs. time for one vehicle pass.

    ``times`` strictly increasing; ``positions`` strictly monotone, increasing
    for outbound and decreasing for inbound. ``lane_offset_m`` is the
    perpendicular distance from the fiber to the traveled lane.
    """

    times: np.ndarray
    positions: np.ndarray
    direction: Direction
    lane_offset_m: float

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        x = np.asarray(self.positions, dtype=float)
        if t.ndim != 1 or x.shape != t.shape or t.size < 2:
            raise ValueError("times and positions must be 1-D arrays of equal length >= 2")
        if not (np.all(np.isfinite(t)) and np.all(np.isfinite(x))):
            raise ValueError("trajectory breakpoints must be finite")
        if np.any(np.diff(t) <= 0):
            raise ValueError("times must be strictly increasing")
        dx = np.diff(x)
        if self.direction is Direction.OUTBOUND and np.any(dx <= 0):
            raise ValueError("outbound trajectory must have strictly increasing positions")
        if self.direction is Direction.INBOUND and np.any(dx >= 0):
            raise ValueError("inbound trajectory must have strictly decreasing positions")
        if not (self.lane_offset_m > 0):
            raise ValueError(f"lane_offset_m must be > 0, got {self.lane_offset_m}")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "positions", x)

    @classmethod
    def constant_speed(cls, start_time_s: float, start_position_m: float, speed_mps: float,
                       end_position_m: float, lane_offset_m: float) -> "Trajectory":
        if speed_mps <= 0:
            raise ValueError(f"speed_mps must be > 0, got {speed_mps}")
        direction = Direction.OUTBOUND if end_position_m > start_position_m else Direction.INBOUND
        dt = abs(end_position_m - start_position_m) / speed_mps
        return cls(
            times=np.array([start_time_s, start_time_s + dt]),
            positions=np.array([start_position_m, end_position_m]),
            direction=direction,
            lane_offset_m=lane_offset_m,
        )

    def position_at(self, t) -> np.ndarray:
        """Linear interpolation, clamped to the end positions outside the pass."""
        return np.interp(t, self.times, self.positions)

    def arrival_time_at(self, position_m: float) -> float:
        """Time at which the vehicle is at the given road position (NaN outside)."""
        x = self.positions
        lo, hi = (x[0], x[-1]) if self.direction is Direction.OUTBOUND else (x[-1], x[0])
        if not (lo <= position_m <= hi):
            return math.nan
        if self.direction is Direction.OUTBOUND:
            return float(np.interp(position_m, x, self.times))
        return float(np.interp(position_m, x[::-1], self.times[::-1]))

    def speed_at(self, t) -> np.ndarray:
        """Speed magnitude (m/s) at the given time(s)."""
        tt = np.atleast_1d(np.asarray(t, dtype=float))
        seg = np.clip(np.searchsorted(self.times, tt, side="right") - 1, 0, self.times.size - 2)
        v = np.abs(np.diff(self.positions) / np.diff(self.times))
        out = v[seg]
        return out if np.ndim(t) else float(out[0])

    @property
    def span(self) -> tuple[float, float]:
        return float(self.times[0]), float(self.times[-1])


@dataclass(frozen=True)
class SceneConfig:
    """Everything the recorder needs to synthesize one recording."""

    sensors: CalibrationTable
    vehicles: tuple[tuple[VehicleSpec, Trajectory], ...]
    duration_s: float
    sample_rate_hz: float = 250.0
    road_features_m: tuple[float, ...] = ()
    noise_sigma: float = 0.0
    drift_amplitude: float = 0.0
    start_time: float = 0.0
    channel_spacing_m: float = 1.0
    gauge_length_m: float = 10.0
    depth_m: float = DEFAULT_DEPTH_M
    reference_lane_offset_m: float = 3.0
    spool_segments: tuple[tuple[float, float], ...] = ()  # (fiber_start_m, slack_length_m)
    wheel_amplitude_per_ton: float = 0.0
    wheel_frequency_hz: float = 8.0
    wheel_decay_s: float = 0.05
    wheel_coupling_radius_m: float = 6.0

    def __post_init__(self):
        if self.noise_sigma < 0 or self.drift_amplitude < 0:
            raise ValueError("noise_sigma and drift_amplitude must be >= 0")
        if self.duration_s <= 0 or self.sample_rate_hz <= 0:
            raise ValueError("duration_s and sample_rate_hz must be > 0")
        segs = sorted(self.spool_segments)
        for (a0, l0), (a1, _) in zip(segs, segs[1:]):
            if a0 + l0 > a1:
                raise ValueError(f"overlapping spool segments at fiber {a1} m")
        road_len = self.road_length_m
        for f in self.road_features_m:
            if not (0.0 <= f <= road_len):
                raise ValueError(f"road feature at {f} m outside road extent [0, {road_len:g}]")
        object.__setattr__(self, "vehicles", tuple(self.vehicles))
        object.__setattr__(self, "road_features_m", tuple(self.road_features_m))
        object.__setattr__(self, "spool_segments", tuple(segs))

    @property
    def road_length_m(self) -> float:
        pos = self.sensors.road_positions()
        return float(np.nanmax(pos)) if np.any(np.isfinite(pos)) else 0.0

    @property
    def end_time(self) -> float:
        return self.start_time + self.duration_s


@dataclass(frozen=True)
class GroundTruth:
    """Exact per-vehicle arrivals and the true sensor layout for scoring."""

    vehicles: tuple[tuple[str, VehicleSpec, Trajectory], ...]
    arrivals: dict  # vehicle_id -> {channel_index: arrival_time_s}
    sensors: CalibrationTable

    def arrival_rows(self) -> list[tuple]:
        rows = []
        for vid, spec, _traj in self.vehicles:
            for ch in sorted(self.arrivals.get(vid, {})):
                rows.append((vid, ch, self.arrivals[vid][ch], spec.weight_tons, spec.wheelbase_m))
        return rows

    def vehicle(self, vid: str) -> tuple[VehicleSpec, Trajectory]:
        for v, spec, traj in self.vehicles:
            if v == vid:
                return spec, traj
        raise KeyError(f"unknown vehicle id {vid!r}")


def build_sensor_layout(channel_count: int, channel_spacing_m: float = 1.0,
                        spool_segments=(), transmissibility_range=(2000.0, 12000.0),
                        flipped_fraction: float = 0.15, seed: int = 0,
                        latlon_origin: tuple[float, float] | None = None,
                        heading_east: bool = True) -> CalibrationTable:
    """Generate a ground-truth sensor table: fiber order, spool gaps removed
    from road positions, log-uniform |T| with a flipped-polarity fraction."""
    rng = np.random.default_rng(seed)
    lo, hi = transmissibility_range
    if not (0 < lo <= hi):
        raise ValueError(f"bad transmissibility_range {transmissibility_range}")
    segs = sorted(spool_segments)
    entries = []
    slack_before = 0.0
    for k in range(channel_count):
        fiber_m = k * channel_spacing_m
        in_spool = False
        for a, l in segs:
            if a <= fiber_m < a + l:
                in_spool = True
                break
        mag = math.exp(rng.uniform(math.log(lo), math.log(hi)))
        sign = -1.0 if rng.uniform() < flipped_fraction else 1.0
        if in_spool:
            entries.append(ChannelCalibration(k, math.nan, None, Pattern.SPOOLED))
            continue
        slack_before = sum(l for a, l in segs if a + l <= fiber_m)
        road = fiber_m - slack_before
        t = sign * mag
        lat = lon = None
        if latlon_origin is not None:
            lat, lon = road_to_latlon(road, latlon_origin, heading_east)
        entries.append(ChannelCalibration(k, road, t, classify_pattern(t), lat, lon))
    return CalibrationTable(tuple(entries))


# Local equirectangular mapping for synthetic geography: the road is a
# straight segment starting at the origin, running east (or north).
_M_PER_DEG_LAT = 111_320.0


def road_to_latlon(position_m: float, origin: tuple[float, float], heading_east: bool = True):
    lat0, lon0 = origin
    if heading_east:
        return lat0, lon0 + position_m / (_M_PER_DEG_LAT * math.cos(math.radians(lat0)))
    return lat0 + position_m / _M_PER_DEG_LAT, lon0


def latlon_to_road(lat: float, lon: float, origin: tuple[float, float], heading_east: bool = True) -> float:
    lat0, lon0 = origin
    if heading_east:
        return (lon - lon0) * _M_PER_DEG_LAT * math.cos(math.radians(lat0))
    return (lat - lat0) * _M_PER_DEG_LAT
