"""Shared domain types: strain records, per-channel calibration, detections."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np


class Pattern(str, Enum):
    """Per-channel signal pattern learned during calibration."""

    BELL = "bell"
    FLIPPED = "flipped"
    SPOOLED = "spooled"


class Polarity(str, Enum):
    """Sign of a detected vehicle event: bell channels peak, flipped channels dip."""

    PEAK = "peak"
    VALLEY = "valley"


@dataclass(frozen=True)
class ChannelMatrix:
    """2-D strain record, channels x time samples, with sampling metadata.

    Parameters
    ----------
    data : np.ndarray
        Strain values, shape (channel_count, sample_count). Unitless, as
        delivered by the interrogator; no conversion to physical microstrain.
    sample_rate_hz : float
        Temporal sampling rate.
    start_time : float
        Epoch seconds of the first sample (recorder clock).
    channel_spacing_m : float
        Nominal fiber distance between consecutive virtual sensors.
    gauge_length_m : float
        Fiber span over which each channel's strain is averaged.
    """

    data: np.ndarray
    sample_rate_hz: float
    start_time: float = 0.0
    channel_spacing_m: float = 1.0
    gauge_length_m: float = 10.0

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=float)
        if arr.ndim != 2:
            raise ValueError(f"data must be 2-D (channels, samples), got shape {arr.shape}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError(f"data must be non-empty, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            bad = np.argwhere(~np.isfinite(arr))[0]
            raise ValueError(f"non-finite strain value at (channel {bad[0]}, sample {bad[1]})")
        for name in ("sample_rate_hz", "channel_spacing_m", "gauge_length_m"):
            if not (getattr(self, name) > 0) or not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be strictly positive, got {getattr(self, name)}")
        object.__setattr__(self, "data", arr)
        arr.flags.writeable = False

    @property
    def channel_count(self) -> int:
        return self.data.shape[0]

    @property
    def sample_count(self) -> int:
        return self.data.shape[1]

    @property
    def duration_s(self) -> float:
        return self.sample_count / self.sample_rate_hz

    def times(self) -> np.ndarray:
        """Sample times in epoch seconds."""
        return self.start_time + np.arange(self.sample_count) / self.sample_rate_hz

    def channel(self, k: int) -> np.ndarray:
        return self.data[k]


@dataclass(frozen=True)
class ChannelCalibration:
    """Geo-location, transmissibility, and signal pattern of one virtual sensor.

    ``transmissibility`` is the signed ratio of quasi-static prominence
    amplitude to inducing vehicle weight (strain units per ton); positive for
    bell-shaped channels, negative for polarity-flipped ones, None for
    spooled (uncoupled) fiber. ``road_position_m`` is NaN for spooled channels.
    """

    channel_index: int
    road_position_m: float
    transmissibility: float | None
    pattern: Pattern
    lat: float | None = None
    lon: float | None = None

    def __post_init__(self):
        if self.channel_index < 0:
            raise ValueError(f"channel_index must be >= 0, got {self.channel_index}")
        t = self.transmissibility
        if self.pattern is Pattern.SPOOLED:
            if t is not None:
                raise ValueError(f"spooled channel {self.channel_index} must have no transmissibility")
        else:
            if t is None or not math.isfinite(t) or t == 0.0:
                raise ValueError(
                    f"coupled channel {self.channel_index} needs nonzero finite transmissibility, got {t}"
                )
            if self.pattern is Pattern.BELL and t < 0:
                raise ValueError(f"bell channel {self.channel_index} requires T > 0, got {t}")
            if self.pattern is Pattern.FLIPPED and t > 0:
                raise ValueError(f"flipped channel {self.channel_index} requires T < 0, got {t}")
            if not math.isfinite(self.road_position_m):
                raise ValueError(f"coupled channel {self.channel_index} needs a finite road position")

    @property
    def spooled(self) -> bool:
        return self.pattern is Pattern.SPOOLED

    @property
    def polarity(self) -> Polarity:
        if self.spooled:
            raise ValueError(f"channel {self.channel_index} is spooled and has no polarity")
        return Polarity.PEAK if self.transmissibility > 0 else Polarity.VALLEY


def classify_pattern(transmissibility: float | None) -> Pattern:
    """Map a signed transmissibility to its signal pattern (None -> spooled)."""
    if transmissibility is None or not math.isfinite(transmissibility) or transmissibility == 0.0:
        return Pattern.SPOOLED
    return Pattern.BELL if transmissibility > 0 else Pattern.FLIPPED


@dataclass(frozen=True)
class CalibrationTable:
    """Ordered per-channel calibration with the fleet-wide reference T0.

    ``t0`` is the minimum absolute transmissibility over coupled channels and
    is recomputed at construction (entries are immutable afterwards).
    """

    entries: tuple[ChannelCalibration, ...]
    t0: float = field(init=False)

    def __post_init__(self):
        entries = tuple(self.entries)
        if not entries:
            raise ValueError("calibration table must have at least one entry")
        idx = [e.channel_index for e in entries]
        if sorted(idx) != idx:
            raise ValueError("entries must be sorted by channel_index")
        if len(set(idx)) != len(idx):
            raise ValueError("duplicate channel_index in calibration table")
        coupled = [e for e in entries if not e.spooled]
        pos = np.array([e.road_position_m for e in coupled])
        if pos.size and np.any(np.diff(pos) < -1e-9):
            k = int(np.argmax(np.diff(pos) < -1e-9))
            raise ValueError(
                f"road positions must be non-decreasing in fiber order once spooled "
                f"channels are removed (violated after channel {coupled[k].channel_index})"
            )
        t0 = min((abs(e.transmissibility) for e in coupled), default=None)
        if t0 is None:
            raise ValueError("calibration table has no coupled channels")
        object.__setattr__(self, "entries", entries)
        object.__setattr__(self, "t0", float(t0))

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def __getitem__(self, channel_index: int) -> ChannelCalibration:
        e = self._by_index().get(channel_index)
        if e is None:
            raise KeyError(f"no calibration entry for channel {channel_index}")
        return e

    def _by_index(self) -> dict:
        cache = getattr(self, "_index_cache", None)
        if cache is None:
            cache = {e.channel_index: e for e in self.entries}
            object.__setattr__(self, "_index_cache", cache)
        return cache

    def coupled(self) -> list[ChannelCalibration]:
        return [e for e in self.entries if not e.spooled]

    def spooled_channels(self) -> list[int]:
        return [e.channel_index for e in self.entries if e.spooled]

    def road_positions(self) -> np.ndarray:
        """Road position per entry, NaN where spooled."""
        return np.array([e.road_position_m if not e.spooled else np.nan for e in self.entries])

    def transmissibilities(self) -> np.ndarray:
        """Signed T per entry, NaN where spooled."""
        return np.array(
            [e.transmissibility if not e.spooled else np.nan for e in self.entries]
        )


@dataclass(frozen=True)
class Detection:
    """Candidate vehicle arrival at one channel.

    ``time_s`` has sub-sample resolution (parabolic refinement around the
    extremum); ``prominence`` is the detection statistic in strain units.
    """

    channel_index: int
    time_s: float
    prominence: float
    polarity: Polarity

    def __post_init__(self):
        if not (self.prominence > 0) or not math.isfinite(self.prominence):
            raise ValueError(f"prominence must be > 0 and finite, got {self.prominence}")
        if not math.isfinite(self.time_s):
            raise ValueError(f"time_s must be finite, got {self.time_s}")
