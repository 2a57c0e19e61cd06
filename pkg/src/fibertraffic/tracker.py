"""Track management on top of the arrival-time filter: seeding from entry
clusters, single-vehicle forward/backward passes, greedy multi-vehicle
bookkeeping per road segment and direction, and kinematics conversion."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .scene import Direction
from .tracking import MotionModel, StateEstimate, associate, predict, rts_smooth, update
from .types import CalibrationTable, Detection

# Slowness below this (s/m) is treated as degenerate when converting to
# speed; 1e-4 s/m corresponds to 10 km/s.
_MIN_ABS_SLOWNESS = 1e-4


@dataclass(frozen=True)
class TrackerConfig:
    """Knobs for track initiation, gating, and termination."""

    gate_sigmas: float = 3.0
    max_consecutive_misses: int | None = 25
    min_track_channels: int = 20
    init_time_std_s: float = 1.0
    init_slowness_std: float = 0.05
    entry_window_m: float = 25.0
    seed_gap_s: float = 2.0
    min_seed_detections: int = 4
    min_slowness: float = 0.02   # 50 m/s upper speed bound
    max_slowness: float = 1.0    # 1 m/s lower speed bound
    merge_shared_fraction: float = 0.5


@dataclass(frozen=True)
class TrackPoint:
    """Per-channel record of a track: geometry, filter states, association."""

    channel_index: int
    road_position_m: float
    dx_m: float
    filtered: StateEstimate
    smoothed: StateEstimate
    detection: Detection | None

    @property
    def associated(self) -> bool:
        return self.detection is not None


@dataclass
class VehicleTrack:
    """One tracked vehicle: per-channel states plus derived kinematics."""

    points: list[TrackPoint]
    direction: Direction
    track_id: int = -1

    @property
    def n_associated(self) -> int:
        return sum(1 for p in self.points if p.associated)

    def times(self) -> np.ndarray:
        return np.array([p.smoothed.arrival_time for p in self.points])

    def positions(self) -> np.ndarray:
        return np.array([p.road_position_m for p in self.points])

    def channels(self) -> np.ndarray:
        return np.array([p.channel_index for p in self.points])

    def speeds_mps(self) -> np.ndarray:
        """Speed magnitude per channel from the smoothed slowness."""
        sl = np.array([p.smoothed.slowness for p in self.points])
        sl = np.where(np.abs(sl) < _MIN_ABS_SLOWNESS,
                      np.where(sl < 0, -_MIN_ABS_SLOWNESS, _MIN_ABS_SLOWNESS), sl)
        return np.abs(1.0 / sl)

    def speeds_kmh(self) -> np.ndarray:
        return self.speeds_mps() * 3.6

    def mean_speed_mps(self) -> float:
        return float(np.median(self.speeds_mps()))

    def residual_s(self) -> float:
        """Mean absolute innovation over associated channels (association quality)."""
        errs = [abs(p.detection.time_s - p.filtered.arrival_time)
                for p in self.points if p.associated]
        return float(np.mean(errs)) if errs else math.inf

    def detection_keys(self) -> set:
        return {(p.detection.channel_index, p.detection.time_s)
                for p in self.points if p.associated}

    def span_s(self) -> tuple[float, float]:
        t = self.times()
        return float(t.min()), float(t.max())


def _nominal_spacing(table: CalibrationTable) -> float:
    """Median coupled road-position increment per fiber index step."""
    coupled = table.coupled()
    if len(coupled) < 2:
        return 1.0
    pos = np.array([e.road_position_m for e in coupled])
    idx = np.array([e.channel_index for e in coupled])
    steps = np.diff(pos) / np.maximum(np.diff(idx), 1)
    return float(np.median(steps))


def _chain_for(table: CalibrationTable, channel_lo: int, channel_hi: int,
               direction: Direction, nominal_spacing_m: float | None = None):
    """Ordered (channel, position) chain for one segment and direction.

    Calibrated mode walks coupled channels by calibrated road position, which
    spans spool gaps seamlessly. With ``nominal_spacing_m`` set, every channel
    (spooled included) sits at its nominal fiber position, reproducing the
    no-geolocation baseline.
    """
    chain = []
    for e in table:
        if not (channel_lo <= e.channel_index <= channel_hi):
            continue
        if nominal_spacing_m is not None:
            chain.append((e.channel_index, e.channel_index * nominal_spacing_m))
        elif not e.spooled:
            chain.append((e.channel_index, e.road_position_m))
    chain.sort(key=lambda cp: cp[1])
    if direction is Direction.INBOUND:
        chain.reverse()
    return chain


def track_single(detections_by_channel: dict[int, list[Detection]],
                 chain: list[tuple[int, float]], model: MotionModel, cfg: TrackerConfig,
                 init: StateEstimate, direction: Direction,
                 start_at: int = 0) -> VehicleTrack | None:
    """Forward filter + backward smoother along one chain from an initial state.

    The chain is (channel, road position) in traversal order; ``init`` is the
    state at chain[start_at]. On a missed association the prediction is
    carried as the filtered state; after ``cfg.max_consecutive_misses``
    consecutive misses the track is cut at the last associated channel.
    Returns None when fewer than ``cfg.min_track_channels`` detections were
    associated.
    """
    if not chain or start_at >= len(chain):
        return None
    points: list[tuple] = []  # (channel, pos, dx, filtered state, detection)
    ch0, pos0 = chain[start_at]
    s_prev = 0.0
    state = StateEstimate(init.mean, init.cov, ch0)
    det0 = _nearest_detection(detections_by_channel.get(ch0, []), state.arrival_time)
    points.append((ch0, pos0, 0.0, state, det0))
    misses = 0
    last_assoc = 0 if det0 is not None else -1

    for i in range(start_at + 1, len(chain)):
        ch, pos = chain[i]
        s_here = abs(pos - pos0)
        dx = s_here - s_prev
        if dx <= 0:
            continue
        pred = predict(state, dx, model)
        pred = StateEstimate(pred.mean, pred.cov, ch)
        det = associate(pred, detections_by_channel.get(ch, []), model, cfg.gate_sigmas)
        if det is None:
            state = pred
            misses += 1
        else:
            state = update(pred, det.time_s, model)
            misses = 0
            last_assoc = len(points)
        points.append((ch, pos, dx, state, det))
        s_prev = s_here
        if cfg.max_consecutive_misses is not None and misses > cfg.max_consecutive_misses:
            break

    if last_assoc < 0:
        return None
    points = points[: last_assoc + 1]  # drop trailing miss-only tail
    n_assoc = sum(1 for p in points if p[4] is not None)
    if n_assoc < cfg.min_track_channels:
        return None

    filtered = [p[3] for p in points]
    dxs = [p[2] for p in points]
    smoothed = rts_smooth(filtered, model, dxs)
    track_points = [
        TrackPoint(ch, pos, dx, f, s, det)
        for (ch, pos, dx, f, det), s in zip(points, smoothed)
    ]
    return VehicleTrack(track_points, direction)


def _nearest_detection(cands: list[Detection], t: float, tol_s: float = 0.5) -> Detection | None:
    if not cands:
        return None
    best = min(cands, key=lambda d: abs(d.time_s - t))
    return best if abs(best.time_s - t) < tol_s else None


def _seed_clusters(entry_dets: list[Detection], gap_s: float) -> list[list[Detection]]:
    if not entry_dets:
        return []
    dets = sorted(entry_dets, key=lambda d: d.time_s)
    clusters = [[dets[0]]]
    for d in dets[1:]:
        if d.time_s - clusters[-1][-1].time_s > gap_s:
            clusters.append([d])
        else:
            clusters[-1].append(d)
    return clusters


def _median_pairwise_slope(s: np.ndarray, t: np.ndarray) -> float:
    slopes = []
    n = len(s)
    for i in range(n):
        for j in range(i + 1, n):
            ds = s[j] - s[i]
            if abs(ds) > 1e-9:
                slopes.append((t[j] - t[i]) / ds)
    return float(np.median(slopes)) if slopes else math.nan


def _init_from_cluster(cluster: list[Detection], chain: list[tuple[int, float]],
                       cfg: TrackerConfig):
    """Seed state at the cluster's first channel: its detection time plus a
    robust median slope over the cluster. None when the slope is implausible
    for the traversal direction."""
    chain_index = {ch: i for i, (ch, _pos) in enumerate(chain)}
    origin = chain[0][1]
    s = np.array([abs(chain[chain_index[d.channel_index]][1] - origin) for d in cluster])
    t = np.array([d.time_s for d in cluster])
    slope = _median_pairwise_slope(s, t)
    if math.isnan(slope) or not (cfg.min_slowness <= slope <= cfg.max_slowness):
        return None
    first = int(np.argmin(s))
    start_at = chain_index[cluster[first].channel_index]
    mean = np.array([t[first], slope])
    cov = np.diag([cfg.init_time_std_s**2, cfg.init_slowness_std**2])
    return StateEstimate(mean, cov), start_at


def track_multi(detections, table: CalibrationTable, segments: list[tuple[int, int]],
                model: MotionModel, cfg: TrackerConfig | None = None,
                baseline: bool = False,
                nominal_spacing_m: float | None = None) -> tuple[list, list[Detection]]:
    """Track every vehicle in a record, segment by segment, both directions.

    Seeds come from detection clusters on each segment's entry channels; each
    accepted track consumes its associated detections from the pool and
    seeding repeats until no cluster is usable. Overlapping tracks sharing
    more than half their detections are merged keeping the lower residual.
    Unconsumed detections are returned as residue.

    With ``baseline=True`` the chain uses nominal fiber positions with no
    spool exclusion and no miss cap, reproducing tracking without
    geo-localization.
    """
    cfg = cfg or TrackerConfig()
    if baseline:
        cfg = replace(cfg, max_consecutive_misses=None)
        if nominal_spacing_m is None:
            nominal_spacing_m = _nominal_spacing(table)
    else:
        nominal_spacing_m = None
    dets = list(detections.detections if hasattr(detections, "detections") else detections)
    segments = _validated_segments(segments, table)

    tracks: list[VehicleTrack] = []
    residue_keys = {(d.channel_index, d.time_s) for d in dets}

    for ch_lo, ch_hi in segments:
        seg_dets = [d for d in dets if ch_lo <= d.channel_index <= ch_hi]
        pool = {(d.channel_index, d.time_s): d for d in seg_dets}
        for direction in (Direction.OUTBOUND, Direction.INBOUND):
            chain = _chain_for(table, ch_lo, ch_hi, direction, nominal_spacing_m)
            if len(chain) < 2:
                continue
            origin = chain[0][1]
            chain_channels = {ch for ch, _ in chain}
            entry_set = {ch for ch, pos in chain if abs(pos - origin) <= cfg.entry_window_m}
            tried: set = set()
            while True:
                entry_dets = [d for key, d in pool.items()
                              if d.channel_index in entry_set and key not in tried]
                clusters = [c for c in _seed_clusters(entry_dets, cfg.seed_gap_s)
                            if len(c) >= cfg.min_seed_detections]
                seeded = False
                for cluster in clusters:
                    keys = {(d.channel_index, d.time_s) for d in cluster}
                    seeded_init = _init_from_cluster(cluster, chain, cfg)
                    if seeded_init is None:
                        tried |= keys
                        continue
                    init, start_at = seeded_init
                    by_channel: dict[int, list[Detection]] = {}
                    for d in pool.values():
                        if d.channel_index in chain_channels:
                            by_channel.setdefault(d.channel_index, []).append(d)
                    track = track_single(by_channel, chain, model, cfg, init, direction,
                                         start_at)
                    if track is None:
                        tried |= keys
                        continue
                    for key in track.detection_keys():
                        pool.pop(key, None)
                        residue_keys.discard(key)
                    tracks.append(track)
                    seeded = True
                    break
                if not seeded:
                    break

    tracks = _merge_overlapping(tracks, cfg.merge_shared_fraction)
    for i, tr in enumerate(tracks):
        tr.track_id = i
    residue = [d for d in dets if (d.channel_index, d.time_s) in residue_keys]
    return tracks, residue


def _validated_segments(segments, table: CalibrationTable) -> list[tuple[int, int]]:
    if not segments:
        idx = [e.channel_index for e in table]
        return [(min(idx), max(idx))]
    segs = sorted((int(a), int(b)) for a, b in segments)
    for (a0, b0), (a1, _) in zip(segs, segs[1:]):
        if a1 <= b0:
            raise ValueError(f"segments overlap at channel {a1}")
    return segs


def _merge_overlapping(tracks: list[VehicleTrack], shared_fraction: float) -> list[VehicleTrack]:
    kept: list[VehicleTrack] = []
    for tr in sorted(tracks, key=lambda t: t.residual_s()):
        dup = False
        keys = tr.detection_keys()
        for other in kept:
            ok = other.detection_keys()
            denom = min(len(keys), len(ok))
            if denom and len(keys & ok) / denom > shared_fraction:
                dup = True
                break
        if not dup:
            kept.append(tr)
    kept.sort(key=lambda t: t.span_s()[0])
    return kept
