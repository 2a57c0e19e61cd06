"""File formats for every pipeline artifact.

Strain records are a raw little-endian float32 binary (row-major, channel
major) plus a text key-value sidecar; everything else is comma-delimited
text with a header row. All writers are deterministic for identical inputs.
"""

from __future__ import annotations

import csv
import math
from pathlib import Path

import numpy as np

from .calibrate import GpsTrack, TapEvent
from .types import (CalibrationTable, ChannelCalibration, ChannelMatrix, Detection,
                    Pattern, Polarity)


class DataError(Exception):
    """Malformed or inconsistent input data."""


_SIDEKEYS = ("sample_rate_hz", "channel_count", "sample_count", "start_time",
             "channel_spacing_m", "gauge_length_m")


def _fmt(x) -> str:
    if isinstance(x, float):
        return repr(x)
    return str(x)


def matrix_paths(stem) -> tuple[Path, Path]:
    stem = Path(stem)
    return stem.with_suffix(".bin"), stem.with_suffix(".meta")


def write_channel_matrix(cm: ChannelMatrix, stem) -> tuple[Path, Path]:
    """Write <stem>.bin (float32 LE, channel-major) and <stem>.meta sidecar."""
    bin_path, meta_path = matrix_paths(stem)
    cm.data.astype("<f4").tofile(bin_path)
    meta = {
        "sample_rate_hz": cm.sample_rate_hz,
        "channel_count": cm.channel_count,
        "sample_count": cm.sample_count,
        "start_time": cm.start_time,
        "channel_spacing_m": cm.channel_spacing_m,
        "gauge_length_m": cm.gauge_length_m,
    }
    with open(meta_path, "w") as f:
        for key in _SIDEKEYS:
            f.write(f"{key} {_fmt(meta[key])}\n")
    return bin_path, meta_path


def read_channel_matrix(stem) -> ChannelMatrix:
    bin_path, meta_path = matrix_paths(stem)
    if not meta_path.exists():
        raise DataError(f"missing sidecar {meta_path}")
    if not bin_path.exists():
        raise DataError(f"missing binary {bin_path}")
    meta: dict[str, float] = {}
    for lineno, line in enumerate(meta_path.read_text().splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split(None, 1)
        if len(parts) != 2:
            raise DataError(f"{meta_path}:{lineno}: expected 'key value', got {line!r}")
        try:
            meta[parts[0]] = float(parts[1])
        except ValueError as exc:
            raise DataError(f"{meta_path}:{lineno}: bad number {parts[1]!r}") from exc
    missing = [k for k in _SIDEKEYS if k not in meta]
    if missing:
        raise DataError(f"{meta_path}: missing keys {missing}")
    k, n = int(meta["channel_count"]), int(meta["sample_count"])
    raw = np.fromfile(bin_path, dtype="<f4")
    if raw.size != k * n:
        raise DataError(
            f"{bin_path}: expected {k}x{n}={k * n} float32 values, found {raw.size}"
        )
    return ChannelMatrix(
        data=raw.reshape(k, n).astype(float),
        sample_rate_hz=meta["sample_rate_hz"],
        start_time=meta["start_time"],
        channel_spacing_m=meta["channel_spacing_m"],
        gauge_length_m=meta["gauge_length_m"],
    )


def _write_table(path, header: list[str], rows) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(x) for x in row])
    return path


def _read_table(path, expected_header: list[str]) -> list[list[str]]:
    path = Path(path)
    if not path.exists():
        raise DataError(f"missing table {path}")
    with open(path, newline="") as f:
        reader = csv.reader(f)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        if [h.strip() for h in header] != expected_header:
            raise DataError(f"{path}: expected header {expected_header}, got {header}")
        return [row for row in reader if row]


CALIBRATION_HEADER = ["channel", "road_position_m", "transmissibility", "pattern", "lat", "lon"]


def write_calibration_table(table: CalibrationTable, path) -> Path:
    rows = []
    for e in table:
        rows.append([
            e.channel_index,
            e.road_position_m if not e.spooled else float("nan"),
            e.transmissibility if e.transmissibility is not None else float("nan"),
            e.pattern.value,
            e.lat if e.lat is not None else float("nan"),
            e.lon if e.lon is not None else float("nan"),
        ])
    return _write_table(path, CALIBRATION_HEADER, rows)


def read_calibration_table(path) -> CalibrationTable:
    entries = []
    for row in _read_table(path, CALIBRATION_HEADER):
        try:
            k = int(row[0])
            pos, t, lat, lon = (float(row[i]) for i in (1, 2, 4, 5))
            pattern = Pattern(row[3])
        except (ValueError, IndexError) as exc:
            raise DataError(f"{path}: bad calibration row {row}") from exc
        entries.append(ChannelCalibration(
            channel_index=k,
            road_position_m=pos,
            transmissibility=None if pattern is Pattern.SPOOLED else t,
            pattern=pattern,
            lat=None if math.isnan(lat) else lat,
            lon=None if math.isnan(lon) else lon,
        ))
    try:
        return CalibrationTable(tuple(entries))
    except ValueError as exc:
        raise DataError(f"{path}: {exc}") from exc


DETECTIONS_HEADER = ["channel", "time_s", "prominence", "polarity"]


def write_detections(detections, path) -> Path:
    rows = [[d.channel_index, d.time_s, d.prominence, d.polarity.value] for d in detections]
    return _write_table(path, DETECTIONS_HEADER, rows)


def read_detections(path) -> list[Detection]:
    out = []
    for row in _read_table(path, DETECTIONS_HEADER):
        try:
            out.append(Detection(int(row[0]), float(row[1]), float(row[2]), Polarity(row[3])))
        except ValueError as exc:
            raise DataError(f"{path}: bad detection row {row}") from exc
    return out


TRACKS_HEADER = ["track_id", "direction", "channel", "time_s", "x_m", "speed_kmh",
                 "cov_t", "cov_tdot"]


def write_tracks(tracks, path) -> Path:
    rows = []
    for tr in tracks:
        speeds = tr.speeds_kmh()
        for p, v in zip(tr.points, speeds):
            rows.append([
                tr.track_id, tr.direction.value, p.channel_index,
                p.smoothed.arrival_time, p.road_position_m, v,
                float(p.smoothed.cov[0, 0]), float(p.smoothed.cov[1, 1]),
            ])
    return _write_table(path, TRACKS_HEADER, rows)


def read_track_rows(path) -> list[dict]:
    out = []
    for row in _read_table(path, TRACKS_HEADER):
        try:
            out.append({
                "track_id": int(row[0]),
                "direction": row[1],
                "channel": int(row[2]),
                "time_s": float(row[3]),
                "x_m": float(row[4]),
                "speed_kmh": float(row[5]),
                "cov_t": float(row[6]),
                "cov_tdot": float(row[7]),
            })
        except ValueError as exc:
            raise DataError(f"{path}: bad track row {row}") from exc
    return out


GPS_HEADER = ["time_s", "lat", "lon"]


def write_gps_track(times_s, lats, lons, path) -> Path:
    rows = list(zip(map(float, times_s), map(float, lats), map(float, lons)))
    return _write_table(path, GPS_HEADER, rows)


def read_gps_track(path, centerline) -> GpsTrack:
    rows = _read_table(path, GPS_HEADER)
    try:
        t = np.array([float(r[0]) for r in rows])
        la = np.array([float(r[1]) for r in rows])
        lo = np.array([float(r[2]) for r in rows])
    except ValueError as exc:
        raise DataError(f"{path}: bad GPS row") from exc
    if t.size < 2:
        raise DataError(f"{path}: need at least two GPS fixes")
    return GpsTrack.from_fixes(t, la, lo, centerline)


TAPS_HEADER = ["das_time_s", "reference_time_s"]


def write_taps(taps, path) -> Path:
    return _write_table(path, TAPS_HEADER,
                        [[t.das_time_s, t.reference_time_s] for t in taps])


def read_taps(path) -> list[TapEvent]:
    out = []
    for row in _read_table(path, TAPS_HEADER):
        try:
            out.append(TapEvent(float(row[0]), float(row[1])))
        except ValueError as exc:
            raise DataError(f"{path}: bad tap row {row}") from exc
    return out


CENTERLINE_HEADER = ["lat", "lon"]


def write_centerline(points, path) -> Path:
    return _write_table(path, CENTERLINE_HEADER, [[la, lo] for la, lo in points])


def read_centerline(path) -> np.ndarray:
    rows = _read_table(path, CENTERLINE_HEADER)
    try:
        pts = np.array([[float(r[0]), float(r[1])] for r in rows])
    except ValueError as exc:
        raise DataError(f"{path}: bad centerline row") from exc
    if pts.shape[0] < 2:
        raise DataError(f"{path}: need at least two centerline points")
    return pts


GROUND_TRUTH_HEADER = ["vehicle_id", "channel", "arrival_time_s", "weight_tons", "wheelbase_m"]


def write_ground_truth(truth, path) -> Path:
    return _write_table(path, GROUND_TRUTH_HEADER, truth.arrival_rows())


def read_ground_truth_rows(path) -> list[dict]:
    out = []
    for row in _read_table(path, GROUND_TRUTH_HEADER):
        try:
            out.append({
                "vehicle_id": row[0],
                "channel": int(row[1]),
                "arrival_time_s": float(row[2]),
                "weight_tons": float(row[3]),
                "wheelbase_m": float(row[4]),
            })
        except ValueError as exc:
            raise DataError(f"{path}: bad ground-truth row {row}") from exc
    return out


SEGMENTS_HEADER = ["start_channel", "end_channel"]


def write_segments(segments, path) -> Path:
    return _write_table(path, SEGMENTS_HEADER, [[int(a), int(b)] for a, b in segments])


def read_segments(path) -> list[tuple[int, int]]:
    out = []
    for row in _read_table(path, SEGMENTS_HEADER):
        try:
            out.append((int(row[0]), int(row[1])))
        except ValueError as exc:
            raise DataError(f"{path}: bad segment row {row}") from exc
    return out


FEATURES_HEADER = ["channel"]


def write_feature_channels(channels, path) -> Path:
    return _write_table(path, FEATURES_HEADER, [[int(c)] for c in channels])


def read_feature_channels(path) -> list[int]:
    out = []
    for row in _read_table(path, FEATURES_HEADER):
        try:
            out.append(int(row[0]))
        except ValueError as exc:
            raise DataError(f"{path}: bad feature-channel row {row}") from exc
    return out


CHARACTERS_HEADER = ["track_id", "wheelbase_m", "wheelbase_spread_m", "weight_tons",
                     "weight_spread_tons", "n_channels", "n_feature_channels"]


def write_characters(rows, path) -> Path:
    """rows: iterable of (track_id, VehicleCharacter)."""
    table = []
    for track_id, ch in rows:
        table.append([
            track_id,
            ch.wheelbase_m if ch.wheelbase_m is not None else float("nan"),
            ch.wheelbase_spread_m,
            ch.weight_tons if ch.weight_tons is not None else float("nan"),
            ch.weight_spread_tons,
            ch.n_channels_used,
            ch.n_feature_channels_used,
        ])
    return _write_table(path, CHARACTERS_HEADER, table)
