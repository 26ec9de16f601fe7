"""Ray records, CSV persistence, splits, features, and loss reweighting.

The on-disk ray schema (UTF-8, comma separated, header required):

    station_id,sat_id,rx_lat_deg,rx_lon_deg,rx_alt_km,
    sat_x_km,sat_y_km,sat_z_km,year,doy,sod,stec_tecu

Floats carry 9 significant digits; sod is integer seconds. The station
catalog schema is ``station_id,lat_deg,lon_deg,alt_km,role`` with role in
{train, validation, test}.
"""

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError
from .geometry import EARTH_RADIUS_KM, ORBIT_RADIUS_KM, EcefPos, GeodeticPos

RAY_HEADER = ["station_id", "sat_id", "rx_lat_deg", "rx_lon_deg",
              "rx_alt_km", "sat_x_km", "sat_y_km", "sat_z_km", "year",
              "doy", "sod", "stec_tecu"]
CATALOG_HEADER = ["station_id", "lat_deg", "lon_deg", "alt_km", "role"]
ROLES = ("train", "validation", "test")

DAY_SECONDS = 86400.0
FEATURE_DIM = 10


@dataclass(frozen=True)
class RayRecord:
    """One observed or simulated sample: geometry, epoch, slant TEC."""

    station_id: str
    sat_id: str
    rx: GeodeticPos
    sat: EcefPos
    year: int
    doy: int
    sod: int
    stec_tecu: float

    def __post_init__(self):
        if not 1 <= self.doy <= 366:
            raise DataError(f"doy {self.doy} out of range [1, 366]")
        if not 0 <= self.sod < 86400:
            raise DataError(f"sod {self.sod} out of range [0, 86400)")
        if not math.isfinite(self.stec_tecu) or self.stec_tecu < 0.0:
            raise DataError(f"stec_tecu {self.stec_tecu} invalid")

    def epoch_seconds(self) -> float:
        """Seconds since the start of the record's year."""
        return (self.doy - 1) * DAY_SECONDS + self.sod


@dataclass(frozen=True)
class TimeEncoding:
    doy_norm: float
    sod_sin: float
    sod_cos: float


@dataclass(frozen=True)
class SplitSpec:
    """Station partition plus inclusive (year, doy) day windows."""

    train_station_ids: frozenset
    validation_station_ids: frozenset
    test_station_ids: frozenset
    train_day_range: tuple  # ((year, doy), (year, doy)) inclusive
    test_day_range: tuple

    def __post_init__(self):
        sets = (self.train_station_ids, self.validation_station_ids,
                self.test_station_ids)
        for i in range(3):
            for j in range(i + 1, 3):
                overlap = sets[i] & sets[j]
                if overlap:
                    raise DataError(
                        f"station sets overlap: {sorted(overlap)[:3]}")
        if self.test_day_range[0] <= self.train_day_range[1]:
            raise DataError("test days must follow train days")


@dataclass(frozen=True)
class AifwWeights:
    """Per-record inverse-frequency weights over 1-TECU target bins."""

    bin_width: float
    lam: float
    weights: np.ndarray = field(repr=False)


def encode_time(sod: float, period: float = DAY_SECONDS) -> tuple[float, float]:
    """(sin, cos) of 2*pi*sod/period; sod is reduced mod period first so
    the encoding is exactly periodic for integer-second inputs."""
    if period <= 0.0:
        raise ValueError("period must be positive")
    frac = math.fmod(sod, period)
    if frac < 0.0:
        frac += period
    ang = 2.0 * math.pi * frac / period
    return math.sin(ang), math.cos(ang)


def time_encoding(doy: int, sod: float) -> TimeEncoding:
    s, c = encode_time(sod)
    return TimeEncoding(doy / 366.0, s, c)


def grid_downsample(stations, cell_deg: float, region_bounds):
    """Keep at most one station per (cell_deg x cell_deg) lat/lon cell.

    stations: sequence of (id, GeodeticPos). region_bounds: (lat_min,
    lat_max, lon_min, lon_max); stations outside are dropped. The kept
    station is the one nearest its cell center, ties broken by id.
    """
    if cell_deg <= 0.0:
        raise ValueError("cell_deg must be positive")
    lat_min, lat_max, lon_min, lon_max = region_bounds
    winners = {}
    for sid, pos in stations:
        if not (lat_min <= pos.lat_deg <= lat_max
                and lon_min <= pos.lon_deg <= lon_max):
            continue
        ci = int((pos.lat_deg - lat_min) / cell_deg)
        cj = int((pos.lon_deg - lon_min) / cell_deg)
        center_lat = lat_min + (ci + 0.5) * cell_deg
        center_lon = lon_min + (cj + 0.5) * cell_deg
        d = math.hypot(pos.lat_deg - center_lat, pos.lon_deg - center_lon)
        key = (ci, cj)
        if key not in winners or (d, sid) < (winners[key][0], winners[key][1]):
            winners[key] = (d, sid, pos)
    kept_ids = {sid for _, sid, _ in winners.values()}
    return [(sid, pos) for sid, pos in stations if sid in kept_ids]


def compute_aifw(targets, bin_width: float = 1.0,
                 lam: float = 0.05) -> AifwWeights:
    """Weight = (bin center / bin count)^lam per record.

    The bin containing zero would otherwise zero out its weights, so the
    representative value is floored at bin_width.
    """
    targets = np.asarray(targets, dtype=float)
    if targets.size == 0:
        raise ValueError("empty target list")
    if bin_width <= 0.0:
        raise ValueError("bin_width must be positive")
    if lam < 0.0:
        raise ValueError("lambda must be >= 0")
    if np.any(targets < 0.0):
        raise ValueError("targets must be >= 0")
    bins = np.floor(targets / bin_width).astype(np.int64)
    uniq, inverse, counts = np.unique(bins, return_inverse=True,
                                      return_counts=True)
    centers = np.maximum((uniq + 0.5) * bin_width, bin_width)
    per_bin = (centers / counts) ** lam
    return AifwWeights(bin_width, lam, per_bin[inverse])


def featurize_arrays(rx_lat, rx_lon, sat_xyz, elevation, doy, sod):
    """Vectorized 10-component feature layout shared by every model.

    [rx_lat/90, sin(rx_lon), cos(rx_lon), sat_x/R, sat_y/R, sat_z/R,
     elevation/90, doy/366, sod_sin, sod_cos] with R the orbit radius.
    """
    n = len(rx_lat)
    out = np.empty((n, FEATURE_DIM))
    lon = np.radians(rx_lon)
    out[:, 0] = np.asarray(rx_lat) / 90.0
    out[:, 1] = np.sin(lon)
    out[:, 2] = np.cos(lon)
    out[:, 3:6] = np.asarray(sat_xyz) / ORBIT_RADIUS_KM
    out[:, 6] = np.asarray(elevation) / 90.0
    out[:, 7] = np.asarray(doy) / 366.0
    frac = np.mod(np.asarray(sod, dtype=float), DAY_SECONDS)
    ang = 2.0 * np.pi * frac / DAY_SECONDS
    out[:, 8] = np.sin(ang)
    out[:, 9] = np.cos(ang)
    return out


def elevation_deg_arrays(rx_lat, rx_lon, rx_alt, sat_xyz) -> np.ndarray:
    """Vectorized elevation; on the sphere 'up' is the radial direction."""
    lat = np.radians(np.asarray(rx_lat))
    lon = np.radians(np.asarray(rx_lon))
    r = EARTH_RADIUS_KM + np.asarray(rx_alt)
    up = np.stack([np.cos(lat) * np.cos(lon),
                   np.cos(lat) * np.sin(lon),
                   np.sin(lat)], axis=1)
    d = np.asarray(sat_xyz) - r[:, None] * up
    dist = np.linalg.norm(d, axis=1)
    sin_el = np.einsum("ij,ij->i", d, up) / dist
    return np.degrees(np.arcsin(np.clip(sin_el, -1.0, 1.0)))


def featurize(r: RayRecord) -> np.ndarray:
    """Feature vector of one record (row of featurize_records)."""
    return featurize_records([r])[0]


def featurize_records(records) -> np.ndarray:
    rx_lat = np.array([r.rx.lat_deg for r in records])
    rx_lon = np.array([r.rx.lon_deg for r in records])
    rx_alt = np.array([r.rx.alt_km for r in records])
    sat = np.array([[r.sat.x_km, r.sat.y_km, r.sat.z_km] for r in records])
    elev = elevation_deg_arrays(rx_lat, rx_lon, rx_alt, sat)
    doy = np.array([r.doy for r in records], dtype=float)
    sod = np.array([r.sod for r in records], dtype=float)
    return featurize_arrays(rx_lat, rx_lon, sat, elev, doy, sod)


def targets_tecu(records) -> np.ndarray:
    return np.array([r.stec_tecu for r in records])


def _fmt(x: float) -> str:
    return f"{x:.9g}"


def _parse_field(row_num, name, raw, kind):
    try:
        return kind(raw)
    except ValueError:
        raise DataError(
            f"line {row_num}: column '{name}' has malformed value '{raw}'")


def save_csv(records, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(RAY_HEADER)
        for r in records:
            writer.writerow([
                r.station_id, r.sat_id, _fmt(r.rx.lat_deg),
                _fmt(r.rx.lon_deg), _fmt(r.rx.alt_km), _fmt(r.sat.x_km),
                _fmt(r.sat.y_km), _fmt(r.sat.z_km), r.year, r.doy, r.sod,
                _fmt(r.stec_tecu),
            ])


def load_csv(path):
    records = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != RAY_HEADER:
            raise DataError(f"{path}: unexpected header {header}")
        for row_num, row in enumerate(reader, start=2):
            if len(row) != len(RAY_HEADER):
                raise DataError(
                    f"line {row_num}: expected {len(RAY_HEADER)} columns, "
                    f"got {len(row)}")
            try:
                rx = GeodeticPos(
                    _parse_field(row_num, "rx_lat_deg", row[2], float),
                    _parse_field(row_num, "rx_lon_deg", row[3], float),
                    _parse_field(row_num, "rx_alt_km", row[4], float))
                rec = RayRecord(
                    station_id=row[0],
                    sat_id=row[1],
                    rx=rx,
                    sat=EcefPos(
                        _parse_field(row_num, "sat_x_km", row[5], float),
                        _parse_field(row_num, "sat_y_km", row[6], float),
                        _parse_field(row_num, "sat_z_km", row[7], float)),
                    year=_parse_field(row_num, "year", row[8], int),
                    doy=_parse_field(row_num, "doy", row[9], int),
                    sod=_parse_field(row_num, "sod", row[10], int),
                    stec_tecu=_parse_field(row_num, "stec_tecu", row[11],
                                           float))
            except (DataError, ValueError) as exc:
                if isinstance(exc, DataError) and "line" in str(exc):
                    raise
                raise DataError(f"line {row_num}: {exc}") from exc
            records.append(rec)
    return records


def save_catalog(stations, path):
    """stations: sequence of (id, GeodeticPos, role)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CATALOG_HEADER)
        for sid, pos, role in stations:
            if role not in ROLES:
                raise DataError(f"station {sid}: unknown role '{role}'")
            writer.writerow([sid, _fmt(pos.lat_deg), _fmt(pos.lon_deg),
                             _fmt(pos.alt_km), role])


def load_catalog(path):
    stations = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != CATALOG_HEADER:
            raise DataError(f"{path}: unexpected header {header}")
        for row_num, row in enumerate(reader, start=2):
            if len(row) != len(CATALOG_HEADER):
                raise DataError(f"line {row_num}: expected "
                                f"{len(CATALOG_HEADER)} columns")
            if row[4] not in ROLES:
                raise DataError(
                    f"line {row_num}: column 'role' has malformed value "
                    f"'{row[4]}'")
            pos = GeodeticPos(
                _parse_field(row_num, "lat_deg", row[1], float),
                _parse_field(row_num, "lon_deg", row[2], float),
                _parse_field(row_num, "alt_km", row[3], float))
            stations.append((row[0], pos, row[4]))
    return stations


def split_from_catalog(stations, train_day_range, test_day_range) -> SplitSpec:
    by_role = {role: frozenset(s[0] for s in stations if s[2] == role)
               for role in ROLES}
    return SplitSpec(by_role["train"], by_role["validation"],
                     by_role["test"], tuple(map(tuple, train_day_range)),
                     tuple(map(tuple, test_day_range)))


def _in_day_range(rec: RayRecord, day_range) -> bool:
    return day_range[0] <= (rec.year, rec.doy) <= day_range[1]


def partition_records(records, split: SplitSpec):
    """(train, validation, test) record lists per the split contract.

    Validation stations are scored over the training day window; test
    stations over the test window.
    """
    train, val, test = [], [], []
    for r in records:
        if r.station_id in split.train_station_ids:
            if _in_day_range(r, split.train_day_range):
                train.append(r)
        elif r.station_id in split.validation_station_ids:
            if _in_day_range(r, split.train_day_range):
                val.append(r)
        elif r.station_id in split.test_station_ids:
            if _in_day_range(r, split.test_day_range):
                test.append(r)
    return train, val, test
