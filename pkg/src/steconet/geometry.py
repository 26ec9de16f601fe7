"""Coordinate transforms, synthetic orbits, ray construction, visibility.

A spherical Earth of radius 6371 km is used throughout so the analytic
slant-TEC oracles stay exact. All functions are pure.
"""

import math
from dataclasses import dataclass

import numpy as np

EARTH_RADIUS_KM = 6371.0

# GPS-like constellation constants (circular orbits)
ORBIT_RADIUS_KM = 26560.0
ORBIT_INCLINATION_DEG = 55.0
ORBIT_PERIOD_S = 43082.0

# deterministic per-satellite spacing (golden-angle node, fixed phase step)
_NODE_STEP_DEG = 137.508
_PHASE_STEP_DEG = 211.664


def _normalize_lon(lon_deg: float) -> float:
    lon = math.fmod(lon_deg + 180.0, 360.0)
    if lon < 0.0:
        lon += 360.0
    return lon - 180.0


@dataclass(frozen=True)
class GeodeticPos:
    """Spherical geodetic position: latitude, longitude, altitude."""

    lat_deg: float
    lon_deg: float
    alt_km: float = 0.0

    def __post_init__(self):
        if not -90.0 <= self.lat_deg <= 90.0:
            raise ValueError(f"latitude {self.lat_deg} outside [-90, 90]")
        if self.alt_km < 0.0:
            raise ValueError(f"altitude {self.alt_km} below surface")
        object.__setattr__(self, "lon_deg", _normalize_lon(self.lon_deg))


@dataclass(frozen=True)
class EcefPos:
    """Earth-centered Cartesian position in km."""

    x_km: float
    y_km: float
    z_km: float

    def as_array(self) -> np.ndarray:
        return np.array([self.x_km, self.y_km, self.z_km])

    def norm(self) -> float:
        return math.sqrt(self.x_km**2 + self.y_km**2 + self.z_km**2)


@dataclass(frozen=True)
class Ray:
    """Receiver-to-satellite straight ray retained by visibility filtering."""

    receiver: GeodeticPos
    satellite: EcefPos
    elevation_deg: float
    azimuth_deg: float
    length_km: float

    def __post_init__(self):
        if self.length_km <= 0.0:
            raise ValueError("ray length must be positive")
        if not -90.0 < self.elevation_deg <= 90.0:
            raise ValueError("elevation outside (-90, 90]")


def geodetic_to_ecef(p: GeodeticPos) -> EcefPos:
    """Spherical conversion; |result| = EARTH_RADIUS_KM + alt_km."""
    lat = math.radians(p.lat_deg)
    lon = math.radians(p.lon_deg)
    r = EARTH_RADIUS_KM + p.alt_km
    return EcefPos(
        r * math.cos(lat) * math.cos(lon),
        r * math.cos(lat) * math.sin(lon),
        r * math.sin(lat),
    )


def ecef_to_geodetic(p: EcefPos) -> GeodeticPos:
    """Inverse of geodetic_to_ecef on the sphere."""
    r = p.norm()
    if r <= 0.0:
        raise ValueError("zero-norm ECEF position")
    lat = math.degrees(math.asin(max(-1.0, min(1.0, p.z_km / r))))
    lon = math.degrees(math.atan2(p.y_km, p.x_km))
    return GeodeticPos(lat, lon, max(r - EARTH_RADIUS_KM, 0.0))


def elevation_azimuth(rx: GeodeticPos, sat: EcefPos) -> tuple[float, float]:
    """Elevation above the local horizon and azimuth clockwise from north.

    Raises ValueError for a zero-length ray (satellite at the receiver).
    """
    rx_ecef = geodetic_to_ecef(rx).as_array()
    d = sat.as_array() - rx_ecef
    dist = np.linalg.norm(d)
    if dist <= 1e-9:
        raise ValueError("zero-length ray: satellite coincides with receiver")
    lat = math.radians(rx.lat_deg)
    lon = math.radians(rx.lon_deg)
    east = np.array([-math.sin(lon), math.cos(lon), 0.0])
    north = np.array([-math.sin(lat) * math.cos(lon),
                      -math.sin(lat) * math.sin(lon),
                      math.cos(lat)])
    up = np.array([math.cos(lat) * math.cos(lon),
                   math.cos(lat) * math.sin(lon),
                   math.sin(lat)])
    e = float(d @ east)
    n = float(d @ north)
    u = float(d @ up)
    elevation = math.degrees(math.asin(max(-1.0, min(1.0, u / dist))))
    azimuth = math.degrees(math.atan2(e, n)) % 360.0
    return elevation, azimuth


def synth_orbit(sat_index: int, t: float, n_sats: int | None = None) -> EcefPos:
    """Circular synthetic orbit; deterministic in (sat_index, t).

    Node and phase offsets are fixed functions of sat_index, so distinct
    satellites never share a trajectory. Exactly periodic in ORBIT_PERIOD_S.
    """
    if sat_index < 0 or (n_sats is not None and sat_index >= n_sats):
        raise ValueError(f"sat_index {sat_index} out of range")
    node = math.radians((sat_index * _NODE_STEP_DEG) % 360.0)
    phase = math.radians((sat_index * _PHASE_STEP_DEG) % 360.0)
    incl = math.radians(ORBIT_INCLINATION_DEG)
    # reduce t first so t and t + period give bit-identical angles
    arg = 2.0 * math.pi * math.fmod(t, ORBIT_PERIOD_S) / ORBIT_PERIOD_S + phase
    xo = ORBIT_RADIUS_KM * math.cos(arg)
    yo = ORBIT_RADIUS_KM * math.sin(arg)
    return EcefPos(
        xo * math.cos(node) - yo * math.cos(incl) * math.sin(node),
        xo * math.sin(node) + yo * math.cos(incl) * math.cos(node),
        yo * math.sin(incl),
    )


def make_ray(rx: GeodeticPos, sat: EcefPos, cutoff_deg: float) -> Ray | None:
    """Build a Ray when elevation >= cutoff_deg (boundary inclusive).

    Returns None when the satellite is below the cutoff; rejection is a
    normal outcome, not an error.
    """
    elevation, azimuth = elevation_azimuth(rx, sat)
    if elevation < cutoff_deg:
        return None
    length = float(np.linalg.norm(sat.as_array() - geodetic_to_ecef(rx).as_array()))
    return Ray(rx, sat, elevation, azimuth, length)
