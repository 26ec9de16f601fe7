"""Synthetic ionosphere: modulated Epstein layer and slant-TEC integration.

The electron density is a single Epstein layer whose peak density is
modulated diurnally (local solar time) and latitudinally, with an optional
slow amplitude drift used by the stress datasets. Slant TEC is a composite
Simpson line integral of the density over the straight receiver-satellite
segment; the quadrature variable is the geocentric radius, restricted to
the shell below ``top_km`` where the field has its support. Equal radial
steps keep the layer equally resolved at every elevation, which uniform
arc-length steps cannot do over satellite-length paths.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import _accel
from .errors import ConfigError
from .geometry import EARTH_RADIUS_KM, Ray, geodetic_to_ecef

TECU = 1e16  # electrons per m^2


@dataclass(frozen=True)
class EpsteinParams:
    """Layer peak density [el/m^3], peak height [km], thickness [km]."""

    n_max: float
    h_max: float
    b_thick: float

    def __post_init__(self):
        if self.n_max <= 0.0:
            raise ValueError("n_max must be positive")
        if self.b_thick <= 0.0:
            raise ValueError("b_thick must be positive")


@dataclass(frozen=True)
class IonosphereModel:
    """Epstein layer plus diurnal/latitudinal modulation.

    drift_per_day linearly inflates the amplitude with elapsed time and is
    only used to build storm-surrogate stress datasets. Density is treated
    as zero above top_km.
    """

    base: EpsteinParams
    diurnal_amp: float = 0.0
    equator_amp: float = 0.0
    local_noon_sod: float = 43200.0
    drift_per_day: float = 0.0
    top_km: float = 2000.0

    def __post_init__(self):
        if not 0.0 <= self.diurnal_amp < 1.0:
            raise ValueError("diurnal_amp must be in [0, 1)")
        if not 0.0 <= self.equator_amp < 1.0:
            raise ValueError("equator_amp must be in [0, 1)")
        if self.drift_per_day < 0.0:
            raise ValueError("drift_per_day must be >= 0")
        if self.top_km <= self.base.h_max:
            raise ValueError("top_km must sit above the layer peak")


def epstein_density(h_km: float, p: EpsteinParams) -> float:
    """Layer density 4*n_max*exp(z)/(1+exp(z))^2 with z=(h-h_max)/B.

    Evaluated in the symmetric exp(-|z|) form, so extreme heights return
    0.0 without overflow.
    """
    z = (h_km - p.h_max) / p.b_thick
    e = math.exp(-abs(z))
    return 4.0 * p.n_max * e / (1.0 + e) ** 2


def modulated_params(lat_deg: float, lon_deg: float, t: float,
                     model: IonosphereModel) -> EpsteinParams:
    """Scale n_max by the diurnal/latitude/drift factors at (lat, lon, t)."""
    local_sod = (t % 86400.0 + lon_deg / 15.0 * 3600.0) % 86400.0
    diurnal = 1.0 + model.diurnal_amp * math.cos(
        2.0 * math.pi * (local_sod - model.local_noon_sod) / 86400.0)
    equator = 1.0 + model.equator_amp * math.cos(math.radians(lat_deg)) ** 2
    drift = 1.0 + model.drift_per_day * (t / 86400.0)
    return EpsteinParams(model.base.n_max * diurnal * equator * drift,
                         model.base.h_max, model.base.b_thick)


def density_at(h_km: float, lat_deg: float, lon_deg: float, t: float,
               model: IonosphereModel) -> float:
    """Full model density; zero above the top_km support shell."""
    if h_km > model.top_km:
        return 0.0
    return epstein_density(h_km, modulated_params(lat_deg, lon_deg, t, model))


def _check_n_quad(n_quad: int):
    if n_quad < 8 or n_quad % 2 != 0:
        raise ConfigError(f"n_quad must be even and >= 8, got {n_quad}")


def stec_batch(rx_ecef: np.ndarray, sat_ecef: np.ndarray, t: np.ndarray,
               model: IonosphereModel, n_quad: int) -> np.ndarray:
    """Slant TEC in TECU for N rays given as (N,3) endpoint arrays."""
    _check_n_quad(n_quad)
    return _accel.stec_batch(
        rx_ecef, sat_ecef, t, model.base.n_max, model.base.h_max,
        model.base.b_thick, model.diurnal_amp, model.equator_amp,
        model.local_noon_sod, model.drift_per_day, n_quad, model.top_km,
        EARTH_RADIUS_KM)


def stec_along_ray(ray: Ray, t: float, model: IonosphereModel,
                   n_quad: int = 256) -> float:
    """Slant TEC in TECU along one ray at epoch-seconds t."""
    rx = geodetic_to_ecef(ray.receiver).as_array()[None, :]
    sat = ray.satellite.as_array()[None, :]
    return float(stec_batch(rx, sat, np.array([float(t)]), model, n_quad)[0])
