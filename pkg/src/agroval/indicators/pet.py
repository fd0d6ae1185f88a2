"""FAO-56 Penman-Monteith reference evapotranspiration at a daily step.

All functions broadcast over numpy arrays.  Wind is taken as measured at
2 m, solar radiation in MJ m-2 day-1, soil heat flux is zero.
"""

from __future__ import annotations

import numpy as np

SOLAR_CONSTANT = 0.0820  # MJ m-2 min-1
STEFAN_BOLTZMANN = 4.903e-9  # MJ K-4 m-2 day-1
ALBEDO = 0.23


def saturation_vapour_pressure(t):
    """e°(T) in kPa for air temperature T in °C."""
    t = np.asarray(t, dtype=float)
    return 0.6108 * np.exp(17.27 * t / (t + 237.3))


def vapour_pressure_slope(t):
    """Δ, slope of the saturation vapour pressure curve [kPa °C-1]."""
    t = np.asarray(t, dtype=float)
    return 4098.0 * saturation_vapour_pressure(t) / (t + 237.3) ** 2


def psychrometric_constant(elevation):
    pressure = 101.3 * ((293.0 - 0.0065 * np.asarray(elevation, dtype=float)) / 293.0) ** 5.26
    return 0.665e-3 * pressure


def extraterrestrial_radiation(latitude, day_of_year):
    """Daily Ra [MJ m-2 day-1] from latitude (degrees) and day of year."""
    phi = np.deg2rad(np.asarray(latitude, dtype=float))
    j = np.asarray(day_of_year, dtype=float)
    dr = 1.0 + 0.033 * np.cos(2.0 * np.pi * j / 365.0)
    decl = 0.409 * np.sin(2.0 * np.pi * j / 365.0 - 1.39)
    ws = np.arccos(np.clip(-np.tan(phi) * np.tan(decl), -1.0, 1.0))
    return (24.0 * 60.0 / np.pi) * SOLAR_CONSTANT * dr * (
        ws * np.sin(phi) * np.sin(decl) + np.cos(phi) * np.cos(decl) * np.sin(ws)
    )


def net_radiation(radiation, tmax, tmin, ea, latitude, day_of_year, elevation):
    """Rn = Rns - Rnl with clear-sky radiation from elevation and Ra."""
    rs = np.asarray(radiation, dtype=float)
    rso = (0.75 + 2e-5 * np.asarray(elevation, dtype=float)) * extraterrestrial_radiation(latitude, day_of_year)
    rel = np.divide(rs, rso, out=np.ones_like(rs * rso), where=rso > 0)
    rel = np.minimum(rel, 1.0)
    tk4 = ((np.asarray(tmax) + 273.16) ** 4 + (np.asarray(tmin) + 273.16) ** 4) / 2.0
    rnl = STEFAN_BOLTZMANN * tk4 * (0.34 - 0.14 * np.sqrt(ea)) * (1.35 * rel - 0.35)
    return (1.0 - ALBEDO) * rs - rnl


def penman_monteith_et0(net_rad, tmean, wind, es, ea, delta, gamma, soil_heat=0.0):
    """The FAO-56 combination equation given its intermediate terms."""
    tmean = np.asarray(tmean, dtype=float)
    wind = np.asarray(wind, dtype=float)
    num = 0.408 * delta * (np.asarray(net_rad) - soil_heat) + gamma * 900.0 / (tmean + 273.0) * wind * (es - ea)
    return num / (delta + gamma * (1.0 + 0.34 * wind))


def pet_penman_monteith(tmean, tmax, tmin, wind, radiation, rhum, latitude, day_of_year,
                        elevation=100.0):
    """Reference-crop PET [mm/day], clipped at zero.

    Actual vapour pressure comes from mean relative humidity applied to the
    mean of e°(tmax) and e°(tmin).
    """
    es = (saturation_vapour_pressure(tmax) + saturation_vapour_pressure(tmin)) / 2.0
    ea = np.asarray(rhum, dtype=float) / 100.0 * es
    rn = net_radiation(radiation, tmax, tmin, ea, latitude, day_of_year, elevation)
    et0 = penman_monteith_et0(rn, tmean, wind, es, ea, vapour_pressure_slope(tmean),
                              psychrometric_constant(elevation))
    et0 = np.maximum(et0, 0.0)
    return float(et0) if np.ndim(et0) == 0 else et0


def day_of_year(dates) -> np.ndarray:
    d = np.asarray(dates, dtype="datetime64[D]")
    return (d - d.astype("datetime64[Y]")).astype(int) + 1
