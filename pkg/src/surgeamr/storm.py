"""Parametric cyclone: track ingestion, interpolation, wind/pressure fields.

The radial wind and pressure profiles follow the classic empirical vortex
shape controlled by the maximum wind, radius of maximum winds, central and
background pressures.  The rotational field is cyclonic (counterclockwise
in the northern hemisphere), storm translation is added at full magnitude,
and a tanh ramp beyond the last closed isobar sends the wind to zero and
the pressure to background.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass

import numpy as np

from .grid import DEG2RAD, Patch, cell_size_meters

TRACK_COLUMNS = ["t_seconds", "eye_lon", "eye_lat", "max_wind_mps",
                 "rmw_m", "central_pressure_pa", "radius_outer_m"]


@dataclass
class StormSample:
    """One track entry: time, eye position and storm intensity scalars."""

    t: float
    eye_lon: float
    eye_lat: float
    max_wind: float           # m/s
    radius_max_wind: float    # m
    central_pressure: float   # Pa
    radius_outer: float       # m, last closed isobar

    def __post_init__(self):
        if self.radius_max_wind <= 0:
            raise ValueError("storm sample: radius of maximum winds must be > 0")
        if self.central_pressure <= 0:
            raise ValueError("storm sample: central pressure must be > 0")
        if self.max_wind <= 0:
            raise ValueError("storm sample: maximum wind must be > 0")
        if self.radius_outer <= self.radius_max_wind:
            raise ValueError("storm sample: outer radius must exceed "
                             "radius of maximum winds")


@dataclass
class StormState:
    """Instantaneous storm: interpolated sample plus derived quantities."""

    t: float
    eye_lon: float
    eye_lat: float
    max_wind: float
    radius_max_wind: float
    central_pressure: float
    radius_outer: float
    translation: tuple        # (east, north) m/s
    background_pressure: float = 101300.0
    ramp_width: float = 100e3
    rho_air: float = 1.15


def read_track(path):
    """Read a storm track CSV (header per ``TRACK_COLUMNS``, '#' comments)."""
    samples = []
    with open(path) as fh:
        lines = [ln for ln in fh
                 if ln.strip() and not ln.lstrip().startswith("#")]
    reader = csv.DictReader(lines)
    if reader.fieldnames is None or [c.strip() for c in reader.fieldnames] \
            != TRACK_COLUMNS:
        raise ValueError(
            f"{path}: expected header {','.join(TRACK_COLUMNS)}")
    for row in reader:
        samples.append(StormSample(
            t=float(row["t_seconds"]),
            eye_lon=float(row["eye_lon"]),
            eye_lat=float(row["eye_lat"]),
            max_wind=float(row["max_wind_mps"]),
            radius_max_wind=float(row["rmw_m"]),
            central_pressure=float(row["central_pressure_pa"]),
            radius_outer=float(row["radius_outer_m"])))
    if len(samples) < 2:
        raise ValueError(f"{path}: a track needs at least 2 samples")
    times = [s.t for s in samples]
    if any(t1 <= t0 for t0, t1 in zip(times, times[1:])):
        raise ValueError(f"{path}: track times must be strictly increasing")
    return samples


def _segment_translation(s0: StormSample, s1: StormSample, lat,
                         earth_radius):
    """Translation velocity (m/s) of the segment, metric at latitude lat."""
    dt = s1.t - s0.t
    mx, my = cell_size_meters(lat, 1.0, 1.0, earth_radius)
    return ((s1.eye_lon - s0.eye_lon) * mx / dt,
            (s1.eye_lat - s0.eye_lat) * my / dt)


def interpolate_track(track, t, *, earth_radius=6.367e6,
                      background_pressure=101300.0, ramp_width=100e3,
                      rho_air=1.15) -> StormState:
    """Continuous storm state at time ``t`` from a sampled track.

    Scalars and the eye position interpolate linearly between samples.
    Past the last sample the intensity parameters hold constant while the
    eye keeps advecting with the last segment's velocity.
    """
    if len(track) < 2:
        raise ValueError("a track needs at least 2 samples")
    times = [s.t for s in track]
    if t < times[0]:
        raise ValueError(f"time {t} precedes the first track sample")
    if t >= times[-1]:
        s0, s1 = track[-2], track[-1]
        seg_dt = s1.t - s0.t
        lon = s1.eye_lon + (s1.eye_lon - s0.eye_lon) / seg_dt * (t - s1.t)
        lat = s1.eye_lat + (s1.eye_lat - s0.eye_lat) / seg_dt * (t - s1.t)
        trans = _segment_translation(s0, s1, lat, earth_radius)
        return StormState(t=t, eye_lon=lon, eye_lat=lat,
                          max_wind=s1.max_wind,
                          radius_max_wind=s1.radius_max_wind,
                          central_pressure=s1.central_pressure,
                          radius_outer=s1.radius_outer, translation=trans,
                          background_pressure=background_pressure,
                          ramp_width=ramp_width, rho_air=rho_air)
    k = int(np.searchsorted(times, t, side="right")) - 1
    k = min(max(k, 0), len(track) - 2)
    s0, s1 = track[k], track[k + 1]
    a = (t - s0.t) / (s1.t - s0.t)

    def lerp(x0, x1):
        return x0 + a * (x1 - x0)

    lat = lerp(s0.eye_lat, s1.eye_lat)
    trans = _segment_translation(s0, s1, lat, earth_radius)
    return StormState(t=t, eye_lon=lerp(s0.eye_lon, s1.eye_lon), eye_lat=lat,
                      max_wind=lerp(s0.max_wind, s1.max_wind),
                      radius_max_wind=lerp(s0.radius_max_wind,
                                           s1.radius_max_wind),
                      central_pressure=lerp(s0.central_pressure,
                                            s1.central_pressure),
                      radius_outer=lerp(s0.radius_outer, s1.radius_outer),
                      translation=trans,
                      background_pressure=background_pressure,
                      ramp_width=ramp_width, rho_air=rho_air)


def holland_B(state: StormState) -> float:
    """Pressure-profile shape parameter.

    ``B = rho_air W'^2 e / (P_n - P_c)`` where ``W'`` is the maximum wind
    reduced by the translation speed, floored at one tenth of the maximum.
    Warns (without clamping) when B leaves the empirically sane [1, 2.5].
    """
    dp = state.background_pressure - state.central_pressure
    if dp <= 0.0:
        raise ValueError("background pressure must exceed central pressure")
    trans_mag = math.hypot(*state.translation)
    w_prime = max(state.max_wind - trans_mag, 0.1 * state.max_wind)
    B = state.rho_air * w_prime ** 2 * math.e / dp
    if not 1.0 <= B <= 2.5:
        warnings.warn(f"Holland B = {B:.3f} outside [1, 2.5]", stacklevel=2)
    return B


def wind_profile(r, state: StormState, f=None,
                 omega=2.0 * np.pi / 8.61642e4):
    """Radial gradient wind speed at distance ``r`` (m) from the eye.

    ``f`` defaults to the Coriolis parameter at the eye latitude.  The
    profile rises to ``max_wind`` at the radius of maximum winds and decays
    outward; the r -> 0 limit is zero.
    """
    if f is None:
        f = 2.0 * omega * math.sin(state.eye_lat * DEG2RAD)
    r = np.asarray(r, dtype=float)
    B = holland_B(state)
    rw = state.radius_max_wind
    r_safe = np.maximum(r, 1e-9 * rw)
    with np.errstate(over="ignore", under="ignore"):
        s = (rw / r_safe) ** B
        core = state.max_wind ** 2 * s * np.exp(1.0 - s)
    rf2 = 0.5 * r * f
    return np.sqrt(core + rf2 ** 2) - rf2


def pressure_profile(r, state: StormState):
    """Radial surface pressure; central value at the eye, background far out."""
    r = np.asarray(r, dtype=float)
    B = holland_B(state)
    rw = state.radius_max_wind
    r_safe = np.maximum(r, 1e-9 * rw)
    with np.errstate(over="ignore", under="ignore"):
        s = (rw / r_safe) ** B
        decay = np.exp(-s)
    pn = state.background_pressure
    pc = state.central_pressure
    return pc + (pn - pc) * decay


def ramp(r, radius_outer, ramp_width):
    """Far-field taper ``0.5 (1 - tanh((r - R_p)/R_w))``, 1 inside, 0 out."""
    if ramp_width <= 0:
        raise ValueError("ramp width must be positive")
    return 0.5 * (1.0 - np.tanh((np.asarray(r, dtype=float) - radius_outer)
                                / ramp_width))


def evaluate_fields(patch: Patch, state: StormState):
    """Wind vectors and pressure at all (padded) cell centers of a patch.

    Radial profiles are rotated into a cyclonic field, translation is added
    at full magnitude, then wind and pressure are tapered by the far-field
    ramp.  Returns ``(wind_x, wind_y, pressure)``.
    """
    phys = patch.geom.phys
    lon = patch.lon_centers(padded=True)[:, None]
    lat = patch.lat_centers(padded=True)[None, :]
    mean_lat = 0.5 * (lat + state.eye_lat)
    mx, my = cell_size_meters(mean_lat, 1.0, 1.0, phys.earth_radius)
    x_east = (lon - state.eye_lon) * mx
    y_north = (lat - state.eye_lat) * my
    r = np.hypot(x_east, y_north)
    theta = np.arctan2(y_north, x_east)

    f_eye = 2.0 * phys.omega * math.sin(state.eye_lat * DEG2RAD)
    W = wind_profile(r, state, f=f_eye)
    spin = 1.0 if state.eye_lat >= 0.0 else -1.0
    wind_x = -spin * W * np.sin(theta) + state.translation[0]
    wind_y = spin * W * np.cos(theta) + state.translation[1]

    P = pressure_profile(r, state)
    taper = ramp(r, state.radius_outer, state.ramp_width)
    wind_x = wind_x * taper
    wind_y = wind_y * taper
    pressure = state.background_pressure + (P - state.background_pressure) * taper
    return wind_x, wind_y, pressure
