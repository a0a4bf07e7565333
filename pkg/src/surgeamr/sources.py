"""Momentum source terms: bottom friction, Coriolis, wind stress, pressure.

Friction uses a hybrid Chezy/Manning law integrated with backward Euler
(unconditionally stable momentum decay); Coriolis rotation uses the matrix
exponential truncated after the displayed fourth-order terms; wind and
pressure forcing are single forward Euler updates gated to wet cells.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .grid import DEG2RAD, Patch

_TINY = 1e-300


@dataclass
class ManningRegion:
    """Rectangle with ordered depth-contour roughness rules.

    ``rules`` is a list of ``(depth, n)`` pairs evaluated in order: the
    first rule with ``b > sea_level - depth`` assigns its ``n``; a ``None``
    depth acts as the final catch-all.
    """

    lon_min: float
    lat_min: float
    lon_max: float
    lat_max: float
    rules: list

    def contains(self, lon, lat):
        return ((self.lon_min <= lon) & (lon <= self.lon_max)
                & (self.lat_min <= lat) & (lat <= self.lat_max))


@dataclass
class FrictionConfig:
    """Parameters of the hybrid friction law plus the roughness field."""

    h_break: float = 2.0
    theta_f: float = 10.0
    gamma_f: float = 4.0 / 3.0
    n_land: float = 0.030
    n_water: float = 0.022
    land_rule_depth: float = 0.0   # default contour: land above sea_level
    regions: list = field(default_factory=list)
    clamp_negative_bracket: bool = True

    def __post_init__(self):
        if self.h_break <= 0 or self.theta_f <= 0 or self.gamma_f <= 0:
            raise ValueError("friction: h_break, theta_f, gamma_f must be > 0")
        if self.n_land < 0 or self.n_water < 0:
            raise ValueError("friction: Manning n values must be >= 0")


def wind_drag(wind_speed):
    """Wind drag coefficient, growing linearly and capped at 2e-3."""
    w = np.asarray(wind_speed, dtype=float)
    return np.minimum(2e-3, (0.75 + 0.067 * w) * 1e-3)


def friction_coefficient(h, n, cfg: FrictionConfig, speed, g=9.81):
    """Aggregate friction decay rate D (1/s) for depth ``h`` and |u|=speed.

    ``D = g n^2 h^(-7/3) |(hu,hv)| [1 - (h_break/h)^theta]^(gamma/theta)``
    with the bracket clamped at zero: the hybrid factor vanishes for
    ``h <= h_break`` and approaches one in deep water.
    """
    h = np.asarray(h, dtype=float)
    if np.any(h <= 0.0):
        raise ValueError("friction coefficient requires positive depth")
    speed = np.asarray(speed, dtype=float)
    with np.errstate(over="ignore", divide="ignore"):
        ratio = (cfg.h_break / h) ** cfg.theta_f
        bracket = 1.0 - ratio
        if cfg.clamp_negative_bracket:
            bracket = np.maximum(0.0, bracket)
        hybrid = bracket ** (cfg.gamma_f / cfg.theta_f)
    momentum_mag = h * speed
    return g * np.asarray(n) ** 2 * h ** (-7.0 / 3.0) * momentum_mag * hybrid


def apply_friction(patch: Patch, dt, n_field=None, cfg: FrictionConfig = None):
    """Backward Euler friction decay: ``hu <- hu / (1 + D dt)``.

    D is evaluated from the pre-update state; momentum magnitude never
    increases and the depth is untouched.
    """
    if cfg is None:
        cfg = FrictionConfig()
    if n_field is None:
        n_field = patch.n_manning
    phys = patch.geom.phys
    h = patch.h
    wet = h > phys.dry_tolerance
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        speed = np.where(wet, np.hypot(patch.hu, patch.hv)
                         / np.maximum(h, _TINY), 0.0)
        D = np.where(wet,
                     friction_coefficient(np.maximum(h, _TINY), n_field,
                                          cfg, speed, g=phys.g),
                     0.0)
    denom = 1.0 + D * dt
    patch.hu[...] /= denom
    patch.hv[...] /= denom


def manning_field(patch: Patch, cfg: FrictionConfig = None, sea_level=None):
    """Per-cell Manning n from bathymetry contours relative to sea level.

    Default rule: ``n_land`` above the land contour, ``n_water`` below;
    inside a :class:`ManningRegion` its ordered rules replace the default.
    Must be re-evaluated after regridding, since the contour test depends
    on the local resolution of ``b``.
    """
    if cfg is None:
        cfg = FrictionConfig()
    phys = patch.geom.phys
    if sea_level is None:
        sea_level = phys.sea_level
    b = patch.b
    n = np.where(b > sea_level - cfg.land_rule_depth, cfg.n_land, cfg.n_water)
    if cfg.regions:
        lon = patch.lon_centers(padded=True)[:, None]
        lat = patch.lat_centers(padded=True)[None, :]
        for region in cfg.regions:
            inside = region.contains(lon, lat)
            if not np.any(inside):
                continue
            assigned = np.zeros_like(inside)
            for depth, n_val in region.rules:
                if depth is None:
                    sel = inside & ~assigned
                else:
                    sel = inside & ~assigned & (b > sea_level - depth)
                n = np.where(sel, n_val, n)
                assigned |= sel
    patch.n_manning[...] = n
    return n


def coriolis_parameter(lat, omega=2.0 * np.pi / 8.61642e4):
    """Coriolis parameter ``f = 2 Omega sin(lat)`` with lat in degrees."""
    return 2.0 * omega * np.sin(np.asarray(lat) * DEG2RAD)


def apply_coriolis(patch: Patch, dt):
    """Rotate momentum by the truncated matrix exponential of f dt.

    With ``x = f dt``, ``c = 1 - x^2/2 + x^4/24`` and ``s = x - x^3/6``:
    ``(hu, hv) <- (c hu + s hv, -s hu + c hv)``.  The magnitude factor is
    ``sqrt(1 - x^6/72 + x^8/576)``, within round-off of one for small x.
    """
    phys = patch.geom.phys
    lat = patch.lat_centers(padded=True)
    f = coriolis_parameter(lat, phys.omega)
    x = f * dt
    c = 1.0 - x ** 2 / 2.0 + x ** 4 / 24.0
    s = x - x ** 3 / 6.0
    hu = patch.hu.copy()
    hv = patch.hv.copy()
    patch.hu[...] = c[None, :] * hu + s[None, :] * hv
    patch.hv[...] = -s[None, :] * hu + c[None, :] * hv


def apply_wind(patch: Patch, dt, wind_field, phys):
    """Forward Euler wind stress on wet cells.

    ``hu += dt (h/rho) rho_air C_w |W| W_x`` and likewise for ``hv``.
    """
    wind_x, wind_y = wind_field
    h = patch.h
    wet = h >= phys.dry_tolerance
    wmag = np.hypot(wind_x, wind_y)
    cw = wind_drag(wmag)
    factor = np.where(wet, dt * (h / phys.rho) * phys.rho_air * cw * wmag, 0.0)
    patch.hu[...] += factor * wind_x
    patch.hv[...] += factor * wind_y


def apply_pressure(patch: Patch, dt, pressure_field, phys):
    """Forward Euler pressure gradient forcing on wet interior cells.

    Second-order centered differences of the cell-centered pressure field,
    divided by the same per-row effective metric widths the hyperbolic
    sweeps use, so a radial low balances the discrete surface gradient
    exactly rather than spinning up a spurious vortex.
    """
    ng = patch.ng
    nx, ny = patch.nx, patch.ny
    isl = slice(ng, ng + nx)
    jsl = slice(ng, ng + ny)
    P = pressure_field
    h = patch.h[isl, jsl]
    wet = h >= phys.dry_tolerance
    dx_m = patch.dx_eff[None, jsl]
    dy_m = patch.dy_eff[None, jsl]
    dpdx = (P[ng + 1:ng + nx + 1, jsl] - P[ng - 1:ng + nx - 1, jsl]) / (2.0 * dx_m)
    dpdy = (P[isl, ng + 1:ng + ny + 1] - P[isl, ng - 1:ng + ny - 1]) / (2.0 * dy_m)
    factor = np.where(wet, dt * h / phys.rho, 0.0)
    patch.hu[isl, jsl] -= factor * dpdx
    patch.hv[isl, jsl] -= factor * dpdy
