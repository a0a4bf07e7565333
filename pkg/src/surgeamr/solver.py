"""Single-patch time integration: sweeps, CFL control, source splitting.

A step is two Godunov dimensional sweeps (x then y, order alternating each
step) of fluctuations plus limited second-order corrections, followed by
the momentum source updates applied in a fixed order.  Updates divide by
local metric widths in meters and weight meridional faces by the cosine of
the edge latitude, so that area-weighted mass telescopes exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import sources as _sources
from . import storm as _storm
from .grid import Patch
from .riemann import CFLViolation, limit_fwaves, solve_augmented


@dataclass
class StepReport:
    """Diagnostics from one accepted hyperbolic step."""

    dt_used: float
    max_courant: float
    max_speed: float
    mass_before: float
    mass_after: float
    clamped_volume: float = 0.0


@dataclass
class SweepFluxes:
    """Interface fluxes captured during a step, for refluxing.

    ``fx_left[/right]`` have shape (3, nx+3, ny+4): the flux through the
    x-interface between padded columns (t, t+1) as accounted by the left
    (right) cell.  ``fy_*`` analogously with shape (3, nx+4, ny+3).
    """

    fx_left: np.ndarray
    fx_right: np.ndarray
    fy_left: np.ndarray
    fy_right: np.ndarray


def _physical_flux(q, g, dry_tol, normal):
    """Exact flux vector of the conserved state along one direction."""
    h, hu, hv = q[0], q[1], q[2]
    wet = h >= dry_tol
    with np.errstate(divide="ignore", invalid="ignore"):
        u = np.where(wet, hu / np.maximum(h, 1e-300), 0.0)
        v = np.where(wet, hv / np.maximum(h, 1e-300), 0.0)
    f = np.zeros_like(q)
    half_gh2 = 0.5 * g * h * h
    if normal == "x":
        f[0] = np.where(wet, hu, 0.0)
        f[1] = np.where(wet, hu * u, 0.0) + half_gh2
        f[2] = np.where(wet, hu * v, 0.0)
    else:
        f[0] = np.where(wet, hv, 0.0)
        f[1] = np.where(wet, hv * u, 0.0)
        f[2] = np.where(wet, hv * v, 0.0) + half_gh2
    return f


def _dry_fix(patch, q, isl, jsl):
    """Clamp small negative depths, zero momentum in dry cells.

    Thin films draining over steep bathymetry can overdraw a cell by up to
    about the dry tolerance; the deficit is returned (as a volume) so the
    caller can account for it.  Anything beyond -0.1 m means the scheme
    has genuinely blown up.
    """
    h = q[0, isl, jsl]
    if np.any(h < -0.1):
        raise RuntimeError("solver produced a significantly negative depth")
    deficit = 0.0
    neg = h < 0.0
    if np.any(neg):
        area = np.broadcast_to(patch.cell_area_row[None, jsl], h.shape)
        deficit = float(np.sum(-h[neg] * area[neg]))
        h[neg] = 0.0
    dry = h < patch.geom.phys.dry_tolerance
    q[1, isl, jsl][dry] = 0.0
    q[2, isl, jsl][dry] = 0.0
    return deficit


def step_hyperbolic(patch: Patch, dt, order=2, courant_max=1.0,
                    capture_fluxes=False, bc_refresh=None):
    """Advance the patch state by one hyperbolic step of size ``dt``.

    Ghost cells must be filled beforehand.  ``bc_refresh(patch, q)``, when
    given, re-applies physical boundary conditions between the two sweeps;
    the first sweep advances ghost rows with their own row metric, which
    would otherwise break the mirror symmetry at reflecting walls.
    Returns ``(StepReport, SweepFluxes | None)``.  Raises
    :class:`CFLViolation` (state untouched) when a wave would cross more
    than ``courant_max`` cells.
    """
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    phys = patch.geom.phys
    g = phys.g
    drytol = phys.dry_tolerance
    ng = patch.ng
    nx, ny = patch.nx, patch.ny

    q = patch.q.copy()
    mass_before = float(np.sum(q[0, ng:ng + nx, ng:ng + ny]
                               * patch.cell_areas()))
    fluxes = None
    max_courant = 0.0
    max_speed = 0.0
    clamped = 0.0

    first_y = patch.step_count % 2 == 1
    sweep_order = ("y", "x") if first_y else ("x", "y")

    for pos, axis in enumerate(sweep_order):
        full_transverse = pos == 0
        if pos == 1 and bc_refresh is not None:
            bc_refresh(patch, q)
        cfl, spd, fl, fr, dv = _sweep(patch, q, dt, axis, order, drytol, g,
                                      full_transverse, capture_fluxes,
                                      courant_max)
        clamped += dv
        max_courant = max(max_courant, cfl)
        max_speed = max(max_speed, spd)
        if capture_fluxes:
            if fluxes is None:
                fluxes = SweepFluxes(None, None, None, None)
            if axis == "x":
                fluxes.fx_left, fluxes.fx_right = fl, fr
            else:
                fluxes.fy_left, fluxes.fy_right = fl, fr

    patch.q[...] = q
    mass_after = float(np.sum(q[0, ng:ng + nx, ng:ng + ny]
                              * patch.cell_areas()))
    patch.step_count += 1
    return (StepReport(dt_used=dt, max_courant=max_courant,
                       max_speed=max_speed, mass_before=mass_before,
                       mass_after=mass_after, clamped_volume=clamped),
            fluxes)


def _sweep(patch, q, dt, axis, order, drytol, g, full_transverse, capture,
           courant_max=1.0):
    """One dimensional sweep, updating ``q`` in place.

    For the y sweep everything below works on views with x and y swapped,
    so "rows" always means the transverse direction and axis 1 the sweep
    direction.
    """
    ng = patch.ng
    nx, ny = patch.nx, patch.ny

    if axis == "x":
        qs = q                       # (3, K, M), sweep along axis 1
        bs = patch.b
        n_sweep = nx
    else:
        qs = np.swapaxes(q, 1, 2)    # view: updates write through
        bs = patch.b.T
        n_sweep = ny
    K, M = qs.shape[1], qs.shape[2]
    n_int = K - 1

    qL = qs[:, :-1, :].reshape(3, -1).copy()
    qR = qs[:, 1:, :].reshape(3, -1).copy()
    bL = bs[:-1, :].reshape(-1)
    bR = bs[1:, :].reshape(-1)

    sol = solve_augmented(qL, qR, bL, bR, direction=axis, g=g,
                          dry_tolerance=drytol)
    fw = sol.fwaves.reshape(3, 3, n_int, M)
    sw = sol.speeds.reshape(3, n_int, M)
    amdq = sol.amdq.reshape(3, n_int, M)
    apdq = sol.apdq.reshape(3, n_int, M)
    if axis == "y":
        # solver returned components in (h, hu, hv); sweep math below only
        # combines whole vectors, so no further reordering is needed
        pass

    # per-interface metric width: along x it is the row's effective width,
    # along y the smaller of the two adjacent rows
    if axis == "x":
        width_int = np.broadcast_to(patch.dx_eff[None, :], (n_int, M))
    else:
        dyw = np.minimum(patch.dy_eff[:-1], patch.dy_eff[1:])
        width_int = np.broadcast_to(dyw[:, None], (n_int, M))

    abs_s = np.abs(sw)
    max_speed = float(abs_s.max()) if abs_s.size else 0.0
    nu = dt * abs_s / width_int[None]
    courant = float(nu.max()) if nu.size else 0.0
    if courant > courant_max + 1e-12:
        raise CFLViolation(courant)   # reject before touching the state

    ftilde = np.zeros((3, n_int, M))
    if order >= 2:
        fw_lim = limit_fwaves(fw, sw)
        factor = np.sign(sw) * (1.0 - nu)
        ftilde = 0.5 * np.einsum("pnm,cpnm->cnm", factor, fw_lim)

    flux_left = flux_right = None
    if capture:
        fq_l = _physical_flux(qL.reshape(3, n_int, M), g, drytol, axis)
        fq_r = _physical_flux(qR.reshape(3, n_int, M), g, drytol, axis)
        flux_left = fq_l + amdq + ftilde
        flux_right = fq_r - apdq + ftilde
        if axis == "y":
            flux_left = flux_left.swapaxes(1, 2).copy()
            flux_right = flux_right.swapaxes(1, 2).copy()

    s_lo, s_hi = ng, ng + n_sweep              # updated cells, sweep axis
    t_lo, t_hi = (0, M) if full_transverse else (ng, M - ng)
    west = slice(s_lo - 1, s_hi - 1)           # interface west/south of cell
    east = slice(s_lo, s_hi)
    tsl = slice(t_lo, t_hi)
    # capacity form: the row's effective metric width carries the latitude
    # dependence, so fluctuation sums telescope and area-weighted mass is
    # conserved exactly
    if axis == "x":
        scale = dt / patch.dx_eff[None, None, tsl]
    else:
        scale = (dt / patch.dy_eff[s_lo:s_hi])[None, :, None]
    upd = (apdq[:, west, tsl] + amdq[:, east, tsl]
           + ftilde[:, east, tsl] - ftilde[:, west, tsl])
    qs[:, east, tsl] -= scale * upd

    if axis == "x":
        deficit = _dry_fix(patch, q, slice(s_lo, s_hi), tsl)
    else:
        deficit = _dry_fix(patch, q, tsl, slice(s_lo, s_hi))
    return courant, max_speed, flux_left, flux_right, deficit


def compute_stable_dt(patch: Patch, courant_target=0.9):
    """Largest stable step for this patch under the target Courant number.

    Uses the larger velocity component plus the gravity wave speed against
    the smaller metric cell size; returns ``inf`` for an all-dry patch.
    """
    phys = patch.geom.phys
    ng = patch.ng
    h = patch.interior(patch.h)
    wet = h >= phys.dry_tolerance
    if not np.any(wet):
        return np.inf
    hu = patch.interior(patch.hu)
    hv = patch.interior(patch.hv)
    with np.errstate(divide="ignore", invalid="ignore"):
        umax = np.where(wet, np.maximum(np.abs(hu), np.abs(hv))
                        / np.maximum(h, 1e-300), 0.0)
    speed = umax + np.sqrt(phys.g * np.where(wet, h, 0.0))
    width = np.minimum(patch.dx_eff, patch.dy_eff)[ng:ng + patch.ny]
    with np.errstate(divide="ignore", invalid="ignore"):
        dt = np.where(wet & (speed > 0.0),
                      width[None, :] / np.maximum(speed, 1e-300), np.inf)
    return float(courant_target * dt.min())


def apply_source_split(patch: Patch, dt, storm_state, phys,
                       friction_field=None, friction_config=None):
    """Momentum source updates for one step, in fixed order.

    friction (backward Euler) -> Coriolis (truncated matrix exponential)
    -> wind stress -> pressure gradient, each over the full ``dt``.  Dry
    cells receive no wind/pressure/Coriolis forcing and end with zero
    momentum.
    """
    if friction_field is None:
        friction_field = patch.n_manning
    if friction_config is None:
        friction_config = _sources.FrictionConfig()
    _sources.apply_friction(patch, dt, friction_field, friction_config)
    _sources.apply_coriolis(patch, dt)
    if storm_state is not None:
        wind_x, wind_y, pressure = _storm.evaluate_fields(patch, storm_state)
        _sources.apply_wind(patch, dt, (wind_x, wind_y), phys)
        _sources.apply_pressure(patch, dt, pressure, phys)
    dry = patch.h < phys.dry_tolerance
    patch.hu[dry] = 0.0
    patch.hv[dry] = 0.0


def advance_patch(patch: Patch, dt, order=2, courant_target=0.9,
                  storm_state=None, with_sources=False,
                  capture_fluxes=False, max_retries=25):
    """Take one step, shrinking ``dt`` by 0.75 on Courant rejection.

    Convenience driver for single-patch runs; returns the accepted
    ``(StepReport, SweepFluxes | None)``.
    """
    for _ in range(max_retries):
        try:
            report, fluxes = step_hyperbolic(
                patch, dt, order=order, capture_fluxes=capture_fluxes)
        except CFLViolation:
            dt *= 0.75
            continue
        if with_sources:
            apply_source_split(patch, dt, storm_state, patch.geom.phys)
        return report, fluxes
    raise RuntimeError("step kept violating the CFL bound after retries")
