"""Adaptive level hierarchy: sub-cycled advance, regridding, conservation.

The hierarchy evolves recursively: a level takes one step, fine-level ghost
cells are filled by space-time interpolation from the parent, the finer
level takes enough sub-steps to catch up, overlapping regions are replaced
with conservative fine averages, and coarse cells bordering fine patches
are corrected with time-integrated fine fluxes (refluxing).

Interpolation works on the sea surface (dry cells report the ambient sea
level) with limited slopes clipped to the enclosing coarse neighborhood,
so still water stays still and no new surface or velocity extrema appear.
Mass bookkeeping near wet-dry transitions goes into a cumulative
diagnostic instead of being silently lost.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import solver as _solver
from . import sources as _sources
from . import storm as _storm
from .grid import (DEG2RAD, BathymetrySources, GeoDomain,
                   LevelGeometry, Patch, PhysConfig,
                   initialize_lake_at_rest, sample_bathymetry)
from .riemann import CFLViolation

_TINY = 1e-300


class NestingError(RuntimeError):
    """A fine patch lacks coarse (or sibling) data where ghosts need it."""


class _LevelCFL(Exception):
    """Internal: CFL rejection carrying the level that failed."""

    def __init__(self, level, courant):
        super().__init__(f"CFL violation at level {level}: {courant:.3f}")
        self.level = level
        self.courant = courant


@dataclass
class RefinementRegion:
    """Spatial (and optional temporal) refinement constraint rectangle."""

    lon_min: float
    lat_min: float
    lon_max: float
    lat_max: float
    min_level: int = 1
    max_level: int | None = None
    t_start: float = -np.inf
    t_end: float = np.inf

    def active(self, t):
        return self.t_start <= t <= self.t_end

    def mask(self, lon, lat):
        return ((self.lon_min <= lon) & (lon <= self.lon_max)
                & (self.lat_min <= lat) & (lat <= self.lat_max))


@dataclass
class RefinementCriteria:
    """Cell-flagging tolerances.

    ``speed_tolerances`` follow the worked convention that a cell at level
    L is compared against entry L+1 of the 1-based list (the level it is
    already resolving); eye-distance and wind lists are indexed directly by
    the cell's level (1-based), first entry governing refinement from
    level 1.
    """

    wave_tolerance: float | None = None
    speed_tolerances: tuple = ()
    eye_radii: tuple = ()          # meters
    wind_tolerances: tuple = ()    # m/s
    regions: tuple = ()
    max_refinement_depth: float | None = None


def _intersect(a, b):
    """Intersection of two (i0, j0, i1, j1) rectangles, or None."""
    i0 = max(a[0], b[0])
    j0 = max(a[1], b[1])
    i1 = min(a[2], b[2])
    j1 = min(a[3], b[3])
    if i0 >= i1 or j0 >= j1:
        return None
    return (i0, j0, i1, j1)


def _replicate_uncovered(q, b, covered):
    """Fill uncovered window cells from covered neighbors (slope halo only)."""
    cov = covered.copy()
    for _ in range(2):
        if cov.all():
            break
        for axis in (0, 1):
            for step in (1, -1):
                src_cov = np.roll(cov, step, axis=axis)
                if step > 0:
                    edge = [slice(None)] * 2
                    edge[axis] = slice(0, 1)
                else:
                    edge = [slice(None)] * 2
                    edge[axis] = slice(-1, None)
                src_cov[tuple(edge)] = False
                take = ~cov & src_cov
                if not take.any():
                    continue
                qs = np.roll(q, step, axis=axis + 1)
                bs = np.roll(b, step, axis=axis)
                q[:, take] = qs[:, take]
                b[take] = bs[take]
                cov |= take


def _dilate(mask, width):
    """Binary dilation by ``width`` cells with a square structuring element."""
    if width <= 0:
        return mask.copy()
    out = mask.copy()
    for axis in (0, 1):
        acc = out.copy()
        for s in range(1, width + 1):
            shifted = np.zeros_like(out)
            src = [slice(None), slice(None)]
            dst = [slice(None), slice(None)]
            src[axis] = slice(s, None)
            dst[axis] = slice(None, -s)
            shifted[tuple(dst)] = out[tuple(src)]
            acc |= shifted
            shifted = np.zeros_like(out)
            src[axis] = slice(None, -s)
            dst[axis] = slice(s, None)
            shifted[tuple(dst)] = out[tuple(src)]
            acc |= shifted
        out = acc
    return out


def _erode_in_domain(mask):
    """Erosion by one cell, treating the outside of the array as covered."""
    padded = np.pad(mask, 1, mode="edge")
    out = np.ones_like(mask)
    for di in (-1, 0, 1):
        for dj in (-1, 0, 1):
            out &= padded[1 + di:1 + di + mask.shape[0],
                          1 + dj:1 + dj + mask.shape[1]]
    return out


def _find_cut(signature):
    """Index to split a 1D flag signature at, or None."""
    n = signature.shape[0]
    if n < 2:
        return None
    zeros = np.flatnonzero(signature[1:-1] == 0) + 1
    if zeros.size:
        center = n / 2.0
        return int(zeros[np.argmin(np.abs(zeros - center))])
    if n >= 4:
        d2 = signature[:-2] - 2 * signature[1:-1] + signature[2:]
        best = None
        best_jump = 0.0
        for i in range(d2.shape[0] - 1):
            if d2[i] * d2[i + 1] < 0:
                jump = abs(d2[i] - d2[i + 1])
                if jump > best_jump:
                    best_jump = jump
                    best = i + 2        # cut between cells i+1 and i+2
        if best is not None and 1 <= best <= n - 1:
            return best
    return None


def cluster_flags(mask, min_fill=0.7, buffer=3):
    """Cover flagged cells (after dilation) with efficient rectangles.

    Recursive signature bisection: boxes are shrunk to the bounding box of
    their flags and split at signature holes or inflection points until the
    flagged fraction reaches ``min_fill`` or no useful cut remains.
    Returns disjoint ``(i0, j0, i1, j1)`` rectangles.
    """
    m = _dilate(np.asarray(mask, dtype=bool), buffer)
    if not m.any():
        return []
    rects = []

    def bbox(box):
        i0, j0, i1, j1 = box
        sub = m[i0:i1, j0:j1]
        cols = np.flatnonzero(sub.any(axis=1))
        rows = np.flatnonzero(sub.any(axis=0))
        return (i0 + cols[0], j0 + rows[0], i0 + cols[-1] + 1,
                j0 + rows[-1] + 1)

    stack = [bbox((0, 0, m.shape[0], m.shape[1]))]
    while stack:
        box = stack.pop()
        box = bbox(box)
        i0, j0, i1, j1 = box
        sub = m[i0:i1, j0:j1]
        count = int(sub.sum())
        area = (i1 - i0) * (j1 - j0)
        if count / area >= min_fill:
            rects.append(box)
            continue
        sig_x = sub.sum(axis=1)
        sig_y = sub.sum(axis=0)
        cut_x = _find_cut(sig_x)
        cut_y = _find_cut(sig_y)
        # prefer cutting the longer dimension when both are available
        if cut_x is not None and (cut_y is None
                                  or (i1 - i0) >= (j1 - j0)):
            stack.append((i0, j0, i0 + cut_x, j1))
            stack.append((i0 + cut_x, j0, i1, j1))
        elif cut_y is not None:
            stack.append((i0, j0, i1, j0 + cut_y))
            stack.append((i0, j0 + cut_y, i1, j1))
        elif (i1 - i0) >= 2 and (i1 - i0) >= (j1 - j0):
            mid = (i1 - i0) // 2
            stack.append((i0, j0, i0 + mid, j1))
            stack.append((i0 + mid, j0, i1, j1))
        elif (j1 - j0) >= 2:
            mid = (j1 - j0) // 2
            stack.append((i0, j0, i1, j0 + mid))
            stack.append((i0, j0 + mid, i1, j1))
        else:
            rects.append(box)      # single remnant
    return sorted(rects)


def _refine_fields(qc, bc, c_origin, f_rect, rx, ry, b_fine, sea_level,
                   dry_tol, area_rows=None):
    """Sample fine cell values from a coarse window via limited surfaces.

    ``qc``/``bc`` must cover the coarsened fine rectangle dilated by one
    cell; ``c_origin`` is the global coarse index of ``qc[:, 0, 0]``.
    Slopes are scaled so no fine value leaves the 3x3 coarse neighborhood
    range, and the meridional offsets are centered in the area-weighted
    sense (``area_rows``: fine-row cell areas) so the reconstruction is
    conservative on the spherical metric.  Returns ``(q_fine, h_parent)``
    with ``h_parent`` each fine cell's parent depth, for mass bookkeeping.
    """
    fi0, fj0, fi1, fj1 = f_rect
    fi = np.arange(fi0, fi1)
    fj = np.arange(fj0, fj1)
    ci = fi // rx - c_origin[0]
    cj = fj // ry - c_origin[1]
    idx = np.ix_(ci, cj)
    ox = ((fi % rx) + 0.5) / rx - 0.5
    oy = ((fj % ry) + 0.5) / ry - 0.5
    if area_rows is not None and fj.size:
        # subtract the area-weighted group mean within each parent row
        group = fj // ry
        oy = oy.astype(float).copy()
        for gval in np.unique(group):
            sel = group == gval
            w = area_rows[sel]
            oy[sel] -= np.sum(w * oy[sel]) / np.sum(w)

    hc = qc[0]
    wet = hc >= dry_tol
    with np.errstate(divide="ignore", invalid="ignore"):
        uc = np.where(wet, qc[1] / np.maximum(hc, _TINY), 0.0)
        vc = np.where(wet, qc[2] / np.maximum(hc, _TINY), 0.0)
    eta = np.where(wet, hc + bc, sea_level)

    ox_max = float(np.abs(ox).max()) if ox.size else 0.0
    oy_max = float(np.abs(oy).max()) if oy.size else 0.0

    def sample(F):
        sx = np.zeros_like(F)
        sy = np.zeros_like(F)
        sx[1:-1, :] = 0.5 * (F[2:, :] - F[:-2, :])
        sy[:, 1:-1] = 0.5 * (F[:, 2:] - F[:, :-2])
        # scale both slopes so every sample stays inside the 3x3
        # neighborhood range: no new extrema, and symmetric offsets keep
        # the cell mean intact
        Fp = np.pad(F, 1, mode="edge")
        lo = F.copy()
        hi = F.copy()
        w, h = F.shape
        for di in (0, 1, 2):
            for dj in (0, 1, 2):
                win = Fp[di:di + w, dj:dj + h]
                lo = np.minimum(lo, win)
                hi = np.maximum(hi, win)
        margin = np.minimum(hi - F, F - lo)
        reach = np.abs(sx) * ox_max + np.abs(sy) * oy_max
        with np.errstate(divide="ignore", invalid="ignore"):
            theta = np.where(reach > 0.0,
                             np.minimum(1.0, margin / np.where(
                                 reach == 0.0, 1.0, reach)), 1.0)
        sx = sx * theta
        sy = sy * theta
        return (F[idx] + sx[idx] * ox[:, None] + sy[idx] * oy[None, :])

    eta_f = sample(eta)
    u_f = sample(uc)
    v_f = sample(vc)
    h_f = np.maximum(0.0, eta_f - b_fine)
    dry_f = h_f < dry_tol
    q_f = np.stack([h_f,
                    np.where(dry_f, 0.0, h_f * u_f),
                    np.where(dry_f, 0.0, h_f * v_f)])
    return q_f, hc[idx]


class _FaceGroup:
    """Reflux bookkeeping for the coarse faces along one fine-patch edge."""

    __slots__ = ("side", "sign", "fine_patch", "coarse_patch", "c_normal",
                 "c_trans", "acc_coarse", "acc_fine")

    def __init__(self, side, sign, fine_patch, coarse_patch, c_normal,
                 c_trans):
        self.side = side              # edge of the fine patch: W/E/S/N
        self.sign = sign              # +1 if the coarse cell is W or S
        self.fine_patch = fine_patch
        self.coarse_patch = coarse_patch
        self.c_normal = c_normal      # coarse interface index (global)
        self.c_trans = np.asarray(c_trans, dtype=int)   # coarse cells along edge
        self.acc_coarse = np.zeros((3, self.c_trans.shape[0]))
        self.acc_fine = np.zeros((3, self.c_trans.shape[0]))


class FluxRegister:
    """Time-integrated coarse and fine fluxes along coarse-fine interfaces."""

    def __init__(self, hierarchy, fine_level):
        self.fine_level = fine_level
        self.groups = []
        rx, ry = hierarchy.ratios[fine_level - 1]
        geom_f = hierarchy.geoms[fine_level]
        fine_cover = np.zeros((geom_f.nx_global, geom_f.ny_global),
                              dtype=bool)
        for fp in hierarchy.levels.get(fine_level, []):
            fine_cover[fp.i0:fp.i0 + fp.nx, fp.j0:fp.j0 + fp.ny] = True

        def coarse_owner(ci, cj):
            for cp in hierarchy.levels[fine_level - 1]:
                if cp.i0 <= ci < cp.i0 + cp.nx and cp.j0 <= cj < cp.j0 + cp.ny:
                    return cp
            raise NestingError(
                f"no level-{fine_level - 1} patch holds cell ({ci}, {cj})")

        for fp in hierarchy.levels.get(fine_level, []):
            cj_range = range(fp.j0 // ry, (fp.j0 + fp.ny) // ry)
            ci_range = range(fp.i0 // rx, (fp.i0 + fp.nx) // rx)
            edges = (
                ("W", +1, fp.i0, cj_range, True),
                ("E", -1, fp.i0 + fp.nx, cj_range, True),
                ("S", +1, fp.j0, ci_range, False),
                ("N", -1, fp.j0 + fp.ny, ci_range, False),
            )
            for side, sign, g_norm, trans_range, is_x in edges:
                limit = geom_f.nx_global if is_x else geom_f.ny_global
                if g_norm == 0 or g_norm == limit:
                    continue      # physical boundary
                r_norm, r_trans = (rx, ry) if is_x else (ry, rx)
                outside = g_norm - 1 if sign > 0 else g_norm
                per_owner = {}
                for ct in trans_range:
                    # fine cells just outside this coarse face
                    t0 = ct * r_trans
                    if is_x:
                        cov = fine_cover[outside, t0:t0 + r_trans]
                    else:
                        cov = fine_cover[t0:t0 + r_trans, outside]
                    if cov.any():
                        continue  # abutting sibling patch: interior face
                    c_norm = g_norm // r_norm
                    c_outside = c_norm - 1 if sign > 0 else c_norm
                    owner = coarse_owner(*((c_outside, ct) if is_x
                                           else (ct, c_outside)))
                    per_owner.setdefault(id(owner), (owner, []))[1].append(ct)
                for owner, cells in per_owner.values():
                    self.groups.append(_FaceGroup(
                        side, sign, fp, owner, g_norm // r_norm, cells))

    def accumulate_coarse(self, dt, geom_c):
        for grp in self.groups:
            cp = grp.coarse_patch
            fx = cp.last_fluxes
            ng = cp.ng
            if grp.side in ("W", "E"):
                t = grp.c_normal - cp.i0 + ng - 1
                jpad = grp.c_trans - cp.j0 + ng
                flux = (fx.fx_left if grp.side == "W" else fx.fx_right)
                F = flux[:, t, jpad]
                L = geom_c.dy_m
                grp.acc_coarse += dt * L * F
            else:
                t = grp.c_normal - cp.j0 + ng - 1
                ipad = grp.c_trans - cp.i0 + ng
                flux = (fx.fy_left if grp.side == "S" else fx.fy_right)
                F = flux[:, ipad, t]
                # capacity form: the effective meridional face length is
                # latitude independent
                L = geom_c.phys.earth_radius * geom_c.dx * DEG2RAD
                grp.acc_coarse += dt * L * F

    def accumulate_fine(self, dt, geom_f, ratios):
        rx, ry = ratios
        for grp in self.groups:
            fp = grp.fine_patch
            fl = fp.last_fluxes
            ng = fp.ng
            if grp.side in ("W", "E"):
                t = ng - 1 if grp.side == "W" else fp.nx + ng - 1
                flux = fl.fx_right if grp.side == "W" else fl.fx_left
                jdx = ((grp.c_trans[:, None] * ry - fp.j0 + ng)
                       + np.arange(ry)[None, :])
                F = flux[:, t, :][:, jdx]          # (3, n, ry)
                L = geom_f.dy_m
                grp.acc_fine += dt * L * F.sum(axis=2)
            else:
                t = ng - 1 if grp.side == "S" else fp.ny + ng - 1
                flux = fl.fy_right if grp.side == "S" else fl.fy_left
                idx = ((grp.c_trans[:, None] * rx - fp.i0 + ng)
                       + np.arange(rx)[None, :])
                F = flux[:, :, t][:, idx]          # (3, n, rx)
                L = geom_f.phys.earth_radius * geom_f.dx * DEG2RAD
                grp.acc_fine += dt * L * F.sum(axis=2)

    def apply(self, hierarchy):
        drytol = hierarchy.phys.dry_tolerance
        components = slice(0, 3) if hierarchy.reflux_momentum else slice(0, 1)
        for grp in self.groups:
            cp = grp.coarse_patch
            ng = cp.ng
            delta = grp.sign * (grp.acc_coarse - grp.acc_fine)
            if grp.side in ("W", "E"):
                ci = grp.c_normal - 1 if grp.sign > 0 else grp.c_normal
                ii = np.full(grp.c_trans.shape, ci - cp.i0 + ng)
                jj = grp.c_trans - cp.j0 + ng
            else:
                cjn = grp.c_normal - 1 if grp.sign > 0 else grp.c_normal
                ii = grp.c_trans - cp.i0 + ng
                jj = np.full(grp.c_trans.shape, cjn - cp.j0 + ng)
            area = cp.cell_area_row[jj]
            wet = cp.h[ii, jj] >= drytol
            corr = delta / area[None, :]
            cp.q[components, ii[wet], jj[wet]] += corr[components, wet]
            if np.any(~wet):
                hierarchy.mass_change_total -= float(np.sum(delta[0, ~wet]))
            grp.acc_coarse[...] = 0.0
            grp.acc_fine[...] = 0.0


class LevelHierarchy:
    """All patches by level, with the recursion that advances them."""

    def __init__(self, domain: GeoDomain, phys: PhysConfig,
                 bathymetry: BathymetrySources,
                 criteria: RefinementCriteria | None = None,
                 ratios=(), max_levels=1,
                 friction: _sources.FrictionConfig | None = None,
                 boundary=None, regrid_interval=4, courant_target=0.9,
                 order=2, reflux_momentum=False, min_fill=0.7,
                 cluster_buffer=3, storm_track=None, storm_params=None):
        self.domain = domain
        self.phys = phys
        self.bathymetry = bathymetry
        self.criteria = criteria or RefinementCriteria()
        self.max_levels = int(max_levels)
        ratios = list(ratios)
        if len(ratios) < self.max_levels - 1:
            raise ValueError("need a refinement ratio per level transition")
        self.ratios = [None]      # 1-based: ratios[l] refines level l -> l+1
        for r in ratios:
            if np.isscalar(r):
                self.ratios.append((int(r), int(r)))
            else:
                self.ratios.append((int(r[0]), int(r[1])))
        self.friction = friction or _sources.FrictionConfig()
        self.boundary = dict(west="outflow", east="outflow",
                             south="outflow", north="outflow")
        if boundary:
            self.boundary.update(boundary)
        self.regrid_interval = int(regrid_interval)
        self.courant_target = float(courant_target)
        self.order = int(order)
        self.reflux_momentum = bool(reflux_momentum)
        self.min_fill = float(min_fill)
        self.cluster_buffer = int(cluster_buffer)
        self.storm_track = storm_track
        self.storm_params = dict(storm_params or {})

        self.geoms = [None]
        refx = refy = 1
        for lev in range(1, self.max_levels + 1):
            self.geoms.append(LevelGeometry(domain, phys, lev, refx, refy))
            if lev <= self.max_levels - 1:
                refx *= self.ratios[lev][0]
                refy *= self.ratios[lev][1]

        self.levels = {}
        self.level_time = {}
        self.level_time_old = {}
        self.level_steps = {}
        self.registers = {}
        self.mass_change_total = 0.0
        self.cell_steps = 0
        self.regrid_epoch = 0
        self.step_hook = None
        self._hook_rows = []
        self._rt_boost = {}
        self._last_regrid_step = {}
        self._initializing = False
        self._init_fn = None

    # ------------------------------------------------------------------
    # construction
    # ------------------------------------------------------------------
    def build_initial(self, t0=0.0, init_fn=None):
        """Create the level-1 patch and refine by the criteria at ``t0``.

        ``init_fn(patch)`` sets the initial state (default: lake at rest);
        it is applied to every patch created during this initial build.
        """
        self._init_fn = init_fn
        self._initializing = True
        geom = self.geoms[1]
        p = self._make_patch(1, (0, 0, geom.nx_global, geom.ny_global))
        self._prepare_patch(p)
        self._apply_init(p)
        p.t = p.t_old = t0
        self.levels = {1: [p]}
        for lev in range(1, self.max_levels + 1):
            self.level_time[lev] = t0
            self.level_time_old[lev] = t0
            self.level_steps[lev] = 0
        for _ in range(self.max_levels - 1):
            before = self.finest_level
            self.regrid(1)
            if self.finest_level == before:
                break
        self._initializing = False
        self._init_fn = None
        self._rebuild_registers(1)

    def _make_patch(self, level, rect):
        i0, j0, i1, j1 = rect
        return Patch(self.geoms[level], i0, j0, i1 - i0, j1 - j0)

    def _prepare_patch(self, p):
        sample_bathymetry(p, self.bathymetry)
        self._bc_bathymetry(p)
        _sources.manning_field(p, self.friction, self.phys.sea_level)

    def _apply_init(self, p):
        if self._init_fn is not None:
            self._init_fn(p)
        else:
            initialize_lake_at_rest(p, self.phys.sea_level)
        p.q_old = p.q.copy()

    # ------------------------------------------------------------------
    # convenience queries
    # ------------------------------------------------------------------
    @property
    def finest_level(self):
        return max((lev for lev, ps in self.levels.items() if ps), default=0)

    def total_mass(self):
        """Composite water volume: level-1 sum (valid right after sync)."""
        return sum(p.interior_mass() for p in self.levels[1])

    def cell_counts(self):
        return {lev: (len(ps), sum(p.nx * p.ny for p in ps))
                for lev, ps in self.levels.items() if ps}

    def finest_patch_at(self, lon, lat):
        """Finest (level, patch) whose interior contains the point."""
        for lev in range(self.finest_level, 0, -1):
            geom = self.geoms[lev]
            gi = int((lon - self.domain.lon_min) / geom.dx)
            gj = int((lat - self.domain.lat_min) / geom.dy)
            for p in self.levels.get(lev, []):
                if p.i0 <= gi < p.i0 + p.nx and p.j0 <= gj < p.j0 + p.ny:
                    return lev, p
        return None

    def _storm_state(self, t):
        if self.storm_track is None:
            return None
        return _storm.interpolate_track(
            self.storm_track, t, earth_radius=self.phys.earth_radius,
            **self.storm_params)

    # ------------------------------------------------------------------
    # advancing
    # ------------------------------------------------------------------
    def compute_initial_dt(self):
        dt = min(_solver.compute_stable_dt(p, self.courant_target)
                 for p in self.levels[1])
        if not np.isfinite(dt):
            raise RuntimeError("cannot choose a time step: domain is dry")
        return dt

    def advance(self, dt=None, max_retries=12):
        """One coarse step (with sub-cycling); returns ``(dt_used, rows)``.

        On a CFL rejection the whole coarse step is rolled back and retried
        with a halved coarse dt (failure at level 1) or a doubled temporal
        refinement ratio at the failing level.
        """
        if dt is None:
            dt = self.compute_initial_dt()
        snapshot = self._snapshot()
        for _ in range(max_retries):
            self._hook_rows = []
            try:
                self._advance_level(1, dt)
            except _LevelCFL as err:
                self._restore(snapshot)
                if err.level == 1:
                    dt *= 0.5
                else:
                    self._rt_boost[err.level] = 2 * self._rt_boost.get(
                        err.level, 1)
                continue
            self._rt_boost.clear()
            return dt, self._hook_rows
        raise RuntimeError("coarse step rejected repeatedly by CFL control")

    def choose_time_ratio(self, level, dt_parent):
        """Smallest sub-step count satisfying the fine level's CFL bound."""
        dt_stable = min((_solver.compute_stable_dt(p, self.courant_target)
                         for p in self.levels.get(level, [])),
                        default=np.inf)
        if not np.isfinite(dt_stable):
            k = 1
        else:
            k = max(1, int(math.ceil(dt_parent / dt_stable - 1e-9)))
        return k * self._rt_boost.get(level, 1)

    def _advance_level(self, lev, dt):
        t = self.level_time[lev]
        if (lev < self.max_levels and self.level_steps[lev] > 0
                and self.level_steps[lev] % self.regrid_interval == 0
                and self._last_regrid_step.get(lev) != self.level_steps[lev]):
            self._last_regrid_step[lev] = self.level_steps[lev]
            self.regrid(lev)

        patches = self.levels.get(lev, [])
        for p in patches:
            self.fill_ghosts(p, t)
        for p in patches:
            p.q_old = p.q.copy()
            p.t_old = t
        storm_state = self._storm_state(t)
        capture = self.max_levels > 1
        for p in patches:
            try:
                report, fluxes = _solver.step_hyperbolic(
                    p, dt, order=self.order, capture_fluxes=capture,
                    bc_refresh=self._bc_edges)
            except CFLViolation as err:
                raise _LevelCFL(lev, err.courant) from None
            p.last_fluxes = fluxes
            p.t = t + dt
            self.mass_change_total += report.clamped_volume
            _solver.apply_source_split(p, dt, storm_state, self.phys,
                                       friction_config=self.friction)
            self.cell_steps += p.nx * p.ny
        self.level_time_old[lev] = t
        self.level_time[lev] = t + dt
        self.level_steps[lev] += 1
        if self.step_hook is not None:
            rows = self.step_hook(self, lev, t + dt)
            if rows:
                self._hook_rows.extend(rows)

        if lev + 1 in self.registers:
            self.registers[lev + 1].accumulate_coarse(dt, self.geoms[lev])
        if lev in self.registers:
            self.registers[lev].accumulate_fine(dt, self.geoms[lev],
                                                self.ratios[lev - 1])

        if self.levels.get(lev + 1):
            r_t = self.choose_time_ratio(lev + 1, dt)
            dt_f = dt / r_t
            for _ in range(r_t):
                self._advance_level(lev + 1, dt_f)
            self._sync_from_children(lev)
            if lev + 1 in self.registers:
                self.registers[lev + 1].apply(self)

    # ------------------------------------------------------------------
    # ghost filling
    # ------------------------------------------------------------------
    def fill_ghosts(self, patch: Patch, t):
        """Priority fill: parent space-time interp, sibling copies, BCs."""
        ng = patch.ng
        lev = patch.level
        geom = patch.geom
        covered = np.zeros((patch.nx + 2 * ng, patch.ny + 2 * ng), dtype=bool)
        covered[ng:ng + patch.nx, ng:ng + patch.ny] = True

        pad_rect = (patch.i0 - ng, patch.j0 - ng,
                    patch.i0 + patch.nx + ng, patch.j0 + patch.ny + ng)
        strips = (
            (pad_rect[0], pad_rect[1], patch.i0, pad_rect[3]),          # W
            (patch.i0 + patch.nx, pad_rect[1], pad_rect[2], pad_rect[3]),  # E
            (patch.i0, pad_rect[1], patch.i0 + patch.nx, patch.j0),     # S
            (patch.i0, patch.j0 + patch.ny, patch.i0 + patch.nx,
             pad_rect[3]),                                              # N
        )
        domain_rect = (0, 0, geom.nx_global, geom.ny_global)

        if lev > 1:
            t0 = self.level_time_old[lev - 1]
            t1 = self.level_time[lev - 1]
            alpha = 1.0 if t1 <= t0 else (t - t0) / (t1 - t0)
            alpha = min(max(alpha, 0.0), 1.0)
            rx, ry = self.ratios[lev - 1]
            for strip in strips:
                clipped = _intersect(strip, domain_rect)
                if clipped is None:
                    continue
                self._fill_strip_from_parent(patch, clipped, alpha, rx, ry)
                self._mark(covered, patch, clipped)

        for sib in self.levels.get(lev, []):
            if sib is patch:
                continue
            inter = _intersect(pad_rect, sib.rect)
            if inter is None:
                continue
            dst = self._local_slices(patch, inter)
            src = self._local_slices(sib, inter)
            patch.q[:, dst[0], dst[1]] = sib.q[:, src[0], src[1]]
            covered[dst] = True

        self._apply_physical_bcs(patch)
        out = self._out_of_domain_mask(patch)
        covered |= out
        if not covered.all():
            raise NestingError(
                f"ghost cells of level-{lev} patch at {patch.rect} lack "
                "both parent coverage and a physical boundary")

    @staticmethod
    def _local_slices(patch, rect):
        ng = patch.ng
        return (slice(rect[0] - patch.i0 + ng, rect[2] - patch.i0 + ng),
                slice(rect[1] - patch.j0 + ng, rect[3] - patch.j0 + ng))

    @staticmethod
    def _mark(covered, patch, rect):
        sl = LevelHierarchy._local_slices(patch, rect)
        covered[sl] = True

    def _out_of_domain_mask(self, patch):
        geom = patch.geom
        gi = np.arange(patch.i0 - patch.ng, patch.i0 + patch.nx + patch.ng)
        gj = np.arange(patch.j0 - patch.ng, patch.j0 + patch.ny + patch.ng)
        out_i = (gi < 0) | (gi >= geom.nx_global)
        out_j = (gj < 0) | (gj >= geom.ny_global)
        return out_i[:, None] | out_j[None, :]

    def _fill_strip_from_parent(self, patch, f_rect, alpha, rx, ry):
        qc, bc, crect = self._parent_window(patch.level, f_rect, alpha)
        dst = self._local_slices(patch, f_rect)
        b_fine = patch.b[dst]
        area_rows = patch.cell_area_row[dst[1]]
        q_f, _ = _refine_fields(qc, bc, crect[:2], f_rect, rx, ry, b_fine,
                                self.phys.sea_level, self.phys.dry_tolerance,
                                area_rows=area_rows)
        patch.q[:, dst[0], dst[1]] = q_f

    def _parent_window(self, level, f_rect, alpha=None):
        """Parent data window for refining ``f_rect`` at ``level``.

        Every parent cell of the fine rectangle must be covered (proper
        nesting); the one-cell slope halo may fall outside the parent union
        and is then filled by nearest-neighbor replication.
        """
        rx, ry = self.ratios[level - 1]
        crect = (f_rect[0] // rx - 1, f_rect[1] // ry - 1,
                 -((-f_rect[2]) // rx) + 1, -((-f_rect[3]) // ry) + 1)
        parent_geom = self.geoms[level - 1]
        crect = _intersect(crect, (0, 0, parent_geom.nx_global,
                                   parent_geom.ny_global))
        qc, bc, cov = self._collect_level(level - 1, crect, alpha)
        need = np.zeros(cov.shape, dtype=bool)
        need[f_rect[0] // rx - crect[0]:-((-f_rect[2]) // rx) - crect[0],
             f_rect[1] // ry - crect[1]:-((-f_rect[3]) // ry) - crect[1]] = True
        if not np.all(cov | ~need):
            raise NestingError(
                f"fine rectangle {f_rect} at level {level} is not properly "
                "nested in the parent level")
        if not cov.all():
            _replicate_uncovered(qc, bc, cov)
        return qc, bc, crect

    def _collect_level(self, lev, rect, alpha=None):
        """Assemble state and bathymetry over ``rect`` from level patches."""
        w, h = rect[2] - rect[0], rect[3] - rect[1]
        q = np.zeros((3, w, h))
        b = np.zeros((w, h))
        covered = np.zeros((w, h), dtype=bool)
        for p in self.levels.get(lev, []):
            inter = _intersect(rect, p.rect)
            if inter is None:
                continue
            src = self._local_slices(p, inter)
            dst = (slice(inter[0] - rect[0], inter[2] - rect[0]),
                   slice(inter[1] - rect[1], inter[3] - rect[1]))
            if alpha is None or p.q_old is None or alpha >= 1.0:
                q[:, dst[0], dst[1]] = p.q[:, src[0], src[1]]
            else:
                q[:, dst[0], dst[1]] = ((1.0 - alpha) * p.q_old[:, src[0], src[1]]
                                        + alpha * p.q[:, src[0], src[1]])
            b[dst] = p.b[src]
            covered[dst] = True
        return q, b, covered

    # ------------------------------------------------------------------
    # physical boundary conditions
    # ------------------------------------------------------------------
    def _apply_physical_bcs(self, patch):
        self._bc_edges(patch, patch.q)

    def _bc_edges(self, patch, q):
        ng = patch.ng
        geom = patch.geom
        nx, ny = patch.nx, patch.ny
        if patch.i0 == 0:
            kind = self.boundary["west"]
            for k in range(ng):
                if kind == "wall":
                    q[:, ng - 1 - k, :] = q[:, ng + k, :]
                    q[1, ng - 1 - k, :] *= -1.0
                else:
                    q[:, k, :] = q[:, ng, :]
        if patch.i0 + nx == geom.nx_global:
            kind = self.boundary["east"]
            edge = ng + nx - 1
            for k in range(ng):
                if kind == "wall":
                    q[:, edge + 1 + k, :] = q[:, edge - k, :]
                    q[1, edge + 1 + k, :] *= -1.0
                else:
                    q[:, edge + 1 + k, :] = q[:, edge, :]
        if patch.j0 == 0:
            kind = self.boundary["south"]
            for k in range(ng):
                if kind == "wall":
                    q[:, :, ng - 1 - k] = q[:, :, ng + k]
                    q[2, :, ng - 1 - k] *= -1.0
                else:
                    q[:, :, k] = q[:, :, ng]
        if patch.j0 + ny == geom.ny_global:
            kind = self.boundary["north"]
            edge = ng + ny - 1
            for k in range(ng):
                if kind == "wall":
                    q[:, :, edge + 1 + k] = q[:, :, edge - k]
                    q[2, :, edge + 1 + k] *= -1.0
                else:
                    q[:, :, edge + 1 + k] = q[:, :, edge]

    def _bc_bathymetry(self, patch):
        ng = patch.ng
        geom = patch.geom
        b = patch.b
        nx, ny = patch.nx, patch.ny
        if patch.i0 == 0:
            for k in range(ng):
                b[ng - 1 - k, :] = (b[ng + k, :]
                                    if self.boundary["west"] == "wall"
                                    else b[ng, :])
        if patch.i0 + nx == geom.nx_global:
            edge = ng + nx - 1
            for k in range(ng):
                b[edge + 1 + k, :] = (b[edge - k, :]
                                      if self.boundary["east"] == "wall"
                                      else b[edge, :])
        if patch.j0 == 0:
            for k in range(ng):
                b[:, ng - 1 - k] = (b[:, ng + k]
                                    if self.boundary["south"] == "wall"
                                    else b[:, ng])
        if patch.j0 + ny == geom.ny_global:
            edge = ng + ny - 1
            for k in range(ng):
                b[:, edge + 1 + k] = (b[:, edge - k]
                                      if self.boundary["north"] == "wall"
                                      else b[:, edge])

    # ------------------------------------------------------------------
    # flagging and regridding
    # ------------------------------------------------------------------
    def flag_cells(self, patch: Patch, storm_state=None):
        """Interior refinement flags for one patch (union of criteria)."""
        crit = self.criteria
        lev = patch.level
        phys = self.phys
        h = patch.interior(patch.h)
        hu = patch.interior(patch.hu)
        hv = patch.interior(patch.hv)
        b = patch.interior(patch.b)
        wet = h >= phys.dry_tolerance
        eta = np.where(wet, h + b, phys.sea_level)
        flags = np.zeros(h.shape, dtype=bool)

        if crit.wave_tolerance is not None:
            flags |= wet & (np.abs(eta - phys.sea_level)
                            > crit.wave_tolerance)
        S = crit.speed_tolerances
        if len(S) > lev:
            with np.errstate(divide="ignore", invalid="ignore"):
                speed = np.where(wet, np.hypot(hu, hv)
                                 / np.maximum(h, _TINY), 0.0)
            flags |= wet & (speed > S[lev])
        if storm_state is not None and (len(crit.eye_radii) >= lev
                                        or len(crit.wind_tolerances) >= lev):
            lon = patch.lon_centers(padded=False)[:, None]
            lat = patch.lat_centers(padded=False)[None, :]
            mean_lat = 0.5 * (lat + storm_state.eye_lat)
            mx = phys.earth_radius * np.cos(mean_lat * DEG2RAD) * DEG2RAD
            my = phys.earth_radius * DEG2RAD
            dist = np.hypot((lon - storm_state.eye_lon) * mx,
                            (lat - storm_state.eye_lat) * my)
            if len(crit.eye_radii) >= lev:
                flags |= dist < crit.eye_radii[lev - 1]
            if len(crit.wind_tolerances) >= lev:
                wind_x, wind_y, _ = _storm.evaluate_fields(patch, storm_state)
                wmag = np.hypot(patch.interior(wind_x),
                                patch.interior(wind_y))
                flags |= wmag > crit.wind_tolerances[lev - 1]

        if crit.max_refinement_depth is not None:
            initial_depth = phys.sea_level - b
            flags &= initial_depth <= crit.max_refinement_depth

        if crit.regions:
            t = self.level_time.get(lev, 0.0)
            lon = patch.lon_centers(padded=False)[:, None]
            lat = patch.lat_centers(padded=False)[None, :]
            for region in crit.regions:
                if not region.active(t):
                    continue
                inside = region.mask(lon, lat)
                if region.min_level > lev:
                    flags |= inside
            for region in crit.regions:
                if not region.active(t):
                    continue
                if region.max_level is not None and region.max_level <= lev:
                    flags &= ~region.mask(lon, lat)
        return flags

    def regrid(self, base_level):
        """Rebuild levels ``base_level + 1 .. finest`` from fresh flags."""
        t = self.level_time[base_level]
        storm_state = self._storm_state(t)
        top = min(max(self.finest_level, base_level), self.max_levels - 1)
        new_rects = {}
        for lev in range(top, base_level - 1, -1):
            geom = self.geoms[lev]
            mask = np.zeros((geom.nx_global, geom.ny_global), dtype=bool)
            for p in self.levels.get(lev, []):
                mask[p.i0:p.i0 + p.nx, p.j0:p.j0 + p.ny] |= self.flag_cells(
                    p, storm_state)
            # keep room for the (already chosen) grandchild patches
            for rect in new_rects.get(lev + 2, []):
                rx2, ry2 = self.ratios[lev + 1]
                rx1, ry1 = self.ratios[lev]
                fx, fy = rx1 * rx2, ry1 * ry2
                pi0 = max(rect[0] // fx - 1, 0)
                pj0 = max(rect[1] // fy - 1, 0)
                pi1 = min(-((-rect[2]) // fx) + 1, geom.nx_global)
                pj1 = min(-((-rect[3]) // fy) + 1, geom.ny_global)
                mask[pi0:pi1, pj0:pj1] = True
            mask = _dilate(mask, self.cluster_buffer)
            if lev == base_level:
                # new child patches must nest one cell inside this level
                allowed = np.zeros_like(mask)
                for p in self.levels.get(lev, []):
                    allowed[p.i0:p.i0 + p.nx, p.j0:p.j0 + p.ny] = True
                mask &= _erode_in_domain(allowed)
            rects = cluster_flags(mask, self.min_fill, buffer=0)
            rx, ry = self.ratios[lev]
            new_rects[lev + 1] = [(r[0] * rx, r[1] * ry, r[2] * rx,
                                   r[3] * ry) for r in rects]

        for lev in range(base_level + 1, self.max_levels + 1):
            rects = new_rects.get(lev, [])
            old_patches = self.levels.get(lev, [])
            if not rects:
                for deeper in range(lev, self.max_levels + 1):
                    if self.levels.get(deeper):
                        self._log_abandoned(self.levels[deeper], [])
                    self.levels[deeper] = []
                break
            self._log_abandoned(old_patches, rects)
            new_patches = []
            for rect in rects:
                p = self._make_patch(lev, rect)
                self._prepare_patch(p)
                self._init_patch_state(p, old_patches, t)
                new_patches.append(p)
            self.levels[lev] = new_patches
            self.level_time[lev] = t
            self.level_time_old[lev] = t
        self._rebuild_registers(base_level)
        self.regrid_epoch += 1

    def _init_patch_state(self, p: Patch, old_patches, t):
        """New-patch data: copy same-resolution history, interpolate holes."""
        ng = p.ng
        if self._initializing:
            # initial construction: apply the initial condition directly at
            # this resolution (mass bookkeeping starts after the build)
            self._apply_init(p)
            p.t = p.t_old = t
            return
        rx, ry = self.ratios[p.level - 1]
        rect = p.rect
        qc, bc, crect = self._parent_window(p.level, rect)
        isl = slice(ng, ng + p.nx)
        jsl = slice(ng, ng + p.ny)
        q_f, h_parent = _refine_fields(qc, bc, crect[:2], rect, rx, ry,
                                       p.b[isl, jsl], self.phys.sea_level,
                                       self.phys.dry_tolerance,
                                       area_rows=p.cell_area_row[jsl])
        p.q[:, isl, jsl] = q_f

        copied = np.zeros((p.nx, p.ny), dtype=bool)
        for op in old_patches:
            inter = _intersect(rect, op.rect)
            if inter is None:
                continue
            dst = self._local_slices(p, inter)
            src = self._local_slices(op, inter)
            p.q[:, dst[0], dst[1]] = op.q[:, src[0], src[1]]
            copied[dst[0].start - ng:dst[0].stop - ng,
                   dst[1].start - ng:dst[1].stop - ng] = True

        holes = ~copied
        if np.any(holes):
            areas = p.cell_areas()
            delta = float(np.sum(
                areas[holes] * (p.q[0, isl, jsl][holes] - h_parent[holes])))
            self.mass_change_total += delta
        p.t = p.t_old = t
        p.q_old = p.q.copy()

    def _log_abandoned(self, old_patches, new_rects):
        """Account for fine cells handed back to the coarse representation.

        Where refinement retreats, the composite solution switches from the
        fine data to the parent's cell value; the water-volume difference
        joins the cumulative mass-change diagnostic.
        """
        if self._initializing:
            return
        for op in old_patches:
            ng = op.ng
            kept = np.zeros((op.nx, op.ny), dtype=bool)
            for rect in new_rects:
                inter = _intersect(op.rect, rect)
                if inter is None:
                    continue
                kept[inter[0] - op.i0:inter[2] - op.i0,
                     inter[1] - op.j0:inter[3] - op.j0] = True
            if kept.all():
                continue
            rx, ry = self.ratios[op.level - 1]
            crect = (op.i0 // rx, op.j0 // ry,
                     -((-op.i0 - op.nx) // rx), -((-op.j0 - op.ny) // ry))
            qc, _, cov = self._collect_level(op.level - 1, crect)
            fi = np.arange(op.i0, op.i0 + op.nx)
            fj = np.arange(op.j0, op.j0 + op.ny)
            h_par = qc[0][np.ix_(fi // rx - crect[0], fj // ry - crect[1])]
            h_par = np.where(cov[np.ix_(fi // rx - crect[0],
                                        fj // ry - crect[1])], h_par, 0.0)
            areas = op.cell_areas()
            h_f = op.interior(op.h)
            lost = ~kept
            self.mass_change_total += float(
                np.sum(areas[lost] * (h_par[lost] - h_f[lost])))

    def _rebuild_registers(self, base_level):
        for lev in range(base_level + 1, self.max_levels + 1):
            if self.levels.get(lev):
                self.registers[lev] = FluxRegister(self, lev)
            else:
                self.registers.pop(lev, None)

    # ------------------------------------------------------------------
    # coarse-fine synchronization
    # ------------------------------------------------------------------
    def _sync_from_children(self, lev):
        """Replace covered coarse cells with conservative child averages."""
        rx, ry = self.ratios[lev]
        drytol = self.phys.dry_tolerance
        for cp in self.levels[lev]:
            for fp in self.levels[lev + 1]:
                crect = (fp.i0 // rx, fp.j0 // ry,
                         (fp.i0 + fp.nx) // rx, (fp.j0 + fp.ny) // ry)
                inter = _intersect(cp.rect, crect)
                if inter is None:
                    continue
                self._coarsen_block(cp, fp, inter, rx, ry, drytol)

    def _coarsen_block(self, cp, fp, crect, rx, ry, drytol):
        ng = fp.ng
        fi0 = crect[0] * rx - fp.i0 + ng
        fj0 = crect[1] * ry - fp.j0 + ng
        ncx = crect[2] - crect[0]
        ncy = crect[3] - crect[1]
        fsl = (slice(fi0, fi0 + ncx * rx), slice(fj0, fj0 + ncy * ry))
        h_f = fp.h[fsl]
        hu_f = fp.hu[fsl]
        hv_f = fp.hv[fsl]
        b_f = fp.b[fsl]
        a_row = fp.cell_area_row[fsl[1]]
        A_f = np.broadcast_to(a_row[None, :], h_f.shape)

        def blocks(arr):
            return arr.reshape(ncx, rx, ncy, ry)

        wet = h_f >= drytol
        A_blk = blocks(np.ascontiguousarray(A_f)).sum(axis=(1, 3))
        wetA = blocks(A_f * wet).sum(axis=(1, 3))

        csl = self._local_slices(cp, crect)
        A_c = cp.cell_areas(padded=True)[csl]
        b_c = cp.b[csl]

        all_wet = wetA == A_blk
        any_wet = wetA > 0.0

        # conserve the area-weighted surface: identical to conserving h when
        # the bathymetry is refinement-consistent, but still water over an
        # inconsistently sampled bottom stays bitwise at rest
        h_cons = np.maximum(
            blocks(A_f * (h_f + b_f)).sum(axis=(1, 3)) / A_c - b_c, 0.0)
        hu_cons = blocks(A_f * hu_f).sum(axis=(1, 3)) / A_c
        hv_cons = blocks(A_f * hv_f).sum(axis=(1, 3)) / A_c

        with np.errstate(divide="ignore", invalid="ignore"):
            eta_f = np.where(wet, h_f + b_f, 0.0)
            u_f = np.where(wet, hu_f / np.maximum(h_f, _TINY), 0.0)
            v_f = np.where(wet, hv_f / np.maximum(h_f, _TINY), 0.0)
            wet_den = np.where(any_wet, wetA, 1.0)
            eta_c = blocks(A_f * eta_f).sum(axis=(1, 3)) / wet_den
            u_c = blocks(A_f * u_f * wet).sum(axis=(1, 3)) / wet_den
            v_c = blocks(A_f * v_f * wet).sum(axis=(1, 3)) / wet_den
        h_mix = np.maximum(0.0, eta_c - b_c)
        dry_mix = h_mix < drytol
        hu_mix = np.where(dry_mix, 0.0, h_mix * u_c)
        hv_mix = np.where(dry_mix, 0.0, h_mix * v_c)

        h_new = np.where(all_wet, h_cons, np.where(any_wet, h_mix, 0.0))
        hu_new = np.where(all_wet, hu_cons, np.where(any_wet, hu_mix, 0.0))
        hv_new = np.where(all_wet, hv_cons, np.where(any_wet, hv_mix, 0.0))

        cp.h[csl] = h_new
        cp.hu[csl] = hu_new
        cp.hv[csl] = hv_new

    # ------------------------------------------------------------------
    # snapshot / rollback for CFL retries
    # ------------------------------------------------------------------
    def _snapshot(self):
        patches = {lev: [(p, p.q.copy(),
                          None if p.q_old is None else p.q_old.copy(),
                          p.t, p.t_old, p.step_count)
                         for p in ps]
                   for lev, ps in self.levels.items()}
        regs = {lev: [(g.acc_coarse.copy(), g.acc_fine.copy())
                      for g in reg.groups]
                for lev, reg in self.registers.items()}
        return dict(patches=patches,
                    levels={lev: list(ps) for lev, ps in self.levels.items()},
                    time=dict(self.level_time),
                    time_old=dict(self.level_time_old),
                    steps=dict(self.level_steps),
                    regs=regs,
                    registers=dict(self.registers),
                    mass_change=self.mass_change_total,
                    cell_steps=self.cell_steps,
                    last_regrid=dict(self._last_regrid_step),
                    epoch=self.regrid_epoch)

    def _restore(self, snap):
        self.levels = {lev: list(ps) for lev, ps in snap["levels"].items()}
        for lev, entries in snap["patches"].items():
            for p, q, q_old, t, t_old, sc in entries:
                p.q[...] = q
                p.q_old = q_old
                p.t = t
                p.t_old = t_old
                p.step_count = sc
        self.registers = dict(snap["registers"])
        for lev, accs in snap["regs"].items():
            for grp, (ac, af) in zip(self.registers[lev].groups, accs):
                grp.acc_coarse[...] = ac
                grp.acc_fine[...] = af
        self.level_time = dict(snap["time"])
        self.level_time_old = dict(snap["time_old"])
        self.level_steps = dict(snap["steps"])
        self.mass_change_total = snap["mass_change"]
        self.cell_steps = snap["cell_steps"]
        self._last_regrid_step = dict(snap["last_regrid"])
        self.regrid_epoch = snap["epoch"]
