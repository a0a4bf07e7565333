"""Geographic domain, patch geometry, cell state storage and bathymetry sampling.

Everything is laid out on logically rectangular longitude-latitude grids.
Coordinates are kept in degrees; metric lengths (for wave speeds, source
terms, CFL) are obtained locally through :func:`cell_size_meters`.  Cell
areas use the exact spherical form ``R^2 * dlon * (sin(lat_n) - sin(lat_s))``
so that mass sums telescope across refinement levels.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

DEG2RAD = np.pi / 180.0

#: ghost frame width required by the second-order stencil
NGHOST = 2


class ConfigError(ValueError):
    """Raised for invalid domain, raster or run-configuration input."""


@dataclass
class GeoDomain:
    """Rectangular lon-lat simulation domain with its coarse cell counts."""

    lon_min: float
    lon_max: float
    lat_min: float
    lat_max: float
    n_cells_x: int
    n_cells_y: int

    def __post_init__(self):
        if not self.lon_min < self.lon_max:
            raise ConfigError("domain: lon_min must be < lon_max")
        if not self.lat_min < self.lat_max:
            raise ConfigError("domain: lat_min must be < lat_max")
        if self.n_cells_x < 1 or self.n_cells_y < 1:
            raise ConfigError("domain: cell counts must be >= 1")
        if max(abs(self.lat_min), abs(self.lat_max)) >= 90.0:
            raise ConfigError("domain: latitudes must satisfy |lat| < 90")

    @property
    def dx_coarse(self) -> float:
        return (self.lon_max - self.lon_min) / self.n_cells_x

    @property
    def dy_coarse(self) -> float:
        return (self.lat_max - self.lat_min) / self.n_cells_y

    def contains(self, lon, lat) -> bool:
        return (self.lon_min <= lon <= self.lon_max
                and self.lat_min <= lat <= self.lat_max)


@dataclass
class PhysConfig:
    """Physical constants shared by every part of a run."""

    g: float = 9.81
    rho: float = 1025.0
    rho_air: float = 1.15
    omega: float = 2.0 * np.pi / 8.61642e4
    earth_radius: float = 6.367e6
    dry_tolerance: float = 1e-3
    sea_level: float = 0.0

    def __post_init__(self):
        for name in ("g", "rho", "rho_air", "omega", "earth_radius",
                     "dry_tolerance"):
            if getattr(self, name) <= 0.0:
                raise ConfigError(f"physics: {name} must be positive")


def cell_size_meters(lat, dlon, dlat, earth_radius=6.367e6):
    """Metric size of a ``dlon`` x ``dlat`` (degrees) cell centered at ``lat``.

    Returns ``(dx_m, dy_m)``.  The zonal size shrinks with ``cos(lat)``;
    the meridional size is latitude independent on the sphere.
    """
    dy_m = earth_radius * dlat * DEG2RAD
    dx_m = earth_radius * np.cos(np.asarray(lat) * DEG2RAD) * dlon * DEG2RAD
    return dx_m, dy_m


class StateVector:
    """Conserved cell state: depth ``h`` and momenta ``hu``, ``hv``.

    Stored as one ``(3, nx, ny)`` float array so sweeps and the Riemann
    solver can slice components without copies.
    """

    def __init__(self, shape):
        self.q = np.zeros((3,) + tuple(shape))

    @property
    def h(self):
        return self.q[0]

    @property
    def hu(self):
        return self.q[1]

    @property
    def hv(self):
        return self.q[2]

    def check_admissible(self, dry_tolerance):
        """Depths must be nonnegative and dry cells must carry no momentum."""
        if np.any(self.q[0] < 0.0):
            raise ValueError("negative water depth encountered")
        dry = self.q[0] < dry_tolerance
        if np.any(self.q[1][dry] != 0.0) or np.any(self.q[2][dry] != 0.0):
            raise ValueError("dry cell with nonzero momentum")


class LevelGeometry:
    """Grid spacing and metric helpers for one refinement level."""

    def __init__(self, domain: GeoDomain, phys: PhysConfig, level: int,
                 refine_x: int = 1, refine_y: int = 1):
        # refine_x/y are the cumulative products of the spatial ratios
        # from level 1 down to this level.
        self.domain = domain
        self.phys = phys
        self.level = level
        self.refine_x = refine_x
        self.refine_y = refine_y
        self.nx_global = domain.n_cells_x * refine_x
        self.ny_global = domain.n_cells_y * refine_y
        self.dx = (domain.lon_max - domain.lon_min) / self.nx_global
        self.dy = (domain.lat_max - domain.lat_min) / self.ny_global
        self.dy_m = phys.earth_radius * self.dy * DEG2RAD

    def lon_center(self, i):
        return self.domain.lon_min + (np.asarray(i) + 0.5) * self.dx

    def lat_center(self, j):
        return self.domain.lat_min + (np.asarray(j) + 0.5) * self.dy

    def lat_edge(self, j):
        return self.domain.lat_min + np.asarray(j) * self.dy

    def row_metrics(self, j0, ny):
        """Per-row metric arrays for rows ``j0 .. j0+ny-1`` (global indices).

        Returns ``(dx_eff, dy_eff, area, cos_edge)`` where the first three
        have length ``ny`` and ``cos_edge`` has length ``ny + 1`` (cell
        edges).  ``dx_eff``/``dy_eff`` are the effective update widths and
        ``area`` the exact spherical cell area.
        """
        R = self.phys.earth_radius
        j = np.arange(j0, j0 + ny + 1)
        edge_rad = self.lat_edge(j) * DEG2RAD
        sin_e = np.sin(edge_rad)
        dsin = np.diff(sin_e)
        dy_eff = R * dsin
        area = (R * self.dx * DEG2RAD) * dy_eff
        dx_eff = dy_eff * (self.dx / self.dy)
        cos_edge = np.cos(edge_rad)
        return dx_eff, dy_eff, area, cos_edge


class Patch:
    """One rectangular grid at one refinement level, with a 2-cell ghost frame.

    ``i0, j0`` index the first interior cell on the level's global index
    space; arrays are padded by ``NGHOST`` on every side.
    """

    def __init__(self, geometry: LevelGeometry, i0: int, j0: int,
                 nx: int, ny: int):
        if nx < 1 or ny < 1:
            raise ValueError("patch interior must be non-empty")
        self.geom = geometry
        self.level = geometry.level
        self.i0 = int(i0)
        self.j0 = int(j0)
        self.nx = int(nx)
        self.ny = int(ny)
        self.ng = NGHOST
        shape = (nx + 2 * NGHOST, ny + 2 * NGHOST)
        self.state = StateVector(shape)
        self.b = np.zeros(shape)
        self.n_manning = np.zeros(shape)
        self.q_old = None      # state snapshot at the start of the last step
        self.t = 0.0
        self.t_old = 0.0
        self.step_count = 0
        self.last_fluxes = None
        # metric rows over the padded extent (ghost rows included)
        gy0 = j0 - NGHOST
        dx_eff, dy_eff, area, cos_edge = geometry.row_metrics(
            gy0, ny + 2 * NGHOST)
        self.dx_eff = dx_eff
        self.dy_eff = dy_eff
        self.cell_area_row = area
        self.cos_edge = cos_edge

    # -- array views ---------------------------------------------------
    @property
    def q(self):
        return self.state.q

    @property
    def h(self):
        return self.state.q[0]

    @property
    def hu(self):
        return self.state.q[1]

    @property
    def hv(self):
        return self.state.q[2]

    def interior(self, arr):
        """Interior view of a padded array (ghost frame stripped)."""
        ng = self.ng
        return arr[..., ng:ng + self.nx, ng:ng + self.ny]

    @property
    def dx(self):
        return self.geom.dx

    @property
    def dy(self):
        return self.geom.dy

    @property
    def rect(self):
        """Interior rectangle ``(i0, j0, i1, j1)``, end-exclusive."""
        return (self.i0, self.j0, self.i0 + self.nx, self.j0 + self.ny)

    # -- coordinates ---------------------------------------------------
    def lon_centers(self, padded=True):
        if padded:
            idx = np.arange(self.i0 - self.ng, self.i0 + self.nx + self.ng)
        else:
            idx = np.arange(self.i0, self.i0 + self.nx)
        return self.geom.lon_center(idx)

    def lat_centers(self, padded=True):
        if padded:
            idx = np.arange(self.j0 - self.ng, self.j0 + self.ny + self.ng)
        else:
            idx = np.arange(self.j0, self.j0 + self.ny)
        return self.geom.lat_center(idx)

    def cell_areas(self, padded=False):
        """2D array of cell areas (m^2), broadcast from the row metric."""
        if padded:
            narrow = self.cell_area_row
            width = self.nx + 2 * self.ng
        else:
            narrow = self.cell_area_row[self.ng:self.ng + self.ny]
            width = self.nx
        return np.broadcast_to(narrow[None, :], (width, narrow.shape[0]))

    def interior_mass(self):
        """Area-weighted water volume of the interior (m^3)."""
        return float(np.sum(self.interior(self.h) * self.cell_areas()))


def surface_elevation(patch: Patch, i=None, j=None):
    """Sea surface eta = h + b; dry cells report the ambient sea level.

    With ``i``/``j`` omitted the full padded array is returned.  The dry
    convention keeps dry land from registering as a wave perturbation.
    """
    phys = patch.geom.phys
    h = patch.h if i is None else patch.h[i, j]
    b = patch.b if i is None else patch.b[i, j]
    eta = h + b
    return np.where(h < phys.dry_tolerance, phys.sea_level, eta)


def initialize_lake_at_rest(patch: Patch, sea_level=None):
    """Fill a patch with still water: ``h = max(0, sea_level - b)``, no flow."""
    if sea_level is None:
        sea_level = patch.geom.phys.sea_level
    patch.h[...] = np.maximum(0.0, sea_level - patch.b)
    patch.hu[...] = 0.0
    patch.hv[...] = 0.0


# ---------------------------------------------------------------------------
# Bathymetry rasters
# ---------------------------------------------------------------------------

class RasterGrid:
    """Node-registered elevation raster evaluated by bilinear interpolation.

    ``values[k, m]`` is the node at ``(x0 + k*cellsize, y0 + m*cellsize)``.
    """

    def __init__(self, x0, y0, cellsize, values, nodata=None, name="raster"):
        values = np.asarray(values, dtype=float)
        if values.ndim != 2:
            raise ConfigError(f"{name}: raster values must be 2D")
        self.x0 = float(x0)
        self.y0 = float(y0)
        self.cellsize = float(cellsize)
        self.values = values          # indexed [x-node, y-node]
        self.nodata = nodata
        self.name = name

    @property
    def x1(self):
        return self.x0 + (self.values.shape[0] - 1) * self.cellsize

    @property
    def y1(self):
        return self.y0 + (self.values.shape[1] - 1) * self.cellsize

    def covers(self, lon, lat):
        return ((self.x0 <= lon) & (lon <= self.x1)
                & (self.y0 <= lat) & (lat <= self.y1))

    def clip_distance(self, lon, lat):
        dx = np.maximum(self.x0 - lon, 0.0) + np.maximum(lon - self.x1, 0.0)
        dy = np.maximum(self.y0 - lat, 0.0) + np.maximum(lat - self.y1, 0.0)
        return np.hypot(dx, dy)

    def evaluate(self, lon, lat):
        """Bilinear node interpolation; queries are clamped to the raster."""
        fx = (np.asarray(lon, dtype=float) - self.x0) / self.cellsize
        fy = (np.asarray(lat, dtype=float) - self.y0) / self.cellsize
        nx, ny = self.values.shape
        fx = np.clip(fx, 0.0, nx - 1.0)
        fy = np.clip(fy, 0.0, ny - 1.0)
        k = np.clip(np.floor(fx).astype(int), 0, nx - 2)
        m = np.clip(np.floor(fy).astype(int), 0, ny - 2)
        tx = fx - k
        ty = fy - m
        v = self.values
        val = ((1 - tx) * (1 - ty) * v[k, m]
               + tx * (1 - ty) * v[k + 1, m]
               + (1 - tx) * ty * v[k, m + 1]
               + tx * ty * v[k + 1, m + 1])
        if self.nodata is not None:
            touched = ((v[k, m] == self.nodata) | (v[k + 1, m] == self.nodata)
                       | (v[k, m + 1] == self.nodata)
                       | (v[k + 1, m + 1] == self.nodata))
            val = np.where(touched, np.nan, val)
        return val


def read_esri_ascii(path) -> RasterGrid:
    """Read an ESRI ASCII grid (north row first) into a :class:`RasterGrid`."""
    header = {}
    rows = []
    with open(path) as fh:
        for line in fh:
            parts = line.split()
            if not parts:
                continue
            key = parts[0].lower()
            if key in ("ncols", "nrows", "xllcorner", "yllcorner",
                       "cellsize", "nodata_value"):
                header[key] = float(parts[1])
            else:
                rows.append([float(tok) for tok in parts])
    for req in ("ncols", "nrows", "xllcorner", "yllcorner", "cellsize"):
        if req not in header:
            raise ConfigError(f"{path}: missing ESRI header field '{req}'")
    ncols = int(header["ncols"])
    nrows = int(header["nrows"])
    flat = [v for row in rows for v in row]
    if len(flat) != ncols * nrows:
        raise ConfigError(
            f"{path}: expected {ncols * nrows} values, found {len(flat)}")
    data = np.array(flat).reshape(nrows, ncols)
    # file is north row first; flip to south-first then transpose to [x, y]
    values = data[::-1, :].T
    return RasterGrid(header["xllcorner"], header["yllcorner"],
                      header["cellsize"], values,
                      nodata=header.get("nodata_value"), name=str(path))


class BathymetrySources:
    """Ordered raster stack; the first raster covering a point wins."""

    def __init__(self, rasters):
        if not rasters:
            raise ConfigError("at least one bathymetry source is required")
        self.rasters = list(rasters)

    def evaluate(self, lon, lat, strict=True):
        lon = np.asarray(lon, dtype=float)
        lat = np.asarray(lat, dtype=float)
        out = np.full(np.broadcast(lon, lat).shape, np.nan)
        filled = np.zeros(out.shape, dtype=bool)
        for raster in self.rasters:
            mask = raster.covers(lon, lat) & ~filled
            if np.any(mask):
                out[mask] = raster.evaluate(np.broadcast_to(lon, out.shape)[mask],
                                            np.broadcast_to(lat, out.shape)[mask])
                filled |= mask
        if not np.all(filled):
            if strict:
                lon_b = np.broadcast_to(lon, out.shape)
                lat_b = np.broadcast_to(lat, out.shape)
                bad = np.argwhere(~filled)[0]
                raise ConfigError(
                    "bathymetry does not cover cell center at "
                    f"lon={lon_b[tuple(bad)]:.6f}, lat={lat_b[tuple(bad)]:.6f}")
            # clamp uncovered (ghost) queries to the nearest raster
            lon_b = np.broadcast_to(lon, out.shape)[~filled]
            lat_b = np.broadcast_to(lat, out.shape)[~filled]
            dists = np.stack([r.clip_distance(lon_b, lat_b)
                              for r in self.rasters])
            chosen = np.argmin(dists, axis=0)
            vals = np.empty(lon_b.shape)
            for idx, raster in enumerate(self.rasters):
                sel = chosen == idx
                if np.any(sel):
                    vals[sel] = raster.evaluate(lon_b[sel], lat_b[sel])
            out[~filled] = vals
        if np.any(np.isnan(out)):
            raise ConfigError("bathymetry nodata value inside the domain")
        return out


def sample_bathymetry(patch: Patch, sources: BathymetrySources):
    """Fill ``patch.b`` at cell centers; interior coverage is mandatory."""
    lon = patch.lon_centers(padded=True)
    lat = patch.lat_centers(padded=True)
    LON, LAT = np.meshgrid(lon, lat, indexing="ij")
    ng = patch.ng
    interior = np.zeros(LON.shape, dtype=bool)
    interior[ng:ng + patch.nx, ng:ng + patch.ny] = True
    b = np.empty(LON.shape)
    b[interior] = sources.evaluate(LON[interior], LAT[interior], strict=True)
    b[~interior] = sources.evaluate(LON[~interior], LAT[~interior],
                                    strict=False)
    patch.b[...] = b
