"""Shared fixtures and helpers for the test suite."""

import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from surgeamr.grid import (BathymetrySources, GeoDomain, LevelGeometry,
                           Patch, PhysConfig, RasterGrid,
                           initialize_lake_at_rest)


@pytest.fixture
def phys():
    return PhysConfig()


def make_patch(nx=40, ny=40, lon_span=(0.0, 2.0), lat_span=(20.0, 22.0),
               b_const=-100.0, phys=None):
    """Standalone level-1 patch covering the whole domain, flat bottom."""
    phys = phys or PhysConfig()
    dom = GeoDomain(lon_span[0], lon_span[1], lat_span[0], lat_span[1],
                    nx, ny)
    geom = LevelGeometry(dom, phys, 1)
    p = Patch(geom, 0, 0, nx, ny)
    p.b[...] = b_const
    initialize_lake_at_rest(p)
    return p


def wall_fill(patch, q=None):
    """Reflecting-wall ghost fill on all four edges."""
    if q is None:
        q = patch.q
    ng = patch.ng
    nx, ny = patch.nx, patch.ny
    for k in range(ng):
        q[:, ng - 1 - k, :] = q[:, ng + k, :]
        q[1, ng - 1 - k, :] *= -1.0
        q[:, nx + ng + k, :] = q[:, nx + ng - 1 - k, :]
        q[1, nx + ng + k, :] *= -1.0
        q[:, :, ng - 1 - k] = q[:, :, ng + k]
        q[2, :, ng - 1 - k] *= -1.0
        q[:, :, ny + ng + k] = q[:, :, ny + ng - 1 - k]
        q[2, :, ny + ng + k] *= -1.0


def wall_fill_bathymetry(patch):
    b = patch.b
    ng = patch.ng
    nx, ny = patch.nx, patch.ny
    for k in range(ng):
        b[ng - 1 - k, :] = b[ng + k, :]
        b[nx + ng + k, :] = b[nx + ng - 1 - k, :]
        b[:, ng - 1 - k] = b[:, ng + k]
        b[:, ny + ng + k] = b[:, ny + ng - 1 - k]


def outflow_fill(patch, q=None):
    if q is None:
        q = patch.q
    ng = patch.ng
    nx, ny = patch.nx, patch.ny
    for k in range(ng):
        q[:, k, :] = q[:, ng, :]
        q[:, nx + ng + k, :] = q[:, nx + ng - 1, :]
        q[:, :, k] = q[:, :, ng]
        q[:, :, ny + ng + k] = q[:, :, ny + ng - 1]


def raster_from_function(domain, fn, cellsize=None, margin=2):
    """Raster with nodes aligned to the domain's coarse cell edges."""
    cellsize = cellsize or domain.dx_coarse
    nx = int(round((domain.lon_max - domain.lon_min) / cellsize))
    ny = int(round((domain.lat_max - domain.lat_min) / cellsize))
    xs = domain.lon_min + cellsize * np.arange(-margin, nx + margin + 1)
    ys = domain.lat_min + cellsize * np.arange(-margin, ny + margin + 1)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    return RasterGrid(xs[0], ys[0], cellsize, fn(X, Y))


def write_esri(path, raster):
    """Write a RasterGrid back out in ESRI ASCII format (north row first)."""
    values = raster.values.T[::-1, :]     # [row(north first), col]
    nrows, ncols = values.shape
    with open(path, "w") as fh:
        fh.write(f"ncols {ncols}\n")
        fh.write(f"nrows {nrows}\n")
        fh.write(f"xllcorner {raster.x0!r}\n")
        fh.write(f"yllcorner {raster.y0!r}\n")
        fh.write(f"cellsize {raster.cellsize!r}\n")
        fh.write("nodata_value -99999\n")
        for row in values:
            fh.write(" ".join(repr(float(v)) for v in row) + "\n")
    return path
