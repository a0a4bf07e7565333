"""Domain geometry, state storage, and bathymetry sampling."""

import math

import numpy as np
import pytest

from conftest import make_patch, raster_from_function, write_esri
from surgeamr.grid import (BathymetrySources, ConfigError, GeoDomain,
                           LevelGeometry, Patch, PhysConfig, RasterGrid,
                           StateVector, cell_size_meters,
                           initialize_lake_at_rest, read_esri_ascii,
                           sample_bathymetry, surface_elevation)


class TestCellSizeMeters:
    def test_equator_one_degree(self):
        dx, dy = cell_size_meters(0.0, 1.0, 1.0)
        expected = 6.367e6 * math.radians(1.0)
        assert dx == pytest.approx(expected, rel=1e-14)
        assert dy == pytest.approx(expected, rel=1e-14)
        assert 111.0e3 < dx < 111.3e3

    def test_sixty_degrees_halves_zonal(self):
        dx, dy = cell_size_meters(60.0, 1.0, 1.0)
        assert dx == pytest.approx(dy / 2.0, rel=1e-12)

    def test_linear_in_dlon(self):
        dx1, dy = cell_size_meters(45.0, 2.0, 1.0)
        assert dx1 == pytest.approx(2.0 * math.cos(math.radians(45.0)) * dy,
                                    rel=1e-12)


class TestGeoDomain:
    def test_valid(self):
        d = GeoDomain(0, 10, -5, 5, 20, 10)
        assert d.dx_coarse == 0.5 and d.dy_coarse == 1.0

    @pytest.mark.parametrize("kw", [
        dict(lon_min=5, lon_max=5), dict(lat_min=2, lat_max=1),
        dict(n_cells_x=0), dict(lat_max=95)])
    def test_invalid(self, kw):
        base = dict(lon_min=0, lon_max=10, lat_min=0, lat_max=10,
                    n_cells_x=10, n_cells_y=10)
        base.update(kw)
        with pytest.raises(ConfigError):
            GeoDomain(**base)


class TestSurfaceElevation:
    def test_lake_at_rest(self):
        p = make_patch(nx=4, ny=4, b_const=-10.0)
        assert np.all(surface_elevation(p) == 0.0)

    def test_dry_convention(self):
        p = make_patch(nx=4, ny=4, b_const=5.0)
        assert np.all(p.h == 0.0)
        assert np.all(surface_elevation(p) == 0.0)

    def test_offset_sea_level(self):
        phys = PhysConfig(sea_level=0.28)
        p = make_patch(nx=4, ny=4, b_const=-10.0, phys=phys)
        p.h[...] = 10.28
        eta = surface_elevation(p)
        assert np.allclose(eta, 0.28, atol=1e-13)


class TestLakeAtRest:
    def test_submerged(self):
        p = make_patch(nx=3, ny=3, b_const=-10.0)
        assert np.all(p.h == 10.0) and np.all(p.hu == 0.0)

    def test_dry_land(self):
        p = make_patch(nx=3, ny=3, b_const=2.0)
        assert np.all(p.h == 0.0)

    def test_offset(self):
        phys = PhysConfig(sea_level=0.28)
        p = make_patch(nx=3, ny=3, b_const=-0.1, phys=phys)
        initialize_lake_at_rest(p)
        assert np.allclose(p.h, 0.38, atol=1e-15)


class TestStateVector:
    def test_admissibility(self):
        s = StateVector((4, 4))
        s.q[0] = 1.0
        s.check_admissible(1e-3)
        s.q[0, 0, 0] = -0.1
        with pytest.raises(ValueError):
            s.check_admissible(1e-3)

    def test_dry_momentum_rejected(self):
        s = StateVector((2, 2))
        s.q[1, 0, 0] = 1.0
        with pytest.raises(ValueError):
            s.check_admissible(1e-3)


class TestRasters:
    def test_constant_field(self):
        dom = GeoDomain(0, 2, 20, 22, 8, 8)
        raster = raster_from_function(dom, lambda X, Y: np.full(X.shape,
                                                                -100.0))
        p = Patch(LevelGeometry(dom, PhysConfig(), 1), 0, 0, 8, 8)
        sample_bathymetry(p, BathymetrySources([raster]))
        assert np.all(p.b == -100.0)

    def test_planar_exact(self):
        # bilinear interpolation reproduces a plane at cell centers
        dom = GeoDomain(0, 2, 20, 22, 8, 8)
        raster = raster_from_function(dom, lambda X, Y: 3.0 * X - 2.0 * Y)
        p = Patch(LevelGeometry(dom, PhysConfig(), 1), 0, 0, 8, 8)
        sample_bathymetry(p, BathymetrySources([raster]))
        lon = p.lon_centers()[:, None]
        lat = p.lat_centers()[None, :]
        assert np.allclose(p.b, 3.0 * lon - 2.0 * lat, atol=1e-10)

    def test_priority_order(self):
        dom = GeoDomain(0, 2, 20, 22, 8, 8)
        coarse = raster_from_function(dom, lambda X, Y: np.full(X.shape,
                                                                -50.0))
        fine = RasterGrid(0.5, 20.5, 0.25,
                          np.full((5, 5), -10.0))
        sources = BathymetrySources([fine, coarse])
        inside = sources.evaluate(np.array([1.0]), np.array([21.0]))
        outside = sources.evaluate(np.array([1.9]), np.array([21.9]))
        assert inside[0] == -10.0
        assert outside[0] == -50.0

    def test_uncovered_interior_is_an_error(self):
        small = RasterGrid(0.0, 20.0, 0.1, np.full((3, 3), -5.0))
        sources = BathymetrySources([small])
        with pytest.raises(ConfigError, match="lon=1.5"):
            sources.evaluate(np.array([1.5]), np.array([21.0]), strict=True)

    def test_esri_round_trip(self, tmp_path):
        dom = GeoDomain(0, 2, 20, 22, 4, 4)
        raster = raster_from_function(
            dom, lambda X, Y: -100.0 + 5.0 * X + np.sin(Y))
        path = write_esri(tmp_path / "r.asc", raster)
        back = read_esri_ascii(path)
        assert back.cellsize == raster.cellsize
        assert np.array_equal(back.values, raster.values)

    def test_nodata_inside_domain(self, tmp_path):
        vals = np.full((5, 5), -20.0)
        vals[2, 2] = -99999.0
        raster = RasterGrid(0.0, 20.0, 1.0, vals, nodata=-99999.0)
        sources = BathymetrySources([raster])
        with pytest.raises(ConfigError, match="nodata"):
            sources.evaluate(np.array([2.2]), np.array([22.2]))


class TestPatchGeometry:
    def test_cell_areas_match_sphere(self):
        p = make_patch(nx=10, ny=10, lat_span=(30.0, 40.0))
        areas = p.cell_areas()
        R = p.geom.phys.earth_radius
        lat_edges = np.radians(p.geom.lat_edge(np.arange(0, 11)))
        expect = (R ** 2 * np.radians(p.dx)
                  * np.diff(np.sin(lat_edges)))
        assert np.allclose(areas[0, :], expect, rtol=1e-13)

    def test_interior_mass(self):
        p = make_patch(nx=5, ny=5, b_const=-10.0)
        assert p.interior_mass() == pytest.approx(
            10.0 * p.cell_areas().sum(), rel=1e-13)
