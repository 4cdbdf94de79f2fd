import math

import numpy as np
import pytest

from emsrc.geometry import (FrequencySet, GeometryError, Medium, SurfaceMesh,
                            VectorField, VoxelGrid, make_ball_source,
                            make_sphere_mesh)


class TestMedium:
    def test_defaults_normalized(self):
        m = Medium()
        assert m.epsilon0 == 1.0 and m.mu0 == 1.0 and m.c0 == 1.0

    def test_kappa_times_c0_is_omega(self):
        m = Medium(epsilon0=2.0, mu0=0.5)
        for omega in (0.1, 1.0, 17.3):
            assert m.kappa(omega) * m.c0 == omega

    def test_kappa_odd(self):
        m = Medium(epsilon0=3.0, mu0=1.5)
        assert m.kappa(-2.0) == -m.kappa(2.0)

    @pytest.mark.parametrize("eps,mu", [(0.0, 1.0), (1.0, -2.0), (-1.0, -1.0)])
    def test_rejects_nonpositive_constants(self, eps, mu):
        with pytest.raises(ValueError):
            Medium(eps, mu)


class TestFrequencySet:
    def test_orders_and_freezes(self):
        fs = FrequencySet(np.array([1.0, 2.0, 2.0, 5.0]))
        assert len(fs) == 4
        with pytest.raises(ValueError):
            fs.omegas[0] = 9.0

    def test_rejects_zero_and_decreasing(self):
        with pytest.raises(ValueError):
            FrequencySet(np.array([0.0, 1.0]))
        with pytest.raises(ValueError):
            FrequencySet(np.array([2.0, 1.0]))
        with pytest.raises(ValueError):
            FrequencySet(np.array([]))

    def test_from_band(self):
        m = Medium(epsilon0=4.0, mu0=1.0)     # c0 = 0.5
        fs = FrequencySet.from_band(2.0, 6.0, 3, m)
        np.testing.assert_allclose(fs.omegas, [1.0, 2.0, 3.0])


class TestVoxelGrid:
    def test_linear_index_is_x_fastest(self):
        grid = VoxelGrid((0.0, 0.0, 0.0), 1.0, (3, 4, 5))
        v = grid.linear_index(2, 1, 3)
        assert v == 2 + 3 * (1 + 4 * 3)
        assert grid.index_triple(v) == (2, 1, 3)
        centers = grid.centers()
        # consecutive linear indices advance x first
        np.testing.assert_allclose(centers[1] - centers[0], [1.0, 0.0, 0.0])

    def test_centers_and_volume(self):
        grid = VoxelGrid((-1.0, 0.0, 2.0), 0.5, (2, 2, 2))
        assert grid.voxel_volume == 0.125
        first = grid.centers()[0]
        np.testing.assert_allclose(first, [-0.75, 0.25, 2.25])

    def test_validation(self):
        with pytest.raises(ValueError):
            VoxelGrid((0, 0, 0), 0.0, (2, 2, 2))
        with pytest.raises(ValueError):
            VoxelGrid((0, 0, 0), 1.0, (0, 2, 2))

    def test_refined_keeps_box(self):
        grid = VoxelGrid((0.0, 0.0, 0.0), 0.5, (4, 4, 4))
        fine = grid.refined(2)
        np.testing.assert_allclose(fine.max_corner, grid.max_corner)
        assert fine.n_voxels == 8 * grid.n_voxels


class TestVectorField:
    def test_linear_ops(self):
        grid = VoxelGrid((0, 0, 0), 1.0, (2, 2, 1))
        rng = np.random.default_rng(0)
        a = VectorField(grid, rng.standard_normal((4, 3)))
        b = VectorField(grid, rng.standard_normal((4, 3)))
        np.testing.assert_array_equal((a + b).values, (b + a).values)
        np.testing.assert_allclose(((a + b) - b).values, a.values, rtol=1e-14)
        np.testing.assert_array_equal((2.0 * a).values, a.values * 2.0)
        np.testing.assert_array_equal((2.0 * (a + b)).values,
                                      (2.0 * a + 2.0 * b).values)

    def test_grid_mismatch(self):
        a = VectorField.zeros(VoxelGrid((0, 0, 0), 1.0, (2, 2, 1)))
        b = VectorField.zeros(VoxelGrid((0, 0, 0), 1.0, (1, 2, 2)))
        with pytest.raises(ValueError):
            a + b

    def test_immutable(self):
        field = VectorField.zeros(VoxelGrid((0, 0, 0), 1.0, (2, 2, 2)))
        with pytest.raises(ValueError):
            field.values[0, 0] = 1.0

    def test_complex_detection(self):
        grid = VoxelGrid((0, 0, 0), 1.0, (1, 1, 1))
        assert not VectorField(grid, np.ones((1, 3))).is_complex
        assert VectorField(grid, np.ones((1, 3)) * 1j).is_complex


class TestSphereMesh:
    def test_weights_sum_to_area_exactly(self):
        mesh = make_sphere_mesh((0, 0, 0), 1.0, 1000)
        assert mesh.weights.sum() == pytest.approx(4 * math.pi, rel=1e-15)

    def test_four_point_weights(self):
        mesh = make_sphere_mesh((0, 0, 0), 2.0, 4)
        np.testing.assert_allclose(mesh.weights, 4 * math.pi * 4.0 / 4.0)

    def test_quadrature_constant_and_odd_monomial(self):
        R = 2.0
        mesh = make_sphere_mesh((0, 0, 0), R, 5000)
        ones = mesh.integrate(np.ones(mesh.n_points))
        assert ones == pytest.approx(4 * math.pi * R * R, rel=1e-12)
        xi_x = mesh.integrate(mesh.points[:, 0])
        assert abs(xi_x) < 1e-10 * R**3

    def test_low_order_harmonics_converge(self):
        # Quadrature of degree <= 2 solid harmonics vs their analytic surface
        # integrals, normalized by area * max amplitude.
        R = 1.5
        n = 10_000
        mesh = make_sphere_mesh((0, 0, 0), R, n)
        area = 4 * math.pi * R * R
        x, y, z = mesh.points.T
        cases = [
            (x / R, 0.0),
            (z / R, 0.0),
            (x * y / R**2, 0.0),
            ((x**2 - y**2) / R**2, 0.0),
            ((3 * z**2 - R * R) / R**2, 0.0),
            (x**2 / R**2, area / 3.0),
        ]
        for samples, exact in cases:
            err = abs(mesh.integrate(samples) - exact) / area
            assert err < 1e-3

    def test_normals_radial_unit(self):
        center = np.array([1.0, -2.0, 0.5])
        mesh = make_sphere_mesh(center, 3.0, 400)
        radial = (mesh.points - center) / 3.0
        np.testing.assert_allclose(mesh.normals, radial, atol=1e-12)

    def test_bad_arguments(self):
        with pytest.raises(ValueError):
            make_sphere_mesh((0, 0, 0), -1.0, 100)
        with pytest.raises(ValueError):
            make_sphere_mesh((0, 0, 0), 1.0, 3)

    def test_mesh_validation(self):
        pts = np.zeros((2, 3))
        with pytest.raises(ValueError):
            SurfaceMesh(pts, np.array([1.0, -1.0]), np.tile([0, 0, 1.0], (2, 1)))
        with pytest.raises(ValueError):
            SurfaceMesh(pts, np.ones(2), np.tile([0, 0, 1.1], (2, 1)))


class TestBallSource:
    def test_support_inside_and_nonempty(self):
        grid = VoxelGrid((-1, -1, -1), 0.125, (16, 16, 16))
        field = make_ball_source(grid, (0, 0, 0), 0.4 * 2.0, (0, 0, 1))
        assert field.nonzero_count() > 0
        # no support on the boundary voxel layer
        mask = field.support_mask().reshape(16, 16, 16)
        assert not mask[0].any() and not mask[-1].any()
        assert not mask[:, 0].any() and not mask[:, -1].any()
        assert not mask[:, :, 0].any() and not mask[:, :, -1].any()

    def test_disjoint_balls_add(self):
        grid = VoxelGrid((-1, -1, -1), 0.125, (16, 16, 16))
        a = make_ball_source(grid, (-0.5, 0, 0), 0.3, (1, 0, 0))
        b = make_ball_source(grid, (0.5, 0, 0), 0.3, (0, 1, 0))
        assert not np.any(a.support_mask() & b.support_mask())
        total = a + b
        assert total.nonzero_count() == a.nonzero_count() + b.nonzero_count()

    def test_volume_integral_matches_ball(self):
        # Voxel-counting oracle: the grid integral is moment * count * h^3,
        # which must match the continuum ball volume within 15 % once the
        # spacing resolves the radius by 4x or better.
        radius = 0.4
        grid = VoxelGrid((-1, -1, -1), radius / 4.0, (20, 20, 20))
        moment = np.array([0.0, 0.0, 2.0])
        field = make_ball_source(grid, (0, 0, 0), radius, moment)
        integral = field.values.sum(axis=0) * grid.voxel_volume
        exact = moment * (4.0 / 3.0) * math.pi * radius**3
        assert np.linalg.norm(integral - exact) < 0.15 * np.linalg.norm(exact)

    def test_errors(self):
        grid = VoxelGrid((-1, -1, -1), 0.25, (8, 8, 8))
        with pytest.raises(GeometryError):
            make_ball_source(grid, (0.9, 0, 0), 0.3, (0, 0, 1))
        with pytest.raises(ValueError, match="radius"):
            make_ball_source(grid, (0.06, 0.06, 0.06), 0.05, (0, 0, 1))
