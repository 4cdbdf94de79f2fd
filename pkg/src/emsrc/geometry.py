"""Shared physical and geometric vocabulary.

Media (constitutive constants), frequency sets, voxelized source domains,
3-vector fields on those domains, and quadrature meshes of measurement
surfaces. Everything here is immutable after construction and safe to share
across workers.

Units are whatever the caller chooses; the default medium is normalized
(epsilon0 = mu0 = 1, hence unit wave speed), which keeps floating-point
conditioning sane. SI constants can be passed explicitly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

__all__ = [
    "GeometryError",
    "Medium",
    "FrequencySet",
    "VoxelGrid",
    "VectorField",
    "SurfaceMesh",
    "make_sphere_mesh",
    "make_ball_source",
]

GOLDEN_ANGLE = math.pi * (3.0 - math.sqrt(5.0))


class GeometryError(ValueError):
    """A geometric precondition is violated (containment, separation, overlap)."""


def _frozen(values, dtype, shape=None) -> np.ndarray:
    arr = np.array(values, dtype=dtype, order="C")
    if shape is not None and arr.shape != shape:
        raise ValueError(f"expected array of shape {shape}, got {arr.shape}")
    arr.setflags(write=False)
    return arr


def _as_point(p) -> np.ndarray:
    arr = np.asarray(p, dtype=float)
    if arr.shape != (3,):
        raise ValueError(f"expected a 3-vector, got shape {arr.shape}")
    return arr


@dataclass(frozen=True)
class Medium:
    """Homogeneous, isotropic, lossless background medium."""

    epsilon0: float = 1.0
    mu0: float = 1.0

    def __post_init__(self):
        if not (self.epsilon0 > 0 and self.mu0 > 0):
            raise ValueError("permittivity and permeability must be positive")

    @property
    def c0(self) -> float:
        """Wave speed 1/sqrt(epsilon0 * mu0)."""
        return 1.0 / math.sqrt(self.epsilon0 * self.mu0)

    def kappa(self, omega):
        """Wave number omega / c0; odd in omega. Accepts scalars or arrays."""
        return omega / self.c0


@dataclass(frozen=True, eq=False)
class FrequencySet:
    """Ordered set of strictly positive angular frequencies.

    Zero frequency is excluded: the radiating kernel degenerates there and
    carries no data.
    """

    omegas: np.ndarray

    def __post_init__(self):
        arr = _frozen(self.omegas, float)
        if arr.ndim != 1 or arr.size < 1:
            raise ValueError("need at least one frequency")
        if not np.all(arr > 0):
            raise ValueError("frequencies must be strictly positive")
        if np.any(np.diff(arr) < 0):
            raise ValueError("frequencies must be non-decreasing")
        object.__setattr__(self, "omegas", arr)

    @classmethod
    def from_band(cls, kappa_min: float, kappa_max: float, count: int,
                  medium: Medium) -> "FrequencySet":
        """Evenly spaced frequencies covering wave numbers [kappa_min, kappa_max]."""
        if count < 1:
            raise ValueError("count must be >= 1")
        if not (0 < kappa_min <= kappa_max):
            raise ValueError("need 0 < kappa_min <= kappa_max")
        kappas = np.linspace(kappa_min, kappa_max, count)
        return cls(kappas * medium.c0)

    def __len__(self) -> int:
        return self.omegas.size

    def __iter__(self):
        return iter(self.omegas)


@dataclass(frozen=True)
class VoxelGrid:
    """Uniform voxelization of an axis-aligned box.

    ``origin`` is the minimum corner of the box; voxel (ix, iy, iz) has its
    center at origin + spacing * (i + 1/2). The linear ordering of voxels is
    x-fastest, z-slowest: v = ix + nx * (iy + ny * iz). All file formats and
    flattened arrays in this package use that order.
    """

    origin: tuple[float, float, float]
    spacing: float
    dims: tuple[int, int, int]

    def __post_init__(self):
        origin = tuple(float(c) for c in self.origin)
        dims = tuple(int(d) for d in self.dims)
        if len(origin) != 3 or len(dims) != 3:
            raise ValueError("origin and dims must have length 3")
        if not self.spacing > 0:
            raise ValueError("spacing must be positive")
        if any(d < 1 for d in dims):
            raise ValueError("all dims must be >= 1")
        object.__setattr__(self, "origin", origin)
        object.__setattr__(self, "spacing", float(self.spacing))
        object.__setattr__(self, "dims", dims)

    @property
    def n_voxels(self) -> int:
        nx, ny, nz = self.dims
        return nx * ny * nz

    @property
    def voxel_volume(self) -> float:
        return self.spacing ** 3

    @property
    def min_corner(self) -> np.ndarray:
        return np.array(self.origin)

    @property
    def max_corner(self) -> np.ndarray:
        return np.array(self.origin) + self.spacing * np.array(self.dims)

    def centers(self) -> np.ndarray:
        """Voxel centers, shape (n_voxels, 3), x-fastest order. Read-only."""
        return _grid_centers(self)

    def linear_index(self, ix: int, iy: int, iz: int) -> int:
        nx, ny, _ = self.dims
        return ix + nx * (iy + ny * iz)

    def index_triple(self, v: int) -> tuple[int, int, int]:
        nx, ny, _ = self.dims
        ix = v % nx
        iy = (v // nx) % ny
        iz = v // (nx * ny)
        return ix, iy, iz

    def voxel_of(self, point) -> tuple[int, int, int]:
        """Index triple of the voxel containing ``point`` (clipped to the grid)."""
        p = _as_point(point)
        idx = np.floor((p - self.min_corner) / self.spacing).astype(int)
        idx = np.clip(idx, 0, np.array(self.dims) - 1)
        return tuple(int(i) for i in idx)

    def refined(self, factor: int) -> "VoxelGrid":
        """Same box, ``factor`` times finer resolution along every axis."""
        if factor < 1:
            raise ValueError("factor must be >= 1")
        return VoxelGrid(self.origin, self.spacing / factor,
                         tuple(d * factor for d in self.dims))


@lru_cache(maxsize=64)
def _grid_centers(grid: VoxelGrid) -> np.ndarray:
    nx, ny, nz = grid.dims
    ax = grid.origin[0] + grid.spacing * (np.arange(nx) + 0.5)
    ay = grid.origin[1] + grid.spacing * (np.arange(ny) + 0.5)
    az = grid.origin[2] + grid.spacing * (np.arange(nz) + 0.5)
    zz, yy, xx = np.meshgrid(az, ay, ax, indexing="ij")
    pts = np.stack([xx, yy, zz], axis=-1).reshape(-1, 3)
    pts.setflags(write=False)
    return pts


@dataclass(frozen=True, eq=False)
class VectorField:
    """One real or complex 3-vector per voxel of a grid, x-fastest order."""

    grid: VoxelGrid
    values: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.values)
        dtype = np.complex128 if np.iscomplexobj(arr) else np.float64
        arr = _frozen(arr, dtype, shape=(self.grid.n_voxels, 3))
        object.__setattr__(self, "values", arr)

    @classmethod
    def zeros(cls, grid: VoxelGrid, complex_valued: bool = False) -> "VectorField":
        dtype = np.complex128 if complex_valued else np.float64
        return cls(grid, np.zeros((grid.n_voxels, 3), dtype=dtype))

    @property
    def is_complex(self) -> bool:
        return np.iscomplexobj(self.values)

    def real_part(self) -> "VectorField":
        return VectorField(self.grid, np.real(self.values))

    def with_values(self, values) -> "VectorField":
        return VectorField(self.grid, values)

    def _check_same_grid(self, other: "VectorField"):
        if self.grid != other.grid:
            raise ValueError("vector fields live on different grids")

    def __add__(self, other: "VectorField") -> "VectorField":
        self._check_same_grid(other)
        return VectorField(self.grid, self.values + other.values)

    def __sub__(self, other: "VectorField") -> "VectorField":
        self._check_same_grid(other)
        return VectorField(self.grid, self.values - other.values)

    def __mul__(self, scalar) -> "VectorField":
        return VectorField(self.grid, self.values * scalar)

    __rmul__ = __mul__

    def __neg__(self) -> "VectorField":
        return VectorField(self.grid, -self.values)

    def support_mask(self) -> np.ndarray:
        """Boolean mask of voxels with any nonzero component."""
        return np.any(self.values != 0, axis=1)

    def nonzero_count(self) -> int:
        """Number of nonzero scalar components."""
        return int(np.count_nonzero(self.values))


@dataclass(frozen=True, eq=False)
class SurfaceMesh:
    """Quadrature discretization of a closed measurement surface.

    ``points`` sample the surface, ``weights`` are positive quadrature weights
    summing to the surface area, ``normals`` are outward unit normals.
    Integrals over the surface are realized as weighted sums over the points.
    """

    points: np.ndarray
    weights: np.ndarray
    normals: np.ndarray

    def __post_init__(self):
        pts = _frozen(self.points, float)
        if pts.ndim != 2 or pts.shape[1] != 3 or pts.shape[0] < 1:
            raise ValueError("points must have shape (n, 3), n >= 1")
        n = pts.shape[0]
        w = _frozen(self.weights, float, shape=(n,))
        nor = _frozen(self.normals, float, shape=(n, 3))
        if not np.all(np.isfinite(pts)) or not np.all(np.isfinite(w)):
            raise ValueError("mesh arrays must be finite")
        if not np.all(w > 0):
            raise ValueError("all quadrature weights must be positive")
        lengths = np.linalg.norm(nor, axis=1)
        if np.any(np.abs(lengths - 1.0) > 1e-12):
            raise ValueError("normals must be unit vectors (within 1e-12)")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "normals", nor)

    @property
    def n_points(self) -> int:
        return self.points.shape[0]

    @property
    def area(self) -> float:
        return float(self.weights.sum())

    @property
    def centroid(self) -> np.ndarray:
        return self.points.mean(axis=0)

    @property
    def inner_radius(self) -> float:
        """Distance from the centroid to the nearest mesh point."""
        return float(np.linalg.norm(self.points - self.centroid, axis=1).min())

    def integrate(self, samples: np.ndarray):
        """Quadrature sum of per-point samples (first axis indexes points)."""
        samples = np.asarray(samples)
        if samples.shape[0] != self.n_points:
            raise ValueError("first axis of samples must match n_points")
        w = self.weights.reshape((-1,) + (1,) * (samples.ndim - 1))
        return (w * samples).sum(axis=0)

    def encloses(self, points) -> bool:
        """True if all given points lie strictly inside the inscribed sphere."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        dist = np.linalg.norm(pts - self.centroid, axis=1)
        return bool(np.all(dist < self.inner_radius))


def make_sphere_mesh(center, radius: float, n_points: int) -> SurfaceMesh:
    """Quasi-uniform Fibonacci-spiral quadrature mesh of a sphere.

    Every point carries the equal weight 4 pi R^2 / n_points, and the normals
    point radially outward. The rule is exact for constants by construction
    and converges for smooth integrands as n_points grows. For even point
    counts the lower hemisphere mirrors the upper one through the center
    (same z ladder as the plain spiral, azimuths rotated), so odd integrands
    cancel pairwise to rounding.
    """
    center = _as_point(center)
    if not radius > 0:
        raise ValueError("radius must be positive")
    if n_points < 4:
        raise ValueError("need at least 4 mesh points")
    i = np.arange(n_points)
    z = 1.0 - (2.0 * i + 1.0) / n_points
    phi = GOLDEN_ANGLE * i
    rxy = np.sqrt(np.maximum(1.0 - z * z, 0.0))
    normals = np.stack([rxy * np.cos(phi), rxy * np.sin(phi), z], axis=1)
    if n_points % 2 == 0:
        half = n_points // 2
        normals[half:] = -normals[:half][::-1]
    points = center + radius * normals
    weights = np.full(n_points, 4.0 * math.pi * radius * radius / n_points)
    return SurfaceMesh(points, weights, normals)


def make_ball_source(grid: VoxelGrid, center, radius: float, moment) -> VectorField:
    """Constant-moment current density supported on a ball of voxel centers.

    The ball must lie strictly inside the grid box and cover at least one
    voxel center.
    """
    center = _as_point(center)
    moment = _as_point(moment)
    if not radius > 0:
        raise ValueError("radius must be positive")
    lo, hi = grid.min_corner, grid.max_corner
    if np.any(center - radius <= lo) or np.any(center + radius >= hi):
        raise GeometryError("ball must lie strictly inside the grid box")
    centers = grid.centers()
    inside = np.linalg.norm(centers - center, axis=1) < radius
    if not inside.any():
        raise ValueError(
            "ball covers no voxel center; increase the radius "
            f"(radius={radius}, spacing={grid.spacing})")
    values = np.zeros((grid.n_voxels, 3))
    values[inside] = moment
    return VectorField(grid, values)
