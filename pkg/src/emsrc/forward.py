"""Synthesis of boundary measurements radiated by a compactly supported source.

The electric field radiated by a current density J living on a voxel grid is
evaluated by midpoint quadrature of the volume potential

    E(y, omega) = sum over voxels of  G(y - z_v, omega) J(z_v) h^3,

which is exact up to quadrature error because the evaluation points are kept
strictly away from the support. Boundary data records the full field vector
at every (mesh point, frequency) pair; measurement noise is an optional,
seeded, circularly symmetric complex perturbation.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .geometry import (FrequencySet, GeometryError, Medium, SurfaceMesh,
                       VectorField)
from .greens import apply_dyadic_kernel

__all__ = ["BoundaryData", "radiate", "simulate_boundary_data", "add_noise"]


@dataclass(frozen=True, eq=False)
class BoundaryData:
    """Complex field samples d(xi, omega_n) on a surface mesh.

    ``values`` has shape (n_points, n_freqs, 3).
    """

    mesh: SurfaceMesh
    freqs: FrequencySet
    values: np.ndarray

    def __post_init__(self):
        arr = np.array(self.values, dtype=np.complex128, order="C")
        expected = (self.mesh.n_points, len(self.freqs), 3)
        if arr.shape != expected:
            raise ValueError(f"values must have shape {expected}, got {arr.shape}")
        if not np.all(np.isfinite(arr.view(np.float64))):
            raise ValueError("boundary data must be finite")
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    @property
    def n_points(self) -> int:
        return self.mesh.n_points

    @property
    def n_freqs(self) -> int:
        return len(self.freqs)

    def rms(self) -> float:
        """Root-mean-square modulus over all scalar entries."""
        return float(np.sqrt(np.mean(np.abs(self.values) ** 2)))


def _support(source: VectorField):
    mask = source.support_mask()
    centers = source.grid.centers()[mask]
    moments = source.values[mask]
    return centers, moments


def radiate(source: VectorField, point, omega: float, medium: Medium) -> np.ndarray:
    """Radiated field at one exterior point; complex 3-vector."""
    point = np.asarray(point, dtype=float).reshape(3)
    centers, moments = _support(source)
    if centers.shape[0] == 0:
        return np.zeros(3, dtype=np.complex128)
    if np.min(np.linalg.norm(centers - point, axis=1)) <= 1e-9 * source.grid.spacing:
        raise GeometryError("evaluation point coincides with a source voxel center")
    out = apply_dyadic_kernel(point[None, :], centers, omega, medium,
                              moments * source.grid.voxel_volume)
    return out[0]


def _radiate_one_freq(args) -> np.ndarray:
    points, centers, moments_h3, omega, medium = args
    return apply_dyadic_kernel(points, centers, omega, medium, moments_h3)


def simulate_boundary_data(source: VectorField, mesh: SurfaceMesh,
                           freqs: FrequencySet, medium: Medium,
                           threads: int = 1) -> BoundaryData:
    """Radiated field at every (mesh point, frequency) pair.

    The source support must sit strictly inside the grid box and the mesh
    strictly outside it. Deterministic; with threads > 1 the frequencies are
    computed in parallel worker processes, each identical to the serial
    computation, so results do not depend on the thread count.
    """
    grid = source.grid
    lo, hi = grid.min_corner, grid.max_corner
    inside = np.all((mesh.points > lo) & (mesh.points < hi), axis=1)
    if inside.any():
        raise GeometryError("mesh points intersect the grid bounding box")
    mask = source.support_mask()
    if mask.any():
        idx = np.array([grid.index_triple(v) for v in np.flatnonzero(mask)])
        if np.any(idx == 0) or np.any(idx == np.array(grid.dims) - 1):
            raise GeometryError("source support touches the grid boundary layer")
    centers, moments = _support(source)
    n_freqs = len(freqs)
    values = np.zeros((mesh.n_points, n_freqs, 3), dtype=np.complex128)
    if centers.shape[0] == 0:
        return BoundaryData(mesh, freqs, values)
    moments_h3 = moments * grid.voxel_volume
    jobs = [(mesh.points, centers, moments_h3, float(om), medium)
            for om in freqs.omegas]
    if threads == 1 or n_freqs == 1:
        results = [_radiate_one_freq(job) for job in jobs]
    else:
        workers = threads if threads > 0 else None
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_radiate_one_freq, jobs))
    for n, field in enumerate(results):
        values[:, n, :] = field
    return BoundaryData(mesh, freqs, values)


def add_noise(data: BoundaryData, relative_level: float, seed: int) -> BoundaryData:
    """Seeded circular complex Gaussian perturbation of every entry.

    The per-entry standard deviation is relative_level times the RMS modulus
    of the clean data. Level 0 returns the input unchanged.
    """
    if relative_level < 0:
        raise ValueError("relative_level must be >= 0")
    if relative_level == 0:
        return data
    rng = np.random.default_rng(seed)
    sigma = relative_level * data.rms()
    shape = data.values.shape
    draws = rng.standard_normal((2,) + shape)
    noise = (sigma / np.sqrt(2.0)) * (draws[0] + 1j * draws[1])
    return BoundaryData(data.mesh, data.freqs, data.values + noise)
