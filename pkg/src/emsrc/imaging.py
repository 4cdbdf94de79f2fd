"""Phase-conjugation imaging of radiating sources.

Measured boundary fields are complex-conjugated and re-propagated into the
domain through the dyadic kernel:

    E*_n(x) = integral over the surface of  G(xi - x, omega_n)
              conj(d)(xi, omega_n) dsigma(xi),

realized as the mesh quadrature sum. The per-frequency image is E*_n scaled
by epsilon0 / (2 pi c0 mu0); far from the surface it approximates the source
convolved with the oriented real-part kernel, so it focuses on the support.
Summing 2 Re{E*} over a dense positive frequency band (the negative half of
the band folds in by conjugation symmetry) produces the broadband image,
which approximates the source itself up to band-limited blurring.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .forward import BoundaryData
from .geometry import FrequencySet, GeometryError, Medium, VectorField, VoxelGrid
from .greens import apply_dyadic_kernel, re_green_ee_many

__all__ = [
    "ImageStack",
    "adjoint_field",
    "phase_conj_single",
    "phase_conj_stack",
    "phase_conj_full",
    "delta_identity_residual",
]


@dataclass(frozen=True, eq=False)
class ImageStack:
    """Per-frequency complex images plus an optional broadband real image."""

    grid: VoxelGrid
    freqs: FrequencySet
    per_freq: tuple[VectorField, ...]
    broadband: Optional[VectorField] = None

    def __post_init__(self):
        per_freq = tuple(self.per_freq)
        if len(per_freq) != len(self.freqs):
            raise ValueError("need one image per frequency")
        for field in per_freq:
            if field.grid != self.grid:
                raise ValueError("all images must share the stack grid")
        if self.broadband is not None:
            if self.broadband.grid != self.grid:
                raise ValueError("broadband image must share the stack grid")
            if self.broadband.is_complex:
                raise ValueError("broadband image must be real")
        object.__setattr__(self, "per_freq", per_freq)

    @property
    def n_freqs(self) -> int:
        return len(self.freqs)

    def magnitude_sum(self) -> np.ndarray:
        """Voxelwise sum over frequencies of the image vector magnitudes."""
        return np.sum([np.linalg.norm(f.values, axis=1) for f in self.per_freq],
                      axis=0)


def _image_scale(medium: Medium) -> float:
    return medium.epsilon0 / (2.0 * np.pi * medium.c0 * medium.mu0)


def _check_freq_index(data: BoundaryData, n: int):
    if not 0 <= n < data.n_freqs:
        raise IndexError(f"frequency index {n} out of range [0, {data.n_freqs})")


def _conj_weighted(data: BoundaryData, n: int) -> np.ndarray:
    return np.conj(data.values[:, n, :]) * data.mesh.weights[:, None]


def adjoint_field(data: BoundaryData, n: int, x, medium: Medium) -> np.ndarray:
    """Back-propagated conjugate field at one interior point; complex 3-vector."""
    _check_freq_index(data, n)
    x = np.asarray(x, dtype=float).reshape(3)
    mesh = data.mesh
    scale = np.sqrt(mesh.area / (4.0 * np.pi))
    if np.min(np.linalg.norm(mesh.points - x, axis=1)) < 1e-9 * scale:
        raise GeometryError("evaluation point lies on the measurement surface")
    omega = float(data.freqs.omegas[n])
    out = apply_dyadic_kernel(x[None, :], mesh.points, omega, medium,
                              _conj_weighted(data, n))
    return out[0]


def _adjoint_on_grid(data: BoundaryData, n: int, grid: VoxelGrid,
                     medium: Medium) -> np.ndarray:
    omega = float(data.freqs.omegas[n])
    return apply_dyadic_kernel(grid.centers(), data.mesh.points, omega, medium,
                               _conj_weighted(data, n))


def _check_grid_inside(grid: VoxelGrid, data: BoundaryData):
    lo, hi = grid.min_corner, grid.max_corner
    corners = np.array([[x, y, z] for x in (lo[0], hi[0])
                        for y in (lo[1], hi[1]) for z in (lo[2], hi[2])])
    if not data.mesh.encloses(corners):
        raise GeometryError("grid box must lie strictly inside the measurement surface")


def phase_conj_single(data: BoundaryData, n: int, grid: VoxelGrid,
                      medium: Medium) -> VectorField:
    """Per-frequency phase-conjugation image; complex field on the grid.

    Conjugate-linear in the data. Far from the surface it approximates the
    oriented real-kernel convolution of the true source at this frequency.
    """
    _check_freq_index(data, n)
    _check_grid_inside(grid, data)
    values = _image_scale(medium) * _adjoint_on_grid(data, n, grid, medium)
    return VectorField(grid, values)


def _stack_one_freq(args) -> np.ndarray:
    data, n, grid, medium = args
    return _adjoint_on_grid(data, n, grid, medium)


def _adjoint_fields_all(data: BoundaryData, grid: VoxelGrid, medium: Medium,
                        threads: int) -> list[np.ndarray]:
    jobs = [(data, n, grid, medium) for n in range(data.n_freqs)]
    if threads == 1 or data.n_freqs == 1:
        return [_stack_one_freq(job) for job in jobs]
    workers = threads if threads > 0 else None
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_stack_one_freq, jobs))


def phase_conj_stack(data: BoundaryData, grid: VoxelGrid, medium: Medium,
                     broadband: bool = False, threads: int = 1) -> ImageStack:
    """All per-frequency images, sharing one sweep of adjoint evaluations."""
    _check_grid_inside(grid, data)
    scale = _image_scale(medium)
    adjoints = _adjoint_fields_all(data, grid, medium, threads)
    per_freq = tuple(VectorField(grid, scale * adj) for adj in adjoints)
    wide = None
    if broadband:
        wide = VectorField(grid, _band_integral(adjoints, data.freqs, scale))
    return ImageStack(grid, data.freqs, per_freq, wide)


def _band_integral(adjoints: list[np.ndarray], freqs: FrequencySet,
                   scale: float) -> np.ndarray:
    stacked = 2.0 * np.real(np.stack(adjoints))          # fold in -omega half
    return scale * np.trapezoid(stacked, freqs.omegas, axis=0)


def phase_conj_full(data: BoundaryData, grid: VoxelGrid, medium: Medium,
                    threads: int = 1) -> VectorField:
    """Broadband image: trapezoid sum of 2 Re{E*} over the positive band.

    Real by construction. The data should sample a dense band (16 or more
    frequencies) for the band integral to mean anything; fewer than 2 is an
    error.
    """
    if data.n_freqs < 2:
        raise ValueError("broadband imaging needs at least 2 frequencies")
    _check_grid_inside(grid, data)
    adjoints = _adjoint_fields_all(data, grid, medium, threads)
    return VectorField(grid, _band_integral(adjoints, data.freqs, _image_scale(medium)))


def delta_identity_residual(x, y, medium: Medium, band_max: float,
                            M: int) -> np.ndarray:
    """Band-limited approximate identity: frequency integral of the real kernel.

    Returns epsilon0 / (2 pi) times the integral of the oriented real-part
    kernel at separation x - y over frequencies in [-band_max, band_max],
    realized as twice the positive-half trapezoid sum on M intervals (the
    integrand vanishes at omega = 0 and is even). At zero separation the
    matrix grows like band_max^3; away from it the entries stay an
    oscillatory band-edge artifact whose size relative to the on-source value
    decays as the band widens.
    """
    if M < 8:
        raise ValueError("need at least 8 frequency intervals")
    if band_max <= 0:
        raise ValueError("band_max must be positive")
    diff = np.asarray(x, dtype=float).reshape(3) - np.asarray(y, dtype=float).reshape(3)
    omegas = np.linspace(0.0, band_max, M + 1)
    kernels = np.zeros((M + 1, 3, 3))
    for j, om in enumerate(omegas[1:], start=1):
        kernels[j] = re_green_ee_many(diff, float(om), medium)
    integral = np.trapezoid(kernels, omegas, axis=0)
    return medium.epsilon0 / (2.0 * np.pi) * 2.0 * integral
