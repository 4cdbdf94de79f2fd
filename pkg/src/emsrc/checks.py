"""Numerical self-checks used by the validation driver and the test suite.

These are deliberately independent oracles: finite differences for the
kernel's defining equation and for objective gradients, log-log fits for
convergence orders and growth exponents. They never share code with the
closed forms they check.
"""

from __future__ import annotations

import numpy as np

from .geometry import Medium
from .greens import dyadic_green_ee_many
from .imaging import delta_identity_residual

__all__ = [
    "fd_curl_curl_residual",
    "fd_convergence_order",
    "fd_gradient_error",
    "delta_growth_exponent",
]


def _second_partials(v: np.ndarray, omega: float, medium: Medium, h: float):
    """All second partial derivatives of the kernel around separation v.

    Returns (G0, hess) where hess[a, b] is the 3x3 matrix of
    d^2 G / dx_a dx_b, by second-order central differences.
    """
    eye = np.eye(3)
    points = [v]
    for a in range(3):
        points += [v + h * eye[a], v - h * eye[a]]
    pairs = [(a, b) for a in range(3) for b in range(a + 1, 3)]
    for a, b in pairs:
        points += [v + h * (eye[a] + eye[b]), v + h * (eye[a] - eye[b]),
                   v - h * (eye[a] - eye[b]), v - h * (eye[a] + eye[b])]
    vals = dyadic_green_ee_many(np.array(points), omega, medium)
    g0 = vals[0]
    axis = {a: (vals[1 + 2 * a], vals[2 + 2 * a]) for a in range(3)}
    hess = np.empty((3, 3, 3, 3), dtype=complex)
    for a in range(3):
        gp, gm = axis[a]
        hess[a, a] = (gp - 2.0 * g0 + gm) / h**2
    for idx, (a, b) in enumerate(pairs):
        base = 7 + 4 * idx
        gpp, gpm, gmp, gmm = vals[base:base + 4]
        mixed = (gpp - gpm - gmp + gmm) / (4.0 * h**2)
        hess[a, b] = mixed
        hess[b, a] = mixed
    return g0, hess


def fd_curl_curl_residual(v, omega: float, medium: Medium,
                          h: float | None = None) -> float:
    """Relative residual of the kernel's double-curl equation at separation v.

    curl curl G - kappa^2 G should vanish away from the origin; the curl curl
    is assembled from central-difference second partials as grad(div) minus
    the vector Laplacian, column by column.
    """
    v = np.asarray(v, dtype=float)
    r = np.linalg.norm(v)
    if h is None:
        h = r / 200.0
    g0, hess = _second_partials(v, omega, medium, h)
    lap = hess[0, 0] + hess[1, 1] + hess[2, 2]
    grad_div = np.einsum("abbj->aj", hess)
    kappa = medium.kappa(omega)
    residual = (grad_div - lap) - kappa**2 * g0
    return float(np.linalg.norm(residual) / np.linalg.norm(kappa**2 * g0))


def fd_convergence_order(v, omega: float, medium: Medium, h0: float,
                         levels: int = 3) -> float:
    """Fitted order of the finite-difference residual as h is halved."""
    hs = [h0 / 2**i for i in range(levels)]
    res = [fd_curl_curl_residual(v, omega, medium, h) for h in hs]
    slope, _ = np.polyfit(np.log(hs), np.log(res), 1)
    return float(slope)


def fd_gradient_error(problem, lam_free_values: np.ndarray, n_dirs: int = 20,
                      step: float = 1e-3, seed: int = 0) -> float:
    """Worst relative error of the fidelity gradient against central differences.

    Directional derivatives of the (quadratic) fidelity are computed as
    symmetric differences and compared with the volume-weighted inner product
    of the analytic gradient with each direction.
    """
    rng = np.random.default_rng(seed)
    h3 = problem.grid.voxel_volume
    _, grad = problem.fidelity_and_grad(lam_free_values)
    worst = 0.0
    for _ in range(n_dirs):
        d = rng.standard_normal(lam_free_values.shape)
        d /= np.linalg.norm(d)
        plus = problem.fidelity_values(lam_free_values + step * d)
        minus = problem.fidelity_values(lam_free_values - step * d)
        fd = (plus - minus) / (2.0 * step)
        analytic = h3 * float(np.sum(grad * d))
        denom = max(abs(analytic), abs(fd), 1e-300)
        worst = max(worst, abs(fd - analytic) / denom)
    return worst


def delta_growth_exponent(medium: Medium, bands=(8.0, 16.0, 32.0, 64.0),
                          intervals_per_unit: int = 8) -> float:
    """Growth exponent of the on-source band-limited identity trace."""
    x = np.zeros(3)
    traces = [abs(np.trace(delta_identity_residual(
        x, x, medium, w, int(intervals_per_unit * w)))) for w in bands]
    slope, _ = np.polyfit(np.log(bands), np.log(traces), 1)
    return float(slope)
