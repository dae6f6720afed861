"""Fourier-multiplier operators on the periodic box.

All operators here are diagonal in Fourier space (scalar symbols, or
constant 4x4 / per-mode 4x4 matrices acting on the component index), hence
they commute pairwise and with conjugate symmetry.  The zero mode is left
untouched (fields are mean-free by convention).

Component convention for 4-fields: (v1, v2, v3, theta).
"""

from __future__ import annotations

import numpy as np

from .grid import Grid, SpectralField4
from .params import PhysParams, chi, lp_bump

MEAN_TOL = 1e-12


def _safe_inv(arr: np.ndarray) -> np.ndarray:
    """1/arr with the zero entries (the zero mode) mapped to 0."""
    out = np.zeros_like(arr)
    nz = arr != 0.0
    out[nz] = 1.0 / arr[nz]
    return out


def leray_project(f: SpectralField4) -> SpectralField4:
    """Project the velocity components onto divergence-free fields.

    theta is untouched.  Per mode: v -> v - xi (xi . v) / |xi|^2.
    """
    g = f.grid
    K1, K2, K3 = g.K
    div = K1 * f.data[0] + K2 * f.data[1] + K3 * f.data[2]
    inv = _safe_inv(g.K2)
    out = f.data.copy()
    out[0] -= K1 * div * inv
    out[1] -= K2 * div * inv
    out[2] -= K3 * div * inv
    return SpectralField4(g, out)


def divergence(f: SpectralField4) -> np.ndarray:
    """Spectral divergence i xi . v of the velocity part."""
    K1, K2, K3 = f.grid.K
    return 1j * (K1 * f.data[0] + K2 * f.data[1] + K3 * f.data[2])


def apply_skew(f: SpectralField4 | np.ndarray, params: PhysParams) -> SpectralField4 | np.ndarray:
    """Apply the constant skew matrix coupling rotation and stratification.

    Componentwise: (f1, f2, f3, f4) -> (-f2, f1, f4/F, -f3/F).  Acts
    pointwise, so the same formula holds in physical or Fourier space.
    """
    data = f.data if isinstance(f, SpectralField4) else f
    F = params.froude_F
    out = np.stack([-data[1], data[0], data[3] / F, -data[2] / F])
    if isinstance(f, SpectralField4):
        return SpectralField4(f.grid, out)
    return out


def potential_vorticity(U: SpectralField4, params: PhysParams) -> np.ndarray:
    """Scalar spectrum of d1 v2 - d2 v1 - F d3 theta."""
    K1, K2, K3 = U.grid.K
    F = params.froude_F
    return 1j * (K1 * U.data[1] - K2 * U.data[0] - F * K3 * U.data[3])


def stratified_laplacian_symbol(grid: Grid, params: PhysParams) -> np.ndarray:
    """Symbol of the anisotropic Laplacian d1^2 + d2^2 + F^2 d3^2: -|xi|_F^2."""
    K1, K2, K3 = grid.K
    return -(K1 ** 2 + K2 ** 2 + params.froude_F ** 2 * K3 ** 2)


def stratified_laplacian_inverse(omega: np.ndarray, grid: Grid, params: PhysParams) -> np.ndarray:
    """Invert the anisotropic Laplacian on a mean-free scalar spectrum."""
    scale = np.max(np.abs(omega))
    if scale > 0 and np.abs(omega[0, 0, 0]) > MEAN_TOL * scale:
        raise ValueError("anisotropic Laplacian inverse requires a mean-free field")
    return omega * _safe_inv(stratified_laplacian_symbol(grid, params))


def qg_vector_symbol(grid: Grid, params: PhysParams) -> list[np.ndarray]:
    """Fourier factors of the operator (-d2, d1, 0, -F d3)."""
    K1, K2, K3 = grid.K
    F = params.froude_F
    return [-1j * K2, 1j * K1, np.zeros(grid.shape), -1j * F * K3]


def vector_potential_from_vorticity(omega: np.ndarray, grid: Grid, params: PhysParams) -> SpectralField4:
    """Biot-Savart inversion: U = (-d2, d1, 0, -F d3) DeltaF^{-1} omega."""
    phi = stratified_laplacian_inverse(omega, grid, params)
    sym = qg_vector_symbol(grid, params)
    return SpectralField4(grid, np.stack([s * phi for s in sym]))


def qg_project(U: SpectralField4, params: PhysParams) -> SpectralField4:
    """Quasi-geostrophic part: Biot-Savart of the potential vorticity."""
    omega = potential_vorticity(U, params)
    return vector_potential_from_vorticity(omega, U.grid, params)


def osc_project(U: SpectralField4, params: PhysParams) -> SpectralField4:
    """Oscillating part: identity minus the quasi-geostrophic projector."""
    return SpectralField4(U.grid, U.data - qg_project(U, params).data)


def diffusion_apply(f: SpectralField4, params: PhysParams) -> SpectralField4:
    """Componentwise diffusion (nu Lap v, nu' Lap theta)."""
    out = f.data.copy()
    out[:3] *= -params.nu * f.grid.K2
    out[3] *= -params.nu_prime * f.grid.K2
    return SpectralField4(f.grid, out)


def qg_diffusion_symbol(grid: Grid, params: PhysParams) -> np.ndarray:
    """Symbol of the non-local diffusion governing the quasi-geostrophic limit.

    -|xi|^2 (nu xi1^2 + nu xi2^2 + nu' F^2 xi3^2) / |xi|_F^2; equals
    -nu |xi|^2 when nu = nu'.  Bounded above by -min(nu, nu') |xi|^2.
    """
    K1, K2, K3 = grid.K
    F2 = params.froude_F ** 2
    xiF2 = K1 ** 2 + K2 ** 2 + F2 * K3 ** 2
    S = params.nu * (K1 ** 2 + K2 ** 2) + params.nu_prime * F2 * K3 ** 2
    return -grid.K2 * S * _safe_inv(xiF2)


def qg_diffusion_apply(f: SpectralField4 | np.ndarray, params: PhysParams, grid: Grid | None = None):
    """Apply the limit diffusion operator to a 4-field or scalar spectrum."""
    if isinstance(f, SpectralField4):
        sym = qg_diffusion_symbol(f.grid, params)
        return SpectralField4(f.grid, f.data * sym)
    if grid is None:
        raise ValueError("grid required for raw arrays")
    return f * qg_diffusion_symbol(grid, params)


def fractional_derivative(f: SpectralField4 | np.ndarray, s: float, grid: Grid | None = None):
    """|D|^s: multiply by |xi|^s (zero mode stays 0, so s < 0 is allowed)."""
    g = f.grid if isinstance(f, SpectralField4) else grid
    if g is None:
        raise ValueError("grid required for raw arrays")
    if s == 0.0:
        sym = np.ones(g.shape)
        sym[0, 0, 0] = 0.0  # mean-free convention even at s = 0
    else:
        with np.errstate(divide="ignore"):
            sym = np.where(g.Kmag > 0.0, g.Kmag ** s, 0.0)
    if isinstance(f, SpectralField4):
        return SpectralField4(g, f.data * sym)
    return f * sym


def freq_truncate_symbol(grid: Grid, r: float, R: float) -> np.ndarray:
    """Symbol chi(|xi|/R) (1 - chi(|xi3|/r)) of the annular truncation.

    Keeps |xi| <= (3/4) R untouched in the radial factor and removes
    |xi3| <= (3/4) r entirely; smooth bridges in between.
    """
    if not (0.0 < r < R):
        raise ValueError(f"truncation radii must satisfy 0 < r < R, got r={r}, R={R}")
    _, _, K3 = grid.K
    return chi(grid.Kmag / R) * (1.0 - chi(np.abs(K3) / r))


def freq_truncate(f: SpectralField4 | np.ndarray, r: float, R: float, grid: Grid | None = None):
    g = f.grid if isinstance(f, SpectralField4) else grid
    if g is None:
        raise ValueError("grid required for raw arrays")
    sym = freq_truncate_symbol(g, r, R)
    if isinstance(f, SpectralField4):
        return SpectralField4(g, f.data * sym)
    return f * sym


def lp_resolved_range(grid: Grid) -> tuple[int, int]:
    """Dyadic indices resolved by the box: [jmin, jmax].

    jmin = floor(log2(2 pi / L)) - 1 so the partition of unity covers the
    lowest nonzero |xi|; jmax = ceil(log2(kmax)) + 1.  Blocks outside are
    identically zero on the grid; norms truncate there (a documented bias of
    the box approximation).
    """
    kmin = 2.0 * np.pi / grid.box_length
    jmin = int(np.floor(np.log2(kmin))) - 1
    jmax = int(np.ceil(np.log2(grid.kmax))) + 1
    return jmin, jmax


def dyadic_block_symbol(grid: Grid, j: int) -> np.ndarray:
    """phi(2^-j |xi|) with phi supported on the annulus [3/4, 8/3]."""
    return lp_bump(grid.Kmag / 2.0 ** j)


def dyadic_block(f: SpectralField4 | np.ndarray, j: int, grid: Grid | None = None):
    g = f.grid if isinstance(f, SpectralField4) else grid
    if g is None:
        raise ValueError("grid required for raw arrays")
    sym = dyadic_block_symbol(g, j)
    if isinstance(f, SpectralField4):
        return SpectralField4(g, f.data * sym)
    return f * sym


def dyadic_block_vertical(f: SpectralField4 | np.ndarray, k: int, grid: Grid | None = None):
    """Vertical dyadic block phi(2^-k |xi3|)."""
    g = f.grid if isinstance(f, SpectralField4) else grid
    if g is None:
        raise ValueError("grid required for raw arrays")
    _, _, K3 = g.K
    sym = lp_bump(np.abs(K3) / 2.0 ** k)
    if isinstance(f, SpectralField4):
        return SpectralField4(g, f.data * sym)
    return f * sym


def low_pass(f: np.ndarray, j: int, grid: Grid) -> np.ndarray:
    """S_j = chi(2^-j |xi|): the cumulative low-frequency part below block j."""
    return f * chi(grid.Kmag / 2.0 ** j)
