"""Periodic-box spectral grid, transforms and the 4-component field container.

Conventions (used everywhere downstream):

* FFT layout and normalization follow numpy/scipy: forward transform is the
  plain unnormalized sum, the inverse carries 1/N.  With ``c = data / N``
  the Fourier-series coefficients, Parseval reads

      integral |u|^2 dx  =  (L^3 / N) * sum_x |u(x)|^2  =  L^3 * sum_k |c_k|^2
                         =  (L^3 / N^2) * sum_k |data_k|^2,

  with N = n1*n2*n3 grid points and L the box period.
* Wavenumbers are (2*pi/L) * m with integer labels m in {-n/2+1, ..., n/2}
  stored in FFT array order (the Nyquist slot is labeled +n/2).
* Fields are mean-free: the zero mode is held at exactly 0.  The anisotropic
  inverse Laplacian and the per-mode penalized matrix are singular at xi = 0,
  so constants are excluded globally.
* Real fields in physical space correspond to Hermitian spectra,
  data(-xi) = conj(data(xi)); this is enforced after nonlinear evaluations
  and validated before inverse transforms.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from functools import cached_property

import numpy as np
from scipy import fft as sfft

_FFT_WORKERS = 1


def set_fft_workers(n: int) -> None:
    """Set the worker count passed to scipy.fft (default 1)."""
    global _FFT_WORKERS
    _FFT_WORKERS = max(1, int(n))


def fft_workers() -> int:
    return _FFT_WORKERS


def _wavenumbers_1d(n: int, box_length: float) -> np.ndarray:
    # integer labels in FFT order; Nyquist slot labeled +n/2
    m = np.fft.fftfreq(n, d=1.0 / n)
    m[n // 2] = n // 2
    return (2.0 * np.pi / box_length) * m


@dataclass(frozen=True)
class Grid:
    """Rectangular wavenumber grid on a cubic periodic box of period L.

    n1, n2, n3 are points per dimension (even, >= 8); the same physical
    period applies to all three axes.
    """

    n1: int
    n2: int
    n3: int
    box_length: float = 8.0 * np.pi

    def __post_init__(self):
        for n in (self.n1, self.n2, self.n3):
            if n < 8 or n % 2 != 0:
                raise ValueError(f"grid size must be even and >= 8, got {n}")
        if self.box_length <= 0:
            raise ValueError("box_length must be positive")

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.n1, self.n2, self.n3)

    @property
    def npoints(self) -> int:
        return self.n1 * self.n2 * self.n3

    @property
    def volume(self) -> float:
        return self.box_length ** 3

    @property
    def cell_volume(self) -> float:
        return self.volume / self.npoints

    @cached_property
    def k1(self) -> np.ndarray:
        return _wavenumbers_1d(self.n1, self.box_length)

    @cached_property
    def k2(self) -> np.ndarray:
        return _wavenumbers_1d(self.n2, self.box_length)

    @cached_property
    def k3(self) -> np.ndarray:
        return _wavenumbers_1d(self.n3, self.box_length)

    @cached_property
    def K(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Broadcast 3D wavenumber components (each of shape (n1,n2,n3))."""
        return (
            self.k1[:, None, None] * np.ones(self.shape),
            self.k2[None, :, None] * np.ones(self.shape),
            self.k3[None, None, :] * np.ones(self.shape),
        )

    @cached_property
    def K2(self) -> np.ndarray:
        """|xi|^2 per mode."""
        K1, K2_, K3 = self.K
        return K1 ** 2 + K2_ ** 2 + K3 ** 2

    @cached_property
    def Kmag(self) -> np.ndarray:
        return np.sqrt(self.K2)

    @property
    def kmax(self) -> float:
        """Largest |xi| component label on the grid."""
        return (2.0 * np.pi / self.box_length) * max(self.n1, self.n2, self.n3) / 2.0

    @cached_property
    def dealias_mask(self) -> np.ndarray:
        """2/3-rule mask: keep |k_j| <= (1/3)(2 pi / L) n_j per axis.

        Note: for n divisible by 3 the inclusive threshold keeps the shell
        |m| = n/3 which can receive aliases from products of boundary modes;
        the data families used by the solvers are mid-band so this shell is
        quiet in practice.
        """
        cuts = [(2.0 * np.pi / self.box_length) * n / 3.0 for n in (self.n1, self.n2, self.n3)]
        eps = 1e-12
        m1 = np.abs(self.k1) <= cuts[0] * (1 + eps)
        m2 = np.abs(self.k2) <= cuts[1] * (1 + eps)
        m3 = np.abs(self.k3) <= cuts[2] * (1 + eps)
        return m1[:, None, None] & m2[None, :, None] & m3[None, None, :]

    def x(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Physical-space sample coordinates (broadcastable 1D arrays)."""
        h = self.box_length
        return (
            np.linspace(0.0, h, self.n1, endpoint=False)[:, None, None],
            np.linspace(0.0, h, self.n2, endpoint=False)[None, :, None],
            np.linspace(0.0, h, self.n3, endpoint=False)[None, None, :],
        )


def reflect_spectrum(data: np.ndarray) -> np.ndarray:
    """Return a(-xi) for spectra laid out in FFT order (last three axes)."""
    out = data[..., ::-1, ::-1, ::-1]
    return np.roll(out, shift=(1, 1, 1), axis=(-3, -2, -1))


def hermitian_defect(data: np.ndarray) -> float:
    """Relative size of the non-Hermitian part of a spectrum."""
    norm = np.linalg.norm(data)
    if norm == 0.0:
        return 0.0
    return np.linalg.norm(data - np.conj(reflect_spectrum(data))) / norm


def hermitianize(data: np.ndarray) -> np.ndarray:
    """Project a spectrum onto the Hermitian (real-field) part."""
    return 0.5 * (data + np.conj(reflect_spectrum(data)))


@dataclass
class SpectralField4:
    """4-component Fourier-space field (v1, v2, v3, theta) on a Grid.

    The data array has shape (4, n1, n2, n3), complex.  Invariants expected
    by consumers: Hermitian symmetry (real field) and zero mean.
    """

    grid: Grid
    data: np.ndarray
    removed_mean: np.ndarray = dc_field(default_factory=lambda: np.zeros(4))

    def __post_init__(self):
        expected = (4,) + self.grid.shape
        if self.data.shape != expected:
            raise ValueError(f"field data must have shape {expected}, got {self.data.shape}")

    def copy(self) -> "SpectralField4":
        return SpectralField4(self.grid, self.data.copy(), self.removed_mean.copy())

    @classmethod
    def zeros(cls, grid: Grid) -> "SpectralField4":
        return cls(grid, np.zeros((4,) + grid.shape, dtype=complex))

    def velocity(self) -> np.ndarray:
        return self.data[:3]

    def theta(self) -> np.ndarray:
        return self.data[3]


def fftn(phys: np.ndarray) -> np.ndarray:
    return sfft.fftn(phys, axes=(-3, -2, -1), workers=_FFT_WORKERS)


def ifftn(spec: np.ndarray) -> np.ndarray:
    return sfft.ifftn(spec, axes=(-3, -2, -1), workers=_FFT_WORKERS)


def forward_transform(grid: Grid, phys: np.ndarray) -> SpectralField4:
    """Transform a real (4, n1, n2, n3) sample array to a mean-free spectrum.

    The removed component means are recorded on the returned field.
    """
    expected = (4,) + grid.shape
    if phys.shape != expected:
        raise ValueError(f"physical field must have shape {expected}, got {phys.shape}")
    data = fftn(np.asarray(phys, dtype=float))
    mean = data[:, 0, 0, 0].real / grid.npoints
    data[:, 0, 0, 0] = 0.0
    return SpectralField4(grid, data, removed_mean=mean)


HERMITIAN_TOL = 1e-10
IMAG_RESIDUE_TOL = 1e-12


def inverse_transform(f: SpectralField4) -> np.ndarray:
    """Transform back to physical space, validating realness on the way.

    Raises ValueError if the spectrum's Hermitian defect exceeds 1e-10
    (corrupted state) or the imaginary residue after the inverse transform
    exceeds 1e-12 relative.
    """
    defect = hermitian_defect(f.data)
    if defect > HERMITIAN_TOL:
        raise ValueError(f"Hermitian symmetry violated (relative defect {defect:.3e})")
    u = ifftn(f.data)
    scale = np.max(np.abs(u)) or 1.0
    residue = np.max(np.abs(u.imag)) / scale
    if residue > IMAG_RESIDUE_TOL * 10:
        # small defects can amplify; re-check against the field norm
        raise ValueError(f"imaginary residue {residue:.3e} after inverse transform")
    return u.real


def scalar_inverse(grid: Grid, data: np.ndarray) -> np.ndarray:
    """Inverse transform for a scalar spectrum; returns the real part."""
    return ifftn(data).real


def dealias(f: SpectralField4) -> SpectralField4:
    """Zero all coefficients outside the 2/3-rule mask."""
    return SpectralField4(f.grid, f.data * f.grid.dealias_mask)


def dealias_data(grid: Grid, data: np.ndarray) -> np.ndarray:
    return data * grid.dealias_mask


def project_mean_free(data: np.ndarray) -> np.ndarray:
    out = data.copy()
    out[..., 0, 0, 0] = 0.0
    return out


def random_band_field(
    grid: Grid,
    rng: np.random.Generator,
    band: tuple[float, float] | None = None,
    ncomp: int = 4,
    decay: float = 0.0,
) -> np.ndarray:
    """Random mean-free Hermitian spectrum supported on klo <= |xi| <= khi.

    Returns raw spectral data of shape (ncomp, n1, n2, n3) (or (n1,n2,n3)
    for ncomp=0, meaning a scalar).  ``decay`` > 0 multiplies amplitudes by
    |xi|^-decay for smoother samples.  Normalized so the physical-space rms
    is O(1).
    """
    shape = grid.shape if ncomp == 0 else (ncomp,) + grid.shape
    phys = rng.standard_normal(shape)
    data = fftn(phys)
    data[..., 0, 0, 0] = 0.0
    if band is None:
        klo = 2.0 * np.pi / grid.box_length * 0.99
        khi = grid.kmax / 2.0
    else:
        klo, khi = band
    mask = (grid.Kmag >= klo) & (grid.Kmag <= khi)
    data = data * mask
    if decay > 0.0:
        with np.errstate(divide="ignore"):
            w = np.where(grid.Kmag > 0, grid.Kmag ** (-decay), 0.0)
        data = data * w
    data = hermitianize(data)
    rms = np.sqrt(np.mean(np.abs(ifftn(data).real) ** 2))
    if rms > 0:
        data = data / rms
    return data
