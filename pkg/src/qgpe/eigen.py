"""Per-mode linear algebra of the penalized operator.

The linear part of the penalized system acts mode-by-mode through the real
4x4 matrix  B(xi) = Lhat - (1/eps) (P A)hat  (diffusion minus the projected
skew coupling).  Its divergence-free subspace (3-dimensional per mode) is
invariant and is where all the dynamics lives; on the truncated cone
r <= |xi3|, |xi| <= R it is diagonalizable with one slow real eigenvalue mu
(the vortical mode) and a fast conjugate pair lambda, conj(lambda) (the
wave pair).  The fourth eigenvalue mu0 = -nu |xi|^2 is exact and belongs to
a non-divergence-free direction, so it never enters the dynamics.

The full 4x4 matrix is defective on the planes xi3 = 0 and on the vertical
axis (and globally when nu = nu'), which is why the decomposition is done
on the divergence-free restriction: exact there, and the degeneracies of
the discarded direction are irrelevant.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import Grid, SpectralField4
from .params import PhysParams

COND_LIMIT = 1e8


def penalized_matrix(xi, params: PhysParams) -> np.ndarray:
    """The real 4x4 mode matrix at wavenumber xi (xi != 0).

    Entry-by-entry: row 1 is (-nu|xi|^2 + xi1 xi2 / (eps |xi|^2),
    (xi2^2 + xi3^2)/(eps |xi|^2), 0, xi1 xi3 / (eps F |xi|^2)), etc.; the
    trace is -(3 nu + nu') |xi|^2.
    """
    x = np.asarray(xi, dtype=float)
    if x.shape != (3,) or not np.any(x):
        raise ValueError("xi must be a nonzero 3-vector")
    return _penalized_matrix_batch(x[None, :], params)[0]


def _penalized_matrix_batch(xis: np.ndarray, params: PhysParams) -> np.ndarray:
    """Vectorized mode matrices for an (m, 3) array of nonzero wavenumbers."""
    x1, x2, x3 = xis[:, 0], xis[:, 1], xis[:, 2]
    n2 = x1 ** 2 + x2 ** 2 + x3 ** 2
    eps, F = params.epsilon, params.froude_F
    nu, nup = params.nu, params.nu_prime
    inv = 1.0 / (eps * n2)
    m = xis.shape[0]
    B = np.zeros((m, 4, 4))
    B[:, 0, 0] = -nu * n2 + x1 * x2 * inv
    B[:, 0, 1] = (x2 ** 2 + x3 ** 2) * inv
    B[:, 0, 3] = x1 * x3 * inv / F
    B[:, 1, 0] = -(x1 ** 2 + x3 ** 2) * inv
    B[:, 1, 1] = -nu * n2 - x1 * x2 * inv
    B[:, 1, 3] = x2 * x3 * inv / F
    B[:, 2, 0] = x2 * x3 * inv
    B[:, 2, 1] = -x1 * x3 * inv
    B[:, 2, 2] = -nu * n2
    B[:, 2, 3] = -(x1 ** 2 + x2 ** 2) * inv / F
    B[:, 3, 2] = 1.0 / (eps * F)
    B[:, 3, 3] = -nup * n2
    return B


def divfree_basis(xi) -> np.ndarray:
    """Orthonormal basis (4x3) of the divergence-free subspace at mode xi."""
    return _divfree_basis_batch(np.asarray(xi, dtype=float)[None, :])[0]


def _divfree_basis_batch(xis: np.ndarray) -> np.ndarray:
    m = xis.shape[0]
    xh = xis / np.linalg.norm(xis, axis=1)[:, None]
    # pick the least-aligned coordinate axis per mode, then Gram-Schmidt
    e = np.eye(3)[np.argmin(np.abs(xh), axis=1)]
    a = np.cross(xh, e)
    a /= np.linalg.norm(a, axis=1)[:, None]
    b = np.cross(xh, a)
    Q = np.zeros((m, 4, 3))
    Q[:, :3, 0] = a
    Q[:, :3, 1] = b
    Q[:, 3, 2] = 1.0
    return Q


def slow_diffusion_rate(xis: np.ndarray, params: PhysParams) -> np.ndarray:
    """Leading real part -tau(xi) |xi|^2 of the wave-pair eigenvalues.

    tau(xi) = nu/2 (1 + F^2 xi3^2/|xi|_F^2) + nu'/2 (1 - F^2 xi3^2/|xi|_F^2),
    a convex combination bounded below by min(nu, nu').
    """
    x1, x2, x3 = xis[..., 0], xis[..., 1], xis[..., 2]
    F2 = params.froude_F ** 2
    xiF2 = x1 ** 2 + x2 ** 2 + F2 * x3 ** 2
    w = F2 * x3 ** 2 / xiF2
    return 0.5 * (params.nu * (1.0 + w) + params.nu_prime * (1.0 - w))


def asymptotic_eigenvalues(xi, params: PhysParams):
    """Leading-order eigenvalues (mu0, mu_lead, lam_lead, lam_lead_conj).

    mu0 = -nu |xi|^2 exactly; mu_lead is the symbol of the limit diffusion
    operator (remainder O(eps^2)); the wave pair is
    -tau(xi)|xi|^2 +- i |xi|_F/(eps F |xi|) (remainder O(eps)).  The
    remainders have no closed form; only their scaling is checked.
    """
    x = np.asarray(xi, dtype=float)
    x1, x2, x3 = x
    n2 = x @ x
    if n2 == 0.0:
        raise ValueError("xi must be nonzero")
    eps, F = params.epsilon, params.froude_F
    nu, nup = params.nu, params.nu_prime
    xiF2 = x1 ** 2 + x2 ** 2 + F ** 2 * x3 ** 2
    S = nu * (x1 ** 2 + x2 ** 2) + nup * F ** 2 * x3 ** 2
    mu0 = -nu * n2
    mu_lead = -S * n2 / xiF2
    tau = slow_diffusion_rate(x[None, :], params)[0]
    om = np.sqrt(xiF2) / (eps * F * np.sqrt(n2))
    lam = -tau * n2 + 1j * om
    return mu0, mu_lead, lam, np.conj(lam)


@dataclass
class ModeEigen:
    """Eigenstructure of a single mode restricted to divergence-free data."""

    xi: np.ndarray
    eigenvalues: tuple[complex, complex, complex, complex]  # (mu0, mu, lam, conj)
    vectors: np.ndarray          # (4, 3) lifted right eigenvectors (mu, lam, conj)
    projector_in: np.ndarray     # (3, 4) rows q_i: P_i f = vectors[:, i] * (q_i . f)
    condition: float
    well_separated: bool

    def projector(self, i: int) -> np.ndarray:
        """Rank-1 spectral projector (4x4) for i in {2, 3, 4}."""
        col = {2: 0, 3: 1, 4: 2}[i]
        return np.outer(self.vectors[:, col], self.projector_in[col])


def _eigen_batch(xis: np.ndarray, params: PhysParams):
    """Batched eigen-structure on the divergence-free restriction.

    Returns dict with eigenvalues (mu, lam, lamc), lifted eigenvector
    columns p_i (m,4), input rows q_i (m,4), condition numbers, flags.
    """
    m = xis.shape[0]
    B = _penalized_matrix_batch(xis, params)
    Q = _divfree_basis_batch(xis)
    B3 = np.einsum("mia,mij,mjb->mab", Q, B, Q)
    w, V = np.linalg.eig(B3.astype(complex))

    # order: slow real mode first, then the wave pair (Im > 0 first)
    order = np.argsort(np.abs(w.imag), axis=1)
    idx_mu = order[:, 0]
    idx_a = order[:, 1]
    idx_b = order[:, 2]
    rows = np.arange(m)
    swap = w[rows, idx_a].imag < 0
    idx_lam = np.where(swap, idx_b, idx_a)
    idx_lamc = np.where(swap, idx_a, idx_b)
    perm = np.stack([idx_mu, idx_lam, idx_lamc], axis=1)
    w = np.take_along_axis(w, perm, axis=1)
    V = np.take_along_axis(V, perm[:, None, :], axis=2)

    cond = np.linalg.cond(V)
    ok = np.isfinite(cond) & (cond < COND_LIMIT)
    # separation: the pair must be genuinely complex and away from the slow mode
    scale = np.max(np.abs(w), axis=1)
    gap = np.minimum(np.abs(w[:, 1] - w[:, 0]), np.abs(w[:, 1] - w[:, 2]))
    well = ok & (gap > 1e-9 * scale) & (np.abs(w[:, 1].imag) > 1e-9 * scale)

    Vinv = np.full_like(V, np.nan)
    if np.any(ok):
        Vinv[ok] = np.linalg.inv(V[ok])
    p = np.einsum("mij,mjk->mik", Q.astype(complex), V)      # lifted columns (m,4,3)
    q = np.einsum("mkj,mij->mki", Vinv, Q.astype(complex))   # rows against full vectors (m,3,4)
    return {"B": B, "w": w, "p": p, "q": q, "cond": cond, "ok": ok, "well": well}


def exact_eigen(xi, params: PhysParams) -> ModeEigen:
    """Eigen-decomposition at a single mode (divergence-free restriction).

    Eigenvalue matching: mu0 is reported by its exact closed form
    -nu |xi|^2 (its eigenvector is not divergence-free and is discarded);
    the wave pair is the conjugate pair with the largest |Im|; mu is the
    remaining real one.  Degenerate or ill-conditioned modes are flagged
    well_separated=False, never fatal.
    """
    x = np.asarray(xi, dtype=float)
    out = _eigen_batch(x[None, :], params)
    w = out["w"][0]
    mu0 = complex(-params.nu * float(x @ x))
    return ModeEigen(
        xi=x,
        eigenvalues=(mu0, complex(w[0]), complex(w[1]), complex(w[2])),
        vectors=out["p"][0],
        projector_in=out["q"][0],
        condition=float(out["cond"][0]),
        well_separated=bool(out["well"][0]),
    )


class EigenTable:
    """Precomputed per-mode eigenstructure for a whole grid.

    Immutable once built; shared freely.  Flagged (non-diagonalizable or
    ill-conditioned) modes have their projector factors zeroed; applying a
    projector to a field with content there raises, listing the modes.
    """

    def __init__(self, grid: Grid, params: PhysParams):
        self.grid = grid
        self.params = params
        K1, K2, K3 = grid.K
        xis = np.stack([K1.ravel(), K2.ravel(), K3.ravel()], axis=1)
        self.nonzero = np.linalg.norm(xis, axis=1) > 0.0
        self._xis = xis
        out = _eigen_batch(xis[self.nonzero], params)
        nmodes = xis.shape[0]
        self.eigenvalues = np.zeros((nmodes, 3), dtype=complex)
        self.p = np.zeros((nmodes, 4, 3), dtype=complex)
        self.q = np.zeros((nmodes, 3, 4), dtype=complex)
        self.condition = np.zeros(nmodes)
        self.flagged = np.ones(nmodes, dtype=bool)
        self.eigenvalues[self.nonzero] = out["w"]
        good = np.zeros(nmodes, dtype=bool)
        good[self.nonzero] = out["well"]
        self.flagged = ~good
        cond = np.zeros(nmodes)
        cond[self.nonzero] = out["cond"]
        self.condition = cond
        p = out["p"].copy()
        q = out["q"].copy()
        bad = ~out["well"]
        p[bad] = 0.0
        q[bad] = 0.0
        self.p[self.nonzero] = p
        self.q[self.nonzero] = q

    def _apply_rank1(self, data: np.ndarray, col: int) -> np.ndarray:
        flat = data.reshape(4, -1)
        amp = np.einsum("ma,am->m", self.q[:, col, :], flat)
        out = self.p[:, :, col].T * amp[None, :]
        return out.reshape(data.shape)

    def _check_support(self, data: np.ndarray, label: str) -> None:
        flat = np.abs(data.reshape(4, -1)).max(axis=0)
        scale = flat.max()
        if scale == 0.0:
            return
        bad = self.flagged & self.nonzero & (flat > 1e-12 * scale)
        if np.any(bad):
            modes = self._xis[bad][:8]
            raise ValueError(
                f"{label}: field has support on {int(bad.sum())} modes without a "
                f"usable eigen-decomposition, e.g. {modes.tolist()}"
            )

    def project(self, f: SpectralField4, which) -> SpectralField4:
        """Apply the spectral projector for which in {2, 3, 4, '3+4'}.

        2 selects the slow vortical mode, 3/4 the individual wave modes
        (complex output), '3+4' their sum = identity minus 2 on
        divergence-free data.
        """
        self._check_support(f.data, f"project {which}")
        if which == "3+4":
            p2 = self._apply_rank1(f.data, 0)
            out = f.data - p2
            # flagged modes have no decomposition; leave nothing there
            out = out * (~self.flagged).reshape(f.grid.shape)
            return SpectralField4(f.grid, out)
        col = {2: 0, 3: 1, 4: 2}[which]
        return SpectralField4(f.grid, self._apply_rank1(f.data, col))


def project_Pi(f: SpectralField4, which, params: PhysParams, table: EigenTable | None = None) -> SpectralField4:
    """One-shot projector application (builds the table unless provided)."""
    if table is None:
        table = EigenTable(f.grid, params)
    return table.project(f, which)


def eigen_report_rows(params: PhysParams, modes: np.ndarray) -> list[dict]:
    """Tabulate exact vs leading-order eigenvalues for a list of modes."""
    rows = []
    for xi in np.atleast_2d(modes):
        me = exact_eigen(xi, params)
        mu0, mu, lam, lamc = me.eigenvalues
        mu0_l, mu_l, lam_l, _ = asymptotic_eigenvalues(xi, params)
        rows.append({
            "xi1": xi[0], "xi2": xi[1], "xi3": xi[2],
            "mu0": mu0, "mu": mu, "lambda": lam, "lambda_bar": lamc,
            "mu_lead": mu_l, "lambda_lead": lam_l,
            "gap_mu": abs(mu - mu_l), "gap_lambda": abs(lam - lam_l),
            "condition": me.condition, "well_separated": me.well_separated,
        })
    return rows
