"""Parameter-sweep harnesses turning the asymptotic statements into
measurable desk-scale scaling laws.

Each sweep produces an ExperimentReport: tabular rows keyed by the swept
parameter, a least-squares log-log slope with its fit residual, and full
reproducibility metadata (seed, grid, parameters, scheme, code version).
Truncation radii default to fixed values so the pure dispersive epsilon
factor is isolated; a coupled mode (radii following eps^m, eps^-M) exists
for completeness.
"""

from __future__ import annotations

import os
import tempfile
from dataclasses import dataclass, field as dc_field, asdict

import numpy as np

from . import __version__
from .grid import Grid, SpectralField4
from .params import PhysParams
from . import multipliers as mult
from . import analysis as ana
from .eigen import EigenTable, exact_eigen, asymptotic_eigenvalues
from .dynamics import (
    BlowupError,
    DataFamily,
    MatrixPropagator,
    PERunner,
    QGRunner,
    ScalarPropagator,
    TimeScheme,
    _heat_symbol,
    qg_closure_forcing,
    wave_forcing,
    wave_initial,
)


def default_horizon(nu0: float, k_mid: float) -> float:
    """min(2, 1/(nu0 k_mid^2)): the longest horizon on which the measured
    contrast is not dominated by dissipative decay of the data band."""
    if nu0 <= 0.0 or k_mid <= 0.0:
        return 2.0
    return float(min(2.0, 1.0 / (nu0 * k_mid ** 2)))


@dataclass
class SweepPlan:
    """What to sweep, on which data, and what to record."""

    kind: str                       # convergence | strichartz | eigen_accuracy | projector_smallness
    parameter: str = "epsilon"      # epsilon | gamma | resolution
    values: tuple = (0.2, 0.1, 0.05, 0.025)
    data_family: str = "mixed_theorem2"
    seed: int = 1234
    grid_n: int = 32
    box_length: float = 8.0 * np.pi
    froude_F: float = 2.0
    nu: float = 0.1
    nu_prime: float = 0.1
    m: float = 0.1
    M: float = 0.2
    C0: float = 1.0
    gamma: float = 0.02
    alpha0: float = 1.0
    delta_reg: float = 0.1
    t_end: float | None = None   # None: min(2, 1/(nu0 k_mid^2)), see default_horizon
    dt_cap: float = 0.02
    method: str = "if-rk4"
    radii: tuple | None = (0.3, 4.0)   # None -> coupled to epsilon
    band_osc: tuple = (0.75, 2.0)
    band_qg: tuple = (0.5, 1.75)
    cl_exponents: tuple = (6.0, 48.0)
    epsilon_fixed: float = 0.05     # used when the swept parameter is not epsilon

    def __post_init__(self):
        if len(self.values) < 1:
            raise ValueError("plan needs at least one value")
        vals = np.asarray(self.values, dtype=float)
        if len(vals) >= 3 and not (np.all(np.diff(np.log(vals)) < 0) or np.all(np.diff(np.log(vals)) > 0)):
            raise ValueError("sweep values must be log-monotone (log-spaced)")
        if self.t_end is None:
            # horizon rule: long enough for an O(1)-time contrast, short
            # enough that dissipation does not drown the dispersive signal
            k_mid = 0.5 * (self.band_osc[0] + self.band_osc[1])
            nu0 = min(self.nu, self.nu_prime)
            self.t_end = default_horizon(nu0, k_mid)


@dataclass
class ExperimentReport:
    rows: list
    slope: float | None
    residual: float | None
    slope_column: str
    metadata: dict = dc_field(default_factory=dict)

    def column(self, name: str) -> np.ndarray:
        return np.array([row[name] for row in self.rows], dtype=float)

    def write(self, path: str) -> None:
        """Delimiter-separated rows plus a sidecar metadata block."""
        if not self.rows:
            raise ValueError("nothing to write")
        cols = list(self.rows[0].keys())
        d = os.path.dirname(os.path.abspath(path)) or "."
        os.makedirs(d, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=d, prefix=".report-")
        with os.fdopen(fd, "w") as fh:
            fh.write("\t".join(cols) + "\n")
            for row in self.rows:
                fh.write("\t".join(_fmt(row[c]) for c in cols) + "\n")
        os.replace(tmp, path)
        meta = dict(self.metadata)
        meta["slope"] = self.slope
        meta["residual"] = self.residual
        meta["slope_column"] = self.slope_column
        fd, tmp = tempfile.mkstemp(dir=d, prefix=".meta-")
        with os.fdopen(fd, "w") as fh:
            for k in sorted(meta):
                fh.write(f"{k} = {meta[k]}\n")
        os.replace(tmp, path + ".meta")


def _fmt(v) -> str:
    if isinstance(v, bool):
        return str(v)
    if isinstance(v, float):
        return f"{v:.17e}"
    return str(v)


def fit_loglog(x, y) -> tuple[float, float]:
    """Least-squares slope of log10 y against log10 x and the rms residual
    (log10 units).  The slope is the epsilon-exponent: positive means decay
    as the parameter decreases."""
    lx = np.log10(np.asarray(x, dtype=float))
    ly = np.log10(np.asarray(y, dtype=float))
    A = np.stack([lx, np.ones_like(lx)], axis=1)
    coef, *_ = np.linalg.lstsq(A, ly, rcond=None)
    resid = float(np.sqrt(np.mean((ly - A @ coef) ** 2)))
    return float(coef[0]), resid


def _fit_column(rows, xcol, ycol):
    ok = [r for r in rows if np.isfinite(r.get(ycol, np.nan)) and r[ycol] > 0]
    if len(ok) < 3:
        return None, None
    return fit_loglog([r[xcol] for r in ok], [r[ycol] for r in ok])


def _metadata(plan: SweepPlan, extra: dict | None = None) -> dict:
    meta = {f"plan.{k}": v for k, v in asdict(plan).items()}
    meta["code_version"] = __version__
    if extra:
        meta.update(extra)
    return meta


def _plan_params(plan: SweepPlan, epsilon: float) -> PhysParams:
    return PhysParams(epsilon, plan.froude_F, plan.nu, plan.nu_prime, plan.m, plan.M)


def _plan_radii(plan: SweepPlan, params: PhysParams) -> tuple[float, float]:
    return plan.radii if plan.radii is not None else (params.r_eps, params.R_eps)


# ---------------------------------------------------------------------------
# convergence of the penalized system toward the limit

def _convergence_point(plan: SweepPlan, grid: Grid, family: DataFamily,
                       epsilon: float, gamma: float | None = None) -> dict:
    params = _plan_params(plan, epsilon)
    parts = (family.at_epsilon(epsilon) if gamma is None
             else DataFamily(plan.data_family, grid, params, plan.seed, C0=plan.C0,
                             gamma=gamma, alpha0=plan.alpha0, delta_reg=plan.delta_reg,
                             band_qg=plan.band_qg, band_osc=plan.band_osc).at_epsilon(epsilon))
    dt = min(plan.dt_cap, epsilon / 6.0)
    nsteps = int(np.ceil(plan.t_end / dt))
    dt = plan.t_end / nsteps
    scheme = TimeScheme(dt=dt, t_end=plan.t_end, method=plan.method)

    variant = "full" if params.nu == params.nu_prime else "truncated"
    table = EigenTable(grid, params) if variant == "truncated" else None
    radii = _plan_radii(plan, params)

    pe = PERunner(grid, params, scheme)
    qg = QGRunner(grid, params, scheme, formulation="velocity")
    Ew = pe.prop  # same linear operator for the wave system

    U = parts["U0"].data.copy()
    Q = parts["U0_qg_tilde"].data.copy()
    W = wave_initial(parts["U0_osc"], params, variant, table, radii)

    def forcing(Qdata):
        gb, gl = qg_closure_forcing(SpectralField4(grid, Qdata), params, check_tol=None)
        return wave_forcing(gb, gl, params, variant, table, radii)

    f_prev = forcing(Q)
    sup_d_l2 = sup_d_hhalf = 0.0
    diff_linf = []
    hs32_sq = []

    def sample():
        nonlocal sup_d_l2, sup_d_hhalf
        d = U - Q - W
        sup_d_l2 = max(sup_d_l2, ana.sobolev_norm_data(grid, d, 0.0))
        sup_d_hhalf = max(sup_d_hhalf, ana.sobolev_norm_data(grid, d, 0.5))
        hs32_sq.append(ana.sobolev_norm_data(grid, d, 1.5) ** 2)
        diff_linf.append(ana.lebesgue_norm(U - Q, np.inf, grid))

    sample()
    for n in range(nsteps):
        U = pe.step(U)
        Q = qg.step(Q)
        f_next = forcing(Q)
        W = Ew.apply(W) + (dt / 2.0) * (Ew.apply(f_prev) + f_next)
        f_prev = f_next
        sample()

    e_half = float(np.sqrt(sup_d_hhalf ** 2
                           + params.nu0 * np.trapezoid(np.array(hs32_sq), dx=dt)))
    l2t_linf = float(np.sqrt(np.trapezoid(np.array(diff_linf) ** 2, dx=dt)))
    return {
        "sup_delta_L2": sup_d_l2,
        "sup_delta_Hhalf": sup_d_hhalf,
        "delta_E_half": e_half,
        "UminusQG_L2tLinf": l2t_linf,
        "dt": dt,
        "blown_up": False,
    }


def convergence_sweep(plan: SweepPlan) -> ExperimentReport:
    """Sweep the Rossby number (or gamma/resolution) and measure how the
    filtered error field shrinks; fits the log-log slope of sup_t ||.||_{L^2}."""
    rows = []
    grid = Grid(plan.grid_n, plan.grid_n, plan.grid_n, plan.box_length)
    params0 = _plan_params(plan, plan.values[0] if plan.parameter == "epsilon" else plan.epsilon_fixed)
    family = DataFamily(plan.data_family, grid, params0, plan.seed, C0=plan.C0,
                        gamma=plan.gamma, alpha0=plan.alpha0, delta_reg=plan.delta_reg,
                        band_qg=plan.band_qg, band_osc=plan.band_osc)
    for v in plan.values:
        if plan.parameter == "epsilon":
            eps, gam, g, fam = v, None, grid, family
        elif plan.parameter == "gamma":
            eps, gam, g, fam = plan.epsilon_fixed, float(v), grid, family
        elif plan.parameter == "resolution":
            g = Grid(int(v), int(v), int(v), plan.box_length)
            fam = DataFamily(plan.data_family, g, params0, plan.seed, C0=plan.C0,
                             gamma=plan.gamma, alpha0=plan.alpha0, delta_reg=plan.delta_reg,
                             band_qg=plan.band_qg, band_osc=plan.band_osc)
            eps, gam = plan.epsilon_fixed, None
        else:
            raise ValueError(f"unknown sweep parameter {plan.parameter!r}")
        row = {"param": float(v), "epsilon": eps}
        try:
            row.update(_convergence_point(plan, g, fam, eps, gamma=gam))
        except BlowupError as exc:
            row.update({"sup_delta_L2": np.nan, "sup_delta_Hhalf": np.nan,
                        "delta_E_half": np.nan, "UminusQG_L2tLinf": np.nan,
                        "dt": np.nan, "blown_up": True, "blowup_t": exc.t})
        row["log10_param"] = float(np.log10(v))
        row["log10_sup_delta_L2"] = float(np.log10(row["sup_delta_L2"])) if row["sup_delta_L2"] > 0 else np.nan
        rows.append(row)
    slope, resid = _fit_column(rows, "param", "sup_delta_L2")
    return ExperimentReport(rows, slope, resid, "sup_delta_L2", _metadata(plan))


# ---------------------------------------------------------------------------
# dispersive decay of the wave part (linear solves)

def _strichartz_point(plan: SweepPlan, grid: Grid, epsilon: float,
                      osc0: SpectralField4, qg0: SpectralField4) -> dict:
    params = _plan_params(plan, epsilon)
    r, R = _plan_radii(plan, params)
    table = EigenTable(grid, params)
    dt = min(plan.dt_cap, epsilon / 8.0)
    nsteps = int(np.ceil(plan.t_end / dt))
    dt = plan.t_end / nsteps
    prop = MatrixPropagator(grid, params, dt)
    heat = ScalarPropagator(dt * _heat_symbol(grid, params))

    wave0 = table.project(mult.freq_truncate(osc0, r, R), "3+4").data
    ctrl0 = mult.freq_truncate(qg0, r, R).data

    jmin, jmax = mult.lp_resolved_range(grid)
    scale = np.abs(wave0).max()
    active = [j for j in range(jmin, jmax + 1)
              if np.any((np.abs(wave0) * mult.dyadic_block_symbol(grid, j)) > 1e-13 * scale)]

    wave, ctrl, nod = wave0.copy(), ctrl0.copy(), wave0.copy()
    sup_w, sup_c, sup_n = [], [], []
    cl_series: dict[float, dict[int, list]] = {rr: {j: [] for j in active} for rr in plan.cl_exponents}
    block_syms = {j: mult.dyadic_block_symbol(grid, j) for j in active}
    cell = grid.cell_volume

    def record():
        sup_w.append(ana.lebesgue_norm(wave, np.inf, grid))
        sup_c.append(ana.lebesgue_norm(ctrl, np.inf, grid))
        sup_n.append(ana.lebesgue_norm(nod, np.inf, grid))
        for j in active:
            mag = ana._phys_magnitude(grid, wave * block_syms[j])
            for rr in plan.cl_exponents:
                cl_series[rr][j].append(float((cell * np.sum(mag ** rr)) ** (1.0 / rr)))

    record()
    for n in range(nsteps):
        wave = prop.apply(wave)
        ctrl = prop.apply(ctrl)
        nod = heat.apply(nod)
        record()

    def l2t(series):
        return float(np.sqrt(np.trapezoid(np.array(series) ** 2, dx=dt)))

    row = {
        "wave_L2tLinf": l2t(sup_w),
        "qg_control_L2tLinf": l2t(sup_c),
        "no_dispersion_L2tLinf": l2t(sup_n),
        "dt": dt,
    }
    for rr in plan.cl_exponents:
        vals = np.array([_l2_time(cl_series[rr][j], dt) for j in active])
        row[f"wave_CL2_B0_{int(rr)}_2"] = float(np.sqrt(np.sum(vals ** 2)))
    return row


def _l2_time(series, dt):
    return np.sqrt(np.trapezoid(np.array(series) ** 2, dx=dt))


def strichartz_sweep(plan: SweepPlan) -> ExperimentReport:
    """Linear oscillatory solves at fixed truncation radii: epsilon-decay of
    the wave pair in L^2_t L^infty, with a quasi-geostrophic control (no
    decay) and a no-dispersion control (penalization off).

    The data are coherent phase-aligned packets: in a periodic box the only
    measurable dispersive signal is the loss of phase coherence, so
    random-phase profiles would show no decay at all.
    """
    grid = Grid(plan.grid_n, plan.grid_n, plan.grid_n, plan.box_length)
    params0 = _plan_params(plan, plan.values[0])
    from .dynamics import coherent_packet
    osc0 = coherent_packet(grid, params0, band=plan.band_osc, kind="osc",
                           delta_reg=plan.delta_reg)
    qg0 = coherent_packet(grid, params0, band=plan.band_qg, kind="qg",
                          delta_reg=plan.delta_reg)
    rows = []
    for eps in plan.values:
        row = {"param": float(eps), "epsilon": float(eps)}
        row.update(_strichartz_point(plan, grid, float(eps), osc0, qg0))
        row["log10_param"] = float(np.log10(eps))
        row["log10_wave_L2tLinf"] = float(np.log10(row["wave_L2tLinf"]))
        rows.append(row)
    slope, resid = _fit_column(rows, "param", "wave_L2tLinf")
    ctrl_slope, ctrl_resid = _fit_column(rows, "param", "qg_control_L2tLinf")
    nod_slope, _ = _fit_column(rows, "param", "no_dispersion_L2tLinf")
    meta = _metadata(plan, {"control_slope": ctrl_slope, "control_residual": ctrl_resid,
                            "no_dispersion_slope": nod_slope})
    if plan.radii is None:
        # coupled radii fold their epsilon powers into the decay: at p = 2
        # the predicted composite exponent is 1/4 - 4M - (5/2 + 2/p) m
        meta["predicted_composite_exponent"] = 0.25 - 4.0 * plan.M - 3.5 * plan.m
    return ExperimentReport(rows, slope, resid, "wave_L2tLinf", meta)


# ---------------------------------------------------------------------------
# eigenvalue-asymptotics accuracy

def _eigen_gap(xi, params: PhysParams) -> tuple[float, float]:
    me = exact_eigen(xi, params)
    _, mu_l, lam_l, _ = asymptotic_eigenvalues(xi, params)
    return abs(me.eigenvalues[1] - mu_l), abs(me.eigenvalues[2] - lam_l)


def eigen_accuracy_sweep(plan: SweepPlan) -> ExperimentReport:
    """Gaps between exact and leading-order eigenvalues: epsilon-scaling at
    fixed modes (fit on the median gap) plus the |xi|-exponent at fixed
    epsilon from a dyadic mode family."""
    rng = np.random.default_rng(plan.seed)
    modes = rng.normal(size=(24, 3))
    modes /= np.linalg.norm(modes, axis=1)[:, None]
    modes *= rng.uniform(0.5, 3.0, size=(24, 1))
    rows = []
    for eps in plan.values:
        params = _plan_params(plan, float(eps))
        gaps = np.array([_eigen_gap(xi, params) for xi in modes])
        rows.append({
            "param": float(eps), "epsilon": float(eps),
            "gap_mu_median": float(np.median(gaps[:, 0])),
            "gap_lambda_median": float(np.median(gaps[:, 1])),
            "log10_param": float(np.log10(eps)),
            "log10_gap_lambda_median": float(np.log10(np.median(gaps[:, 1]))),
        })
    slope_lam, resid_lam = _fit_column(rows, "param", "gap_lambda_median")
    slope_mu, resid_mu = _fit_column(rows, "param", "gap_mu_median")

    # |xi|-scaling at the middle epsilon, along a fixed direction
    params = _plan_params(plan, float(plan.values[len(plan.values) // 2]))
    direction = np.array([1.0, 0.5, 0.75])
    direction /= np.linalg.norm(direction)
    scales = np.array([0.5, 1.0, 2.0, 4.0])
    gaps = np.array([_eigen_gap(s * direction, params) for s in scales])
    xi_slope_lam, _ = fit_loglog(scales, gaps[:, 1])
    xi_slope_mu, _ = fit_loglog(scales, gaps[:, 0])

    meta = _metadata(plan, {
        "slope_mu": slope_mu, "residual_mu": resid_mu,
        "xi_exponent_lambda": xi_slope_lam, "xi_exponent_mu": xi_slope_mu,
    })
    return ExperimentReport(rows, slope_lam, resid_lam, "gap_lambda_median", meta)


# ---------------------------------------------------------------------------
# smallness of the slow-mode projection on vorticity-free fields

def projector_smallness_sweep(plan: SweepPlan) -> ExperimentReport:
    """Ratio ||P_2 f|| / ||f|| on truncated divergence-free fields with zero
    potential vorticity (target: linear in epsilon at fixed radii) against
    a control with nonzero potential vorticity (no decay)."""
    grid = Grid(plan.grid_n, plan.grid_n, plan.grid_n, plan.box_length)
    params0 = _plan_params(plan, plan.values[0])
    rng = np.random.default_rng(plan.seed)
    r_osc, r_qg = rng.spawn(2)
    from .dynamics import osc_random_field, qg_random_field
    r, R = _plan_radii(plan, params0)
    f_osc = mult.freq_truncate(osc_random_field(grid, params0, r_osc, band=plan.band_osc), r, R)
    f_qg = mult.freq_truncate(qg_random_field(grid, params0, r_qg, band=plan.band_qg), r, R)
    rows = []
    for eps in plan.values:
        params = _plan_params(plan, float(eps))
        table = EigenTable(grid, params)
        ratio = (ana.sobolev_norm(table.project(f_osc, 2), 0.0)
                 / ana.sobolev_norm(f_osc, 0.0))
        ratio_ctrl = (ana.sobolev_norm(table.project(f_qg, 2), 0.0)
                      / ana.sobolev_norm(f_qg, 0.0))
        rows.append({
            "param": float(eps), "epsilon": float(eps),
            "ratio_pvfree": float(ratio), "ratio_control": float(ratio_ctrl),
            "log10_param": float(np.log10(eps)),
            "log10_ratio_pvfree": float(np.log10(ratio)) if ratio > 0 else np.nan,
        })
    slope, resid = _fit_column(rows, "param", "ratio_pvfree")
    ctrl_slope, ctrl_resid = _fit_column(rows, "param", "ratio_control")
    meta = _metadata(plan, {"control_slope": ctrl_slope, "control_residual": ctrl_resid})
    return ExperimentReport(rows, slope, resid, "ratio_pvfree", meta)


SWEEPS = {
    "convergence": convergence_sweep,
    "strichartz": strichartz_sweep,
    "eigen_accuracy": eigen_accuracy_sweep,
    "projector_smallness": projector_smallness_sweep,
}


def run_sweep(plan: SweepPlan) -> ExperimentReport:
    try:
        fn = SWEEPS[plan.kind]
    except KeyError:
        raise ValueError(f"unknown sweep kind {plan.kind!r}") from None
    return fn(plan)
