"""Command-line entry point: invariant checks, single runs, sweeps and
eigen reports.

Exit-code contract: 0 ok, 1 invariant failure, 2 config error, 3 runtime
blow-up.  All commands are deterministic functions of (config, seed, code
version); GEO_SEED overrides init.seed.  Output files are written
atomically and input files are never mutated.
"""

from __future__ import annotations

import argparse
import os
import sys
import tempfile

import numpy as np

from . import __version__
from .grid import (
    Grid,
    SpectralField4,
    forward_transform,
    inverse_transform,
    random_band_field,
    set_fft_workers,
)
from .params import PhysParams
from . import multipliers as mult
from . import analysis as ana
from .eigen import eigen_report_rows, exact_eigen, penalized_matrix
from . import dynamics as dyn
from .snapshots import read_snapshot, write_snapshot
from .config import ConfigError, RunConfig, load_config, load_sweep_plan
from .experiments import run_sweep


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="qgpe", description=__doc__)
    parser.add_argument("--version", action="version", version=f"qgpe {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="flat key=value config file")
    common.add_argument("--set", metavar="key=value", action="append", default=[],
                        dest="overrides", help="override a config key (repeatable)")
    common.add_argument("--out", metavar="DIR", help="output directory (overrides output.dir)")
    common.add_argument("--threads", type=int, default=1, metavar="N", help="FFT worker threads")
    common.add_argument("--verbose", action="store_true")

    sub.add_parser("check", parents=[common], help="run the invariant suite")
    sub_evolve = sub.add_parser("evolve", parents=[common], help="time-integrate one configuration")
    sub_evolve.add_argument("--resume", metavar="SNAPSHOT", help="restart from a snapshot file")
    sub_sweep = sub.add_parser("sweep", parents=[common], help="run a sweep plan")
    sub_sweep.add_argument("plan", metavar="PLAN", help="sweep plan file")
    sub_eigen = sub.add_parser("eigen-report", parents=[common],
                               help="tabulate exact vs predicted eigenvalues")
    sub_eigen.add_argument("--modes", type=int, default=12, help="number of sample modes")

    args = parser.parse_args(argv)
    set_fft_workers(args.threads)
    try:
        if args.command == "check":
            return cmd_check(args)
        if args.command == "evolve":
            return cmd_evolve(args)
        if args.command == "sweep":
            return cmd_sweep(args)
        if args.command == "eigen-report":
            return cmd_eigen_report(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except dyn.BlowupError as exc:
        print(f"blow-up: {exc}", file=sys.stderr)
        return 3
    raise AssertionError("unreachable")


def _load(args) -> RunConfig:
    cfg = load_config(args.config, args.overrides)
    seed_env = os.environ.get("GEO_SEED")
    if seed_env is not None:
        try:
            cfg.init_seed = int(seed_env)
        except ValueError:
            raise ConfigError(f"GEO_SEED must be an integer, got {seed_env!r}")
    if args.out:
        cfg.output_dir = args.out
    return cfg


# ---------------------------------------------------------------------------
# invariant suite

def _check_groups(cfg: RunConfig, verbose: bool):
    """Fast invariant checks across all modules (small grid)."""
    n = min(cfg.grid_n, 16)
    grid = Grid(n, n, n, cfg.grid_box_length)
    params = PhysParams(cfg.phys_epsilon, cfg.phys_F, cfg.phys_nu,
                        cfg.phys_nu_prime, cfg.trunc_m, cfg.trunc_M)
    rng = np.random.default_rng(cfg.init_seed)
    band = (2 * np.pi / grid.box_length, grid.kmax / 3.0)

    def rand_field():
        data = random_band_field(grid, rng, band=band, ncomp=4)
        return mult.leray_project(SpectralField4(grid, data))

    checks = []

    def add(name, value, tol):
        checks.append((name, float(value), tol, value <= tol))

    # spectral core
    phys = rng.standard_normal((4,) + grid.shape)
    f = forward_transform(grid, phys)
    back = inverse_transform(f)
    centered = phys - phys.mean(axis=(1, 2, 3), keepdims=True)
    add("core.roundtrip", np.abs(back - centered).max() / np.abs(centered).max(), 1e-12)
    l2_phys = np.sqrt(grid.cell_volume * np.sum(centered ** 2))
    l2_spec = ana.sobolev_norm(f, 0.0)
    add("core.parseval", abs(l2_phys - l2_spec) / l2_phys, 1e-12)
    mask = grid.dealias_mask
    from .grid import reflect_spectrum
    add("core.mask_symmetric", np.abs(mask ^ reflect_spectrum(mask.astype(float)).astype(bool)).max(), 0)

    # multiplier algebra
    U = rand_field()
    Q = mult.qg_project(U, params)
    P = mult.osc_project(U, params)
    scale = np.abs(U.data).max()
    add("mult.decomposition", np.abs(Q.data + P.data - U.data).max() / scale, 1e-13)
    add("mult.idempotent", np.abs(mult.qg_project(Q, params).data - Q.data).max() / scale, 1e-13)
    add("mult.annihilate", np.abs(mult.qg_project(P, params).data).max() / scale, 1e-13)
    add("mult.orthogonal", abs(np.vdot(P.data, Q.data)) / (np.linalg.norm(P.data) * np.linalg.norm(Q.data)), 1e-12)
    LQ = mult.leray_project(Q)
    add("mult.leray_qg", np.abs(LQ.data - Q.data).max() / scale, 1e-12)
    GU = mult.qg_diffusion_apply(Q, params)
    QLU = mult.qg_project(mult.diffusion_apply(Q, params), params)
    add("mult.limit_diffusion", np.abs(GU.data - QLU.data).max() / max(np.abs(GU.data).max(), 1e-30), 1e-12)
    t1 = mult.freq_truncate(mult.qg_project(U, params), 0.4, 3.0)
    t2 = mult.qg_project(mult.freq_truncate(U, 0.4, 3.0), params)
    add("mult.commute", np.abs(t1.data - t2.data).max() / scale, 1e-13)

    # eigen structure
    xis = rng.normal(size=(50, 3))
    res_max = 0.0
    for xi in xis:
        B = penalized_matrix(xi, params)
        me = exact_eigen(xi, params)
        if not me.well_separated:
            continue
        for col, lam in zip(range(3), me.eigenvalues[1:]):
            v = me.vectors[:, col]
            res_max = max(res_max, np.linalg.norm(B @ v - lam * v) / np.linalg.norm(B))
    add("eigen.residual", res_max, 1e-10)
    pe = PhysParams(params.epsilon, params.froude_F, params.nu, params.nu, params.m, params.M)
    gap = 0.0
    for xi in xis[:20]:
        me = exact_eigen(xi, pe)
        n2 = float(xi @ xi)
        xiF = np.sqrt(xi[0] ** 2 + xi[1] ** 2 + pe.froude_F ** 2 * xi[2] ** 2)
        lam = -pe.nu * n2 + 1j * xiF / (pe.epsilon * pe.froude_F * np.sqrt(n2))
        gap = max(gap, abs(me.eigenvalues[2] - lam) / abs(lam))
    add("eigen.closed_form", gap, 1e-10)

    # analysis
    jmin, jmax = mult.lp_resolved_range(grid)
    recon = np.zeros_like(U.data)
    for j in range(jmin, jmax + 1):
        recon += mult.dyadic_block(U, j).data
    add("analysis.partition", np.abs(recon - U.data).max() / scale, 1e-12)
    u = random_band_field(grid, rng, band=band, ncomp=0)
    v = random_band_field(grid, rng, band=band, ncomp=0)
    tu, tv, rr = ana.bony_split(u, v, grid)
    from .grid import dealias_data, ifftn, fftn
    prod = dealias_data(grid, fftn(ifftn(u) * ifftn(v)))
    add("analysis.bony", np.linalg.norm(tu + tv + rr - prod) / np.linalg.norm(prod), 1e-11)

    # dynamics
    prop1 = dyn.linear_propagator(U, 0.1, params, "full_pe")
    prop2 = dyn.linear_propagator(dyn.linear_propagator(U, 0.06, params, "full_pe"), 0.04, params, "full_pe")
    add("dyn.semigroup", np.abs(prop1.data - prop2.data).max() / scale, 1e-11)
    nl = dyn.nonlinear_term(U)
    ip = abs(np.vdot(nl.data, U.data)) / (np.linalg.norm(nl.data) * np.linalg.norm(U.data))
    add("dyn.energy_neutral", ip, 1e-11)

    # snapshots
    with tempfile.TemporaryDirectory() as td:
        p = os.path.join(td, "s.qgpe")
        write_snapshot(p, U, 0.25)
        f2, t2_ = read_snapshot(p)
        add("io.snapshot_roundtrip", np.abs(f2.data - U.data).max() / scale + abs(t2_ - 0.25), 1e-11)

    return checks


def cmd_check(args) -> int:
    cfg = _load(args)
    checks = _check_groups(cfg, args.verbose)
    failures = [c for c in checks if not c[3]]
    for name, value, tol, ok in checks:
        status = "PASS" if ok else "FAIL"
        print(f"{status} {name}: {value:.3e} (tol {tol:g})")
    if failures:
        print(f"{len(failures)} invariant group(s) failed", file=sys.stderr)
        return 1
    return 0


# ---------------------------------------------------------------------------
# single run

def cmd_evolve(args) -> int:
    cfg = _load(args)
    outdir = cfg.output_dir
    os.makedirs(outdir, exist_ok=True)
    grid = Grid(cfg.grid_n, cfg.grid_n, cfg.grid_n, cfg.grid_box_length)
    params = cfg.phys_params()

    if getattr(args, "resume", None):
        U0, t0 = read_snapshot(args.resume)
        grid = U0.grid
    else:
        family = dyn.DataFamily(cfg.init_kind, grid, params, cfg.init_seed,
                                gamma=cfg.init_gamma, alpha0=cfg.init_alpha0,
                                delta_reg=cfg.init_delta)
        U0 = family.at_epsilon(cfg.phys_epsilon)["U0"]
        t0 = 0.0

    write_snapshot(os.path.join(outdir, "snap_000000.qgpe"), U0, t0)
    if cfg.time_t_end <= 0:
        if args.verbose:
            print("t_end = 0: initial snapshot only")
        return 0

    scheme = dyn.TimeScheme(cfg.time_dt, cfg.time_t_end, cfg.time_method)
    nsteps = int(round(cfg.time_t_end / cfg.time_dt))
    runner = dyn.PERunner(grid, params, scheme)
    s = cfg.init_delta

    diag_path = os.path.join(outdir, "diagnostics.tsv")
    fd, tmp = tempfile.mkstemp(dir=outdir, prefix=".diag-")
    sup_hhalf = 0.0
    int_h32 = 0.0
    prev_h32sq = None
    data = U0.data.copy()
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write("t\tL2\tHs_half\tHs_half_plus_delta\tE_s_running\tCFL\n")

            def emit(t, cfl):
                nonlocal sup_hhalf, int_h32, prev_h32sq
                l2 = ana.sobolev_norm_data(grid, data, 0.0)
                hh = ana.sobolev_norm_data(grid, data, 0.5)
                hhd = ana.sobolev_norm_data(grid, data, 0.5 + s)
                h32sq = ana.sobolev_norm_data(grid, data, 1.5) ** 2
                sup_hhalf = max(sup_hhalf, hh)
                if prev_h32sq is not None:
                    int_h32 += 0.5 * cfg.time_dt * (prev_h32sq + h32sq)
                prev_h32sq = h32sq
                e_run = np.sqrt(sup_hhalf ** 2 + params.nu0 * int_h32)
                fh.write(f"{t:.17e}\t{l2:.17e}\t{hh:.17e}\t{hhd:.17e}\t{e_run:.17e}\t{cfl:.17e}\n")

            emit(t0, 0.0)
            for k in range(1, nsteps + 1):
                try:
                    data = runner.step(data)
                except dyn.BlowupError as exc:
                    report = os.path.join(outdir, "blowup.txt")
                    with open(report, "w") as rep:
                        rep.write(f"t = {t0 + k * cfg.time_dt}\nnorms = {exc.norms}\n")
                    raise
                t = t0 + k * cfg.time_dt
                emit(t, runner.cfl())
                if cfg.output_snapshot_every and k % cfg.output_snapshot_every == 0:
                    write_snapshot(os.path.join(outdir, f"snap_{k:06d}.qgpe"),
                                   SpectralField4(grid, data), t)
        os.replace(tmp, diag_path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    write_snapshot(os.path.join(outdir, f"snap_{nsteps:06d}.qgpe"),
                   SpectralField4(grid, data), t0 + cfg.time_t_end)
    if args.verbose:
        print(f"wrote {diag_path}")
    return 0


# ---------------------------------------------------------------------------
# sweeps and eigen report

def cmd_sweep(args) -> int:
    plan = load_sweep_plan(args.plan, args.overrides)
    seed_env = os.environ.get("GEO_SEED")
    if seed_env is not None:
        try:
            plan.seed = int(seed_env)
        except ValueError:
            raise ConfigError(f"GEO_SEED must be an integer, got {seed_env!r}")
    outdir = args.out or "out"
    os.makedirs(outdir, exist_ok=True)
    report = run_sweep(plan)
    path = os.path.join(outdir, f"{plan.kind}_report.tsv")
    report.write(path)
    if report.slope is None:
        print(f"{plan.kind}: slope unavailable (need >= 3 points); report at {path}")
    else:
        print(f"{plan.kind}: slope({report.slope_column}) = {report.slope:.4f} "
              f"residual = {report.residual:.4f}; report at {path}")
    return 0


def cmd_eigen_report(args) -> int:
    cfg = _load(args)
    params = cfg.phys_params()
    rng = np.random.default_rng(cfg.init_seed)
    modes = rng.normal(size=(args.modes, 3))
    modes /= np.linalg.norm(modes, axis=1)[:, None]
    modes *= rng.uniform(0.5, 4.0, size=(args.modes, 1))
    rows = eigen_report_rows(params, modes)
    header = ("xi1 xi2 xi3 mu0 mu lambda lambda_bar mu_lead lambda_lead "
              "gap_mu gap_lambda condition well_separated").split()
    lines = ["\t".join(header)]
    for r in rows:
        lines.append("\t".join(
            f"{r[h]:.6e}" if isinstance(r[h], float)
            else (f"{r[h].real:.6e}{r[h].imag:+.6e}j" if isinstance(r[h], complex) else str(r[h]))
            for h in header))
    text = "\n".join(lines) + "\n"
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        path = os.path.join(args.out, "eigen_report.tsv")
        with open(path, "w") as fh:
            fh.write(text)
        print(f"wrote {path}")
    else:
        sys.stdout.write(text)
    return 0


if __name__ == "__main__":
    sys.exit(main())
