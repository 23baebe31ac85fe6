"""Command-line front end.

Usage example:
    ntzone merton config/fig1.json
    ntzone boundaries config/fig1.json --lambda 1 --wealth 5000 100000 -o out/fig1.csv
    ntzone ellipsoid config/fig2_corr.json --lambda 3.41 --wealth 50000 -o out/fig2.csv
    ntzone scaling config/desk.yaml --lambdas 1e-5 1e-4 1e-3 --paths 20000 -o out/scaling.csv

Every command that writes a table also writes ``<output>.manifest.json`` with
the config digest, seed and the list of written files. Exit codes: 0 success,
2 parse error, 3 validation error, 4 numerical failure.
"""
from __future__ import annotations

import argparse
import os
import sys
from typing import List, Optional, Sequence

import numpy as np

from . import __version__
from .errors import ConfigError, DimensionError, NTZoneError
from .io import (
    RunConfig,
    RunManifest,
    dump_paths_hdf5,
    load_config,
    write_csv,
    write_json,
)
from .sim import (
    RNG_ALGORITHM,
    estimate_welfare,
    scaling_study,
    width_sweep,
)
from .solver import (
    boundary_angles,
    boundary_points,
    consumption_rate,
    corrector_1d,
    ellipsoid_solution,
    equivalent_proportional_cost,
    max_deviations,
    merton_solution,
    trading_boundaries_1d,
    u0_from_loss_rate,
    w_1d,
)
from .types import Columns
from .utils import setup_logger

logger = setup_logger()

DEFAULT_WEALTH_RANGE = (1e3, 1e5, 41)


def _fmt(value) -> str:
    arr = np.atleast_1d(np.asarray(value, dtype=np.float64))
    cells = ", ".join("%.17g" % v for v in arr.ravel())
    return cells if np.ndim(value) == 0 else f"[{cells}]"


def _manifest_path(output: str) -> str:
    return os.path.splitext(output)[0] + ".manifest.json"


def _write_manifest(
    args: argparse.Namespace, run: RunConfig, outputs: List[str], **fields
) -> str:
    manifest = RunManifest(
        command=args.command,
        config_digest=run.digest,
        config_path=run.path,
        outputs=outputs,
        version=__version__,
        **fields,
    )
    path = manifest.write(_manifest_path(args.output))
    logger.info(f"Wrote {', '.join(outputs)} and {path}")
    return path


def _fixed_cost(args: argparse.Namespace, run: RunConfig) -> float:
    if args.lam is not None:
        return args.lam
    if "lambda" in run.simulation:
        return float(run.simulation["lambda"])
    raise ConfigError("missing key 'lambda' (pass --lambda or set simulation.lambda)")


def _wealth(args: argparse.Namespace, run: RunConfig) -> float:
    if args.wealth is not None:
        return args.wealth
    return float(run.simulation.get("z0", 1.0))


def cmd_merton(args: argparse.Namespace, run: RunConfig) -> None:
    """Print the frictionless Merton solution."""
    sol = merton_solution(run.market, run.prefs, strict=False)
    c_2g = consumption_rate(run.market, 2.0 * run.prefs.gamma, run.prefs.beta)
    print(f"pi_m = {_fmt(sol.pi_m)}")
    print(f"c_m(gamma) = {_fmt(sol.c_m)}")
    print(f"c_m(2 gamma) = {_fmt(c_2g)}")
    print(f"v0 = {_fmt(sol.v0)}")
    print(f"alpha_cond = {_fmt(sol.alpha_cond)}")


def cmd_boundaries(args: argparse.Namespace, run: RunConfig) -> None:
    """Trading boundaries and equivalent proportional cost over a wealth grid."""
    sol = merton_solution(run.market, run.prefs)
    if sol.d != 1:
        raise DimensionError(f"boundaries need one risky asset, got d = {sol.d}")
    lam = _fixed_cost(args, run)
    if args.wealth is not None:
        grid = np.asarray(args.wealth, dtype=np.float64)
    else:
        start, stop, num = args.wealth_range or DEFAULT_WEALTH_RANGE
        grid = np.geomspace(start, stop, int(num))
    pi = float(sol.pi_m[0])
    rows = []
    for z in grid:
        lower, upper = trading_boundaries_1d(sol, run.prefs, z, lam)
        eps = equivalent_proportional_cost(sol, run.prefs, z, lam)
        rows.append((z, lower, upper, pi, eps))
    header = [
        Columns.wealth,
        Columns.lower,
        Columns.upper,
        Columns.merton,
        Columns.equiv_prop_cost,
    ]
    write_csv(args.output, header, rows)
    _write_manifest(args, run, [args.output], extra={"lambda": lam})


def cmd_ellipsoid(args: argparse.Namespace, run: RunConfig) -> None:
    """Boundary polyline of the no-trade ellipsoid plus its JSON sidecar."""
    sol = merton_solution(run.market, run.prefs)
    e = ellipsoid_solution(sol, run.prefs, run.market)
    lam, z = _fixed_cost(args, run), _wealth(args, run)
    points = boundary_points(e, z, lam, args.points)
    if e.d == 2:
        header = [Columns.angle, Columns.w1, Columns.w2]
        rows = [
            (a, p[0], p[1]) for a, p in zip(boundary_angles(args.points), points)
        ]
    else:
        header = [f"w{i + 1}" for i in range(e.d)]
        rows = [tuple(p) for p in points]
    write_csv(args.output, header, rows)

    sidecar = os.path.splitext(args.output)[0] + ".ellipsoid.json"
    write_json(
        sidecar,
        {
            "M": e.M.tolist(),
            "a0_tilde": e.a0_tilde,
            "u0": e.u0,
            "residual": e.residual,
            "pi_m": e.pi_m.tolist(),
            "max_deviations": max_deviations(e, z, lam).tolist(),
            "lambda": lam,
            "wealth": z,
        },
    )
    _write_manifest(args, run, [args.output, sidecar])


def cmd_corrector(args: argparse.Namespace, run: RunConfig) -> None:
    """Profile of the one-dimensional first corrector at one wealth level."""
    sol = merton_solution(run.market, run.prefs)
    c = corrector_1d(sol, run.prefs, run.market)
    z = _wealth(args, run)
    xi0 = c.xi0(z)
    xi = np.linspace(-1.5 * xi0, 1.5 * xi0, args.points)
    w = w_1d(c, z, xi)
    write_csv(args.output, [Columns.xi, Columns.w], list(zip(xi, w)))
    coeffs = {
        "A": c.A_coef(z),
        "B": c.B_coef(z),
        "xi0": xi0,
        "a": c.a(z),
        "u0": c.u0,
        "u0_from_loss_rate": u0_from_loss_rate(sol, run.prefs, run.market),
        "wealth": z,
    }
    for key, value in coeffs.items():
        print(f"{key} = {_fmt(value)}")
    _write_manifest(args, run, [args.output], extra=coeffs)


def _sim_config(args: argparse.Namespace, run: RunConfig, lam: Optional[float]):
    overrides = {
        "lambda": lam,
        "n_paths": args.paths,
        "seed": args.seed,
        "dt": args.dt,
        "horizon": args.horizon,
    }
    return run.sim_config(**overrides)


def _study_row(key: float, res) -> tuple:
    return (
        key,
        res.welfare_loss,
        res.loss_stderr,
        res.accrued_loss,
        res.accrued_stderr,
        res.trades_per_year,
        res.liquidation_fraction,
    )


STUDY_COLUMNS = [
    Columns.loss,
    Columns.stderr,
    Columns.accrued_loss,
    Columns.accrued_stderr,
    Columns.trades_per_year,
    Columns.liq_frac,
]


def cmd_simulate(args: argparse.Namespace, run: RunConfig) -> None:
    """Monte Carlo welfare loss of the policy at one fixed cost."""
    cfg = _sim_config(args, run, args.lam)
    res = estimate_welfare(cfg, workers=args.workers, show_progress=args.progress)
    write_csv(args.output, [Columns.lam] + STUDY_COLUMNS, [_study_row(cfg.lam, res)])
    outputs = [args.output]
    if args.dump_paths:
        outputs.append(dump_paths_hdf5(args.dump_paths, res))
    _write_manifest(
        args,
        run,
        outputs,
        seed=cfg.seed,
        rng=RNG_ALGORITHM,
        dt=res.dt,
        horizon=res.horizon,
        extra={
            "j_hat": res.j_hat,
            "j_stderr": res.stderr,
            "welfare_loss_raw": res.welfare_loss_raw,
            "n_paths": res.n_paths_effective,
        },
    )


def cmd_scaling(args: argparse.Namespace, run: RunConfig) -> None:
    """Welfare loss and trade frequency over several fixed costs."""
    if not args.lambdas:
        raise ConfigError("missing key 'lambdas' (pass --lambdas)")
    cfg = _sim_config(args, run, min(args.lambdas))
    study = scaling_study(
        cfg, args.lambdas, workers=args.workers, show_progress=args.progress
    )
    rows = [
        _study_row(lam, res) + (pred,)
        for lam, res, pred in zip(study.lambdas, study.results, study.predicted_losses)
    ]
    header = [Columns.lam] + STUDY_COLUMNS + [Columns.predicted_loss]
    write_csv(args.output, header, rows)
    print(f"loss_slope = {_fmt(study.loss_slope)}")
    print(f"trade_slope = {_fmt(study.trade_slope)}")
    _write_manifest(
        args,
        run,
        [args.output],
        seed=cfg.seed,
        rng=RNG_ALGORITHM,
        dt=study.results[0].dt,
        horizon=study.results[0].horizon,
        extra={"loss_slope": study.loss_slope, "trade_slope": study.trade_slope},
    )


def cmd_sweep(args: argparse.Namespace, run: RunConfig) -> None:
    """Welfare loss over multipliers of the no-trade half-width constant."""
    if not args.multipliers:
        raise ConfigError("missing key 'multipliers' (pass --multipliers)")
    cfg = _sim_config(args, run, args.lam)
    rows_ = width_sweep(
        cfg, args.multipliers, workers=args.workers, show_progress=args.progress
    )
    rows = [
        _study_row(row.multiplier, row.result)
        + (row.paired_diff, row.paired_stderr, row.accrued_diff, row.accrued_diff_stderr)
        for row in rows_
    ]
    header = (
        [Columns.multiplier]
        + STUDY_COLUMNS
        + [Columns.paired_diff, Columns.paired_stderr]
        + [Columns.accrued_diff, Columns.accrued_diff_stderr]
    )
    write_csv(args.output, header, rows)
    _write_manifest(
        args,
        run,
        [args.output],
        seed=cfg.seed,
        rng=RNG_ALGORITHM,
        dt=rows_[0].result.dt,
        horizon=rows_[0].result.horizon,
        extra={"lambda": cfg.lam},
    )


COMMANDS = {
    "merton": cmd_merton,
    "boundaries": cmd_boundaries,
    "ellipsoid": cmd_ellipsoid,
    "corrector": cmd_corrector,
    "simulate": cmd_simulate,
    "scaling": cmd_scaling,
    "sweep": cmd_sweep,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ntzone",
        description="No-trade regions and welfare losses under small fixed costs.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument(
        "-v", "--verbose", action="store_true", help="Log debug messages."
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name: str, text: str, output: bool = True) -> argparse.ArgumentParser:
        p = sub.add_parser(name, help=text)
        p.add_argument("config", type=str, help="Path to a .json or .yaml config.")
        if output:
            p.add_argument(
                "-o",
                "--output",
                type=str,
                default=f"{name}.csv",
                help="Path of the CSV table to write.",
            )
        return p

    add("merton", "Print the frictionless Merton solution.", output=False)

    p = add("boundaries", "Trading boundaries over a wealth grid (one asset).")
    p.add_argument("--lambda", dest="lam", type=float, help="Fixed cost per trade.")
    grid = p.add_mutually_exclusive_group()
    grid.add_argument("--wealth", type=float, nargs="+", help="Wealth levels.")
    grid.add_argument(
        "--wealth-range",
        type=float,
        nargs=3,
        metavar=("START", "STOP", "NUM"),
        help="Log-spaced wealth grid.",
    )

    for name, text, points in (
        ("ellipsoid", "No-trade ellipsoid boundary in weight space.", 200),
        ("corrector", "First corrector profile of one asset.", 1001),
    ):
        p = add(name, text)
        p.add_argument("--lambda", dest="lam", type=float, help="Fixed cost per trade.")
        p.add_argument("--wealth", type=float, help="Wealth level z.")
        p.add_argument(
            "-n", "--points", type=int, default=points, help="Number of points."
        )

    for name, text in (
        ("simulate", "Monte Carlo welfare loss at one fixed cost."),
        ("scaling", "Welfare loss scaling over several fixed costs."),
        ("sweep", "Welfare loss over half-width multipliers (one asset)."),
    ):
        p = add(name, text)
        p.add_argument("--lambda", dest="lam", type=float, help="Fixed cost per trade.")
        p.add_argument("--paths", type=int, help="Number of simulated paths.")
        p.add_argument("--seed", type=int, help="Run seed.")
        p.add_argument("--dt", type=float, help="Time step in years.")
        p.add_argument("--horizon", type=float, help="Horizon T in years.")
        p.add_argument(
            "-j",
            "--workers",
            type=int,
            help="Worker processes, 0 for all cores (default: $NTZONE_THREADS).",
        )
        p.add_argument(
            "--progress", action="store_true", help="Show a progress bar."
        )
        if name == "simulate":
            p.add_argument("--dump-paths", type=str, help="HDF5 file for per-path data.")
        elif name == "scaling":
            p.add_argument("--lambdas", type=float, nargs="+", help="Fixed costs.")
        else:
            p.add_argument(
                "--multipliers", type=float, nargs="+", help="Half-width multipliers."
            )
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    if args.verbose:
        setup_logger("DEBUG")

    try:
        run = load_config(args.config)
        COMMANDS[args.command](args, run)
    except NTZoneError as e:
        logger.error(f"{type(e).__name__}: {e}")
        return e.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
