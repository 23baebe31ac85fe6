"""Monte Carlo evaluation of the almost-optimal fixed-cost policy.

Each path evolves the safe position with an Euler step and every risky
position with its exact log-normal factor, consumes c_m Z, and trades back to
the Merton weights when the grid-monitored weights leave the no-trade region.
When wealth drops to ηλ the path liquidates its risky holdings and consumes
half the interest on the remaining safe position.

Two welfare-loss estimators are reported. Every path carries a frictionless
shadow portfolio driven by the same increments, and the paired difference of
the two discounted utilities estimates the loss directly. Every path also
accrues the value the policy gives up:

    - ½|v_zz| Z² dev^⊤Σdev per unit time spent off π,
    - v(Z) - v(Z - λ) at each trade,
    - v(Z) minus the liquidation tail when it liquidates.

By Itô's formula the accrued loss differs from the paired difference under the
frictionless_value tail by a martingale plus a time-step error, so it has the
same mean without the path noise of order λ^{1/4}. It always measures the loss
against receiving v(Z_T) at the horizon, whatever the tail mode.
"""
from __future__ import annotations

import math
import multiprocessing
import os
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np
from tqdm import tqdm

from ..errors import BadInput, DimensionError, InfiniteValue, Insolvent, NoConvergence
from ..solver.ellipsoid import NoTradeEllipsoid, ellipsoid_solution
from ..solver.merton import (
    MertonSolution,
    crra_utility,
    frictionless_value,
    merton_solution,
    nu_exponent,
)
from ..solver.policy import outside_region, rebalance_positions, tracking_loss_rate
from ..types import MarketParams, NDArrayF64, Preferences, SimConfig, TailMode
from ..utils import Timer, setup_logger
from .rng import CHUNK_STEPS, PathNoise

logger = setup_logger()

# largest default step: ten steps per trading day
MAX_DT = 1.0 / 2520.0
# default grid resolves the mean time between trades with this many steps
STEPS_PER_TRADE = 50
# default horizon truncates once the discount factor falls below this
DISCOUNT_CUTOFF = 1e-4


@dataclass(frozen=True)
class SimGrid:
    """Time grid of a run: step, number of steps and horizon n_steps·dt."""

    dt: float
    n_steps: int
    horizon: float


@dataclass(frozen=True)
class PathTrace:
    """Recorded trajectory of a single path.

    times (NDArrayF64): Grid times t_0..t_n, shape [n + 1].
    x (NDArrayF64): Safe position after any trade at each time, shape [n + 1].
    y (NDArrayF64): Risky positions after any trade, shape [n + 1, d].
    x_pre (NDArrayF64): Safe position before trading at t_1..t_n, shape [n].
    y_pre (NDArrayF64): Risky positions before trading, shape [n, d].
    trade_steps (List[int]): Grid indices at which a trade occurred.
    """

    times: NDArrayF64
    x: NDArrayF64
    y: NDArrayF64
    x_pre: NDArrayF64
    y_pre: NDArrayF64
    trade_steps: List[int]


@dataclass(frozen=True)
class PathOutcome:
    """Result of one simulated path."""

    utility: float
    n_trades: int
    liquidated: bool
    z_T: float
    frictionless_utility: float
    accrued_loss: float
    trace: Optional[PathTrace] = None


@dataclass(frozen=True)
class SimResult:
    """Monte Carlo welfare and trading statistics.

    j_hat (float): Mean discounted utility of the policy.
    stderr (float): Standard error of j_hat.
    welfare_loss (float): Paired estimate of v(z0) - J, the mean of the
        frictionless minus the policy utility along the same noise.
    loss_stderr (float): Standard error of welfare_loss.
    welfare_loss_raw (float): v(z0) - j_hat.
    accrued_loss (float): Mean accrued loss, see the module docstring.
    accrued_stderr (float): Standard error of accrued_loss.
    trades_per_year (float): Mean number of rebalancing trades per year.
    liquidation_fraction (float): Share of paths that hit ηλ.
    n_paths_effective (int): Number of paths in the estimates.
    """

    j_hat: float
    stderr: float
    welfare_loss: float
    loss_stderr: float
    welfare_loss_raw: float
    accrued_loss: float
    accrued_stderr: float
    trades_per_year: float
    liquidation_fraction: float
    n_paths_effective: int
    dt: float
    horizon: float
    path_utilities: NDArrayF64 = field(repr=False)
    path_frictionless: NDArrayF64 = field(repr=False)
    path_accrued: NDArrayF64 = field(repr=False)
    path_trades: NDArrayF64 = field(repr=False)
    path_liquidated: NDArrayF64 = field(repr=False)
    path_z_T: NDArrayF64 = field(repr=False)


@dataclass(frozen=True)
class _Context:
    """Everything a worker needs to simulate a batch of paths."""

    cfg: SimConfig
    sol: MertonSolution
    M: NDArrayF64
    grid: SimGrid


def liquidation_tail_utility(
    prefs: Preferences,
    market: MarketParams,
    x_after,
    horizon: Optional[float] = None,
):
    """Utility of liquidating and then consuming half the interest.

    Consuming (r/2) X keeps X_t = x e^{rt/2}, so c_t = (r/2) x e^{rt/2}. Over
    an unbounded horizon the tail is U((r/2)x) / ρ with ρ = β - (1-γ)r/2, or
    log((r/2)x)/β + r/(2β²) for logarithmic utility. A finite ``horizon`` s
    stops consumption after s years: U((r/2)x)(1 - e^{-ρs})/ρ, or
    log((r/2)x)(1 - e^{-βs})/β + r(1 - (1 + βs)e^{-βs})/(2β²).

    Raises:
        InfiniteValue: If the horizon is unbounded and ρ ≤ 0.
        BadInput: If x_after ≤ 0 or the horizon is negative.
    """
    x = np.asarray(x_after, dtype=np.float64)
    if np.any(~(x > 0.0)):
        raise BadInput("safe position after liquidation must be positive")
    if horizon is not None and not horizon >= 0.0:
        raise BadInput("remaining horizon must be nonnegative")
    r, beta, gamma = market.r, prefs.beta, prefs.gamma
    c0 = 0.5 * r * x
    if gamma == 1.0:
        if horizon is None:
            tail = np.log(c0) / beta + r / (2.0 * beta**2)
        else:
            decay = math.exp(-beta * horizon)
            tail = np.log(c0) * (1.0 - decay) / beta + r * (
                1.0 - (1.0 + beta * horizon) * decay
            ) / (2.0 * beta**2)
    else:
        rate = beta - (1.0 - gamma) * r / 2.0
        if horizon is None:
            if not rate > 0.0:
                raise InfiniteValue("beta - (1 - gamma) r / 2 must be positive")
            span = 1.0 / rate
        elif rate == 0.0:
            span = horizon
        else:
            span = -math.expm1(-rate * horizon) / rate
        tail = crra_utility(c0, gamma) * span
    if np.ndim(tail) == 0:
        return float(tail)
    return tail


def _effective_M(e: NoTradeEllipsoid, width_multiplier: float) -> NDArrayF64:
    # scaling the half-width constant by c scales the half-widths by c^{1/4}
    return e.M / math.sqrt(width_multiplier)


def default_dt(cfg: SimConfig, e: NoTradeEllipsoid) -> float:
    """min(1/2520, τ̄/50) with τ̄ = (λ/z0)^{1/2} / Tr(A M) the mean time
    a deviation started at the center needs to leave the region."""
    M = _effective_M(e, cfg.width_multiplier)
    tau = math.sqrt(cfg.lam / cfg.z0) / float(np.trace(e.A @ M))
    return min(MAX_DT, tau / STEPS_PER_TRADE)


def resolve_grid(cfg: SimConfig, e: NoTradeEllipsoid) -> SimGrid:
    """Fill in the default step and horizon of a configuration."""
    dt = cfg.dt if cfg.dt is not None else default_dt(cfg, e)
    horizon = (
        cfg.horizon
        if cfg.horizon is not None
        else math.log(1.0 / DISCOUNT_CUTOFF) / cfg.prefs.beta
    )
    n_steps = max(1, int(math.ceil(horizon / dt - 1e-9)))
    return SimGrid(dt=dt, n_steps=n_steps, horizon=n_steps * dt)


def _build_context(cfg: SimConfig) -> tuple[_Context, NoTradeEllipsoid]:
    sol = merton_solution(cfg.market, cfg.prefs)
    e = ellipsoid_solution(sol, cfg.prefs, cfg.market)
    # the deterministic tail must be finite before any path starts
    liquidation_tail_utility(cfg.prefs, cfg.market, 1.0)
    ctx = _Context(
        cfg=cfg,
        sol=sol,
        M=_effective_M(e, cfg.width_multiplier),
        grid=resolve_grid(cfg, e),
    )
    return ctx, e


def _simulate_batch(
    ctx: _Context, path_indices: Sequence[int], record: bool = False
) -> dict:
    """Simulate a batch of paths, vectorized over the batch."""
    cfg, sol, grid = ctx.cfg, ctx.sol, ctx.grid
    market, prefs = cfg.market, cfg.prefs
    n_paths, d = len(path_indices), market.d
    dt, n_steps = grid.dt, grid.n_steps
    lam, r, c_m, gamma, beta = cfg.lam, market.r, sol.c_m, prefs.gamma, prefs.beta
    pi_m, M = sol.pi_m, ctx.M
    safe_share = 1.0 - float(pi_m.sum())

    sigma_t = market.sigma_mat.T
    log_drift = (market.mu_vec - 0.5 * np.diag(market.cov)) * dt
    sqrt_dt = math.sqrt(dt)
    noise = PathNoise(cfg.seed, path_indices, d)

    def value(z):
        return np.asarray(frictionless_value(sol, prefs, market, z)).reshape(-1)

    w0 = pi_m if cfg.initial_weights is None else np.asarray(cfg.initial_weights)
    x = np.full(n_paths, cfg.z0 * (1.0 - float(np.sum(w0))))
    y = np.tile(cfg.z0 * np.asarray(w0, dtype=np.float64), (n_paths, 1))
    zf = np.full(n_paths, cfg.z0)

    alive = np.ones(n_paths, dtype=bool)
    liquidated = np.zeros(n_paths, dtype=bool)
    trades = np.zeros(n_paths, dtype=np.int64)
    utility = np.zeros(n_paths)
    futility = np.zeros(n_paths)
    accrued = np.zeros(n_paths)
    z_T = np.zeros(n_paths)

    def rebalance(x, y, t_index):
        z = x + y.sum(axis=1)
        out = alive & outside_region(z, y, pi_m, M, lam)
        if out.any():
            x[out], y[out] = rebalance_positions(z[out], pi_m, lam)
            # value given up by paying the fee
            accrued[out] += math.exp(-beta * t_index * dt) * (
                value(z[out]) - value(z[out] - lam)
            )
            trades[out] += 1
            if record and out[0]:
                trade_steps.append(t_index)
        return x, y

    trade_steps: List[int] = []
    if record:
        xs, ys, xs_pre, ys_pre = [], [], [], []
    x, y = rebalance(x, y, 0)
    if record:
        xs.append(x[0])
        ys.append(y[0].copy())

    chunk = None
    for k in range(n_steps):
        j = k % CHUNK_STEPS
        if j == 0:
            chunk = noise.next_chunk()
        disc = math.exp(-beta * k * dt)
        z = x + y.sum(axis=1)
        z_safe = np.where(alive, z, 1.0)
        utility += np.where(alive, disc * dt * crra_utility(c_m * z_safe, gamma), 0.0)
        futility += disc * dt * crra_utility(c_m * zf, gamma)
        dev = y / z_safe[:, None] - pi_m
        accrued += np.where(
            alive, disc * dt * tracking_loss_rate(sol, prefs, market, z_safe, dev), 0.0
        )

        growth = np.exp(log_drift + sqrt_dt * (chunk[:, j, :] @ sigma_t))
        x = x + (r * x - c_m * z) * dt
        y = y * growth
        xf = zf * safe_share
        zf = xf + (r * xf - c_m * zf) * dt + zf * (growth @ pi_m)

        t_next = (k + 1) * dt
        z = x + y.sum(axis=1)
        if record:
            xs_pre.append(x[0])
            ys_pre.append(y[0].copy())

        liq = alive & (z <= cfg.eta * lam)
        if liq.any():
            x_after = z[liq] - lam
            if np.any(x_after <= 0.0):
                raise Insolvent("wealth fell below the fixed cost before liquidation")
            disc_next = math.exp(-beta * t_next)
            remaining = (
                None
                if cfg.tail_mode == TailMode.FRICTIONLESS_VALUE
                else max(grid.horizon - t_next, 0.0)
            )
            utility[liq] += disc_next * np.asarray(
                liquidation_tail_utility(prefs, market, x_after, remaining)
            )
            accrued[liq] += disc_next * (
                value(z[liq]) - liquidation_tail_utility(prefs, market, x_after)
            )
            z_T[liq] = x_after * math.exp(0.5 * r * (grid.horizon - t_next))
            liquidated |= liq
            alive &= ~liq
            x[liq] = 1.0
            y[liq] = 0.0

        x, y = rebalance(x, y, k + 1)
        if record:
            xs.append(x[0])
            ys.append(y[0].copy())

    z = x + y.sum(axis=1)
    z_T[alive] = z[alive]
    if cfg.tail_mode == TailMode.FRICTIONLESS_VALUE:
        disc_T = math.exp(-beta * grid.horizon)
        if alive.any():
            utility[alive] += disc_T * value(z[alive])
        futility += disc_T * value(zf)

    out = dict(
        utility=utility,
        frictionless=futility,
        accrued=accrued,
        trades=trades,
        liquidated=liquidated,
        z_T=z_T,
    )
    if record:
        out["trace"] = PathTrace(
            times=dt * np.arange(n_steps + 1),
            x=np.asarray(xs),
            y=np.asarray(ys),
            x_pre=np.asarray(xs_pre),
            y_pre=np.asarray(ys_pre),
            trade_steps=trade_steps,
        )
    return out


def _run_batch(args) -> dict:
    ctx, indices = args
    return _simulate_batch(ctx, indices)


def simulate_path(cfg: SimConfig, path_index: int, record: bool = False) -> PathOutcome:
    """Simulate a single path of the policy.

    Args:
        cfg (SimConfig): Run configuration.
        path_index (int): Index of the path, selects its noise substream.
        record (bool): Attach the full trajectory. Default: False.
    """
    if not 0 <= path_index < 2**64:
        raise BadInput("path index must be a 64-bit unsigned integer")
    ctx, _ = _build_context(cfg)
    out = _simulate_batch(ctx, [path_index], record=record)
    return PathOutcome(
        utility=float(out["utility"][0]),
        n_trades=int(out["trades"][0]),
        liquidated=bool(out["liquidated"][0]),
        z_T=float(out["z_T"][0]),
        frictionless_utility=float(out["frictionless"][0]),
        accrued_loss=float(out["accrued"][0]),
        trace=out.get("trace"),
    )


def resolve_workers(workers: Optional[int] = None) -> int:
    """Number of simulator workers; ``NTZONE_THREADS`` caps it, 0 means auto."""
    if workers is None:
        workers = int(os.getenv("NTZONE_THREADS", "0") or 0)
    if workers < 0:
        raise BadInput("number of workers must be nonnegative")
    if workers == 0:
        workers = os.cpu_count() or 1
    return workers


def _mean_stderr(values: NDArrayF64) -> tuple[float, float]:
    n = values.size
    mean = math.fsum(values) / n
    if n < 2:
        return mean, 0.0
    var = math.fsum((values - mean) ** 2) / (n - 1)
    return mean, math.sqrt(var / n)


def estimate_welfare(
    cfg: SimConfig,
    workers: Optional[int] = None,
    batch_size: int = 2048,
    show_progress: bool = False,
) -> SimResult:
    """Estimate expected utility and welfare loss of the policy.

    Paths are split into batches that run on ``workers`` processes. Results
    depend only on (seed, path index), never on batching or scheduling.
    """
    if batch_size < 1:
        raise BadInput("batch size must be positive")
    timer = Timer()
    ctx, _ = _build_context(cfg)
    indices = np.arange(cfg.n_paths, dtype=np.int64)
    batches = [
        (ctx, indices[i : i + batch_size]) for i in range(0, cfg.n_paths, batch_size)
    ]
    workers = min(resolve_workers(workers), len(batches))

    if workers > 1:
        with multiprocessing.Pool(workers) as pool:
            results = list(
                tqdm(
                    pool.imap(_run_batch, batches),
                    total=len(batches),
                    disable=not show_progress,
                )
            )
    else:
        results = [
            _run_batch(b) for b in tqdm(batches, disable=not show_progress)
        ]

    def gather(key: str) -> NDArrayF64:
        return np.concatenate([res[key] for res in results])

    utilities = gather("utility")
    frictionless = gather("frictionless")
    accrued = gather("accrued")
    trades = gather("trades")
    liquidated = gather("liquidated")

    j_hat, stderr = _mean_stderr(utilities)
    loss, loss_stderr = _mean_stderr(frictionless - utilities)
    accrued_loss, accrued_stderr = _mean_stderr(accrued)
    v_z0 = frictionless_value(ctx.sol, cfg.prefs, cfg.market, cfg.z0)
    result = SimResult(
        j_hat=j_hat,
        stderr=stderr,
        welfare_loss=loss,
        loss_stderr=loss_stderr,
        welfare_loss_raw=v_z0 - j_hat,
        accrued_loss=accrued_loss,
        accrued_stderr=accrued_stderr,
        trades_per_year=math.fsum(trades) / cfg.n_paths / ctx.grid.horizon,
        liquidation_fraction=float(np.count_nonzero(liquidated)) / cfg.n_paths,
        n_paths_effective=int(utilities.size),
        dt=ctx.grid.dt,
        horizon=ctx.grid.horizon,
        path_utilities=utilities,
        path_frictionless=frictionless,
        path_accrued=accrued,
        path_trades=trades,
        path_liquidated=liquidated,
        path_z_T=gather("z_T"),
    )
    logger.info(
        f"Simulating {cfg.n_paths} paths (lambda={cfg.lam:g}, dt={ctx.grid.dt:.3g}, "
        f"T={ctx.grid.horizon:.3g}) takes {timer.time():.2f} seconds."
    )
    return result


def predicted_loss(cfg: SimConfig, e: NoTradeEllipsoid, horizon: float) -> float:
    """Leading-order loss accrued over [0, T] before v(Z_T) is paid.

    λ^{1/2} u(z0) (1 - e^{-νT}) with u(z) = u₀ z^{1/2-γ} and ν = ν_{1/2-γ},
    because e^{-βt} E[Z_t^p] = z0^p e^{-ν_p t} along the frictionless wealth.
    """
    sol = merton_solution(cfg.market, cfg.prefs)
    nu = nu_exponent(sol, cfg.prefs, cfg.market, 0.5 - cfg.prefs.gamma)
    full = math.sqrt(cfg.lam) * e.u0 * cfg.z0 ** (0.5 - cfg.prefs.gamma)
    return full * -math.expm1(-nu * horizon)


@dataclass(frozen=True)
class ScalingStudy:
    """Log-log slopes of accrued loss and trade frequency against λ."""

    loss_slope: float
    trade_slope: float
    lambdas: List[float]
    results: List[SimResult]
    predicted_losses: List[float]


def _common_grid(cfg: SimConfig, e: NoTradeEllipsoid, narrowest: SimConfig) -> SimConfig:
    """Pin dt and horizon so every compared run shares the same increments."""
    grid = resolve_grid(narrowest, e)
    return cfg.replace(dt=grid.dt, horizon=grid.horizon)


def scaling_study(
    cfg: SimConfig, lambdas: Sequence[float], **kwargs
) -> ScalingStudy:
    """Run the policy over several fixed costs with common random numbers.

    The asymptotics predict a loss slope of 1/2 and a trade-frequency slope of
    -1/2 in log-log coordinates once λ/z0 is small enough that the weights
    diffuse across the region faster than they drift.
    """
    lambdas = sorted(float(lam) for lam in lambdas)
    if len(lambdas) < 3:
        raise BadInput("scaling study needs at least 3 fixed costs")
    if not lambdas[0] > 0.0 or math.log10(lambdas[-1] / lambdas[0]) < 1.5:
        raise BadInput("fixed costs must be positive and span at least 1.5 decades")
    _, e = _build_context(cfg.replace(lam=lambdas[0]))
    base = _common_grid(cfg, e, cfg.replace(lam=lambdas[0]))

    results = []
    for lam in lambdas:
        logger.info(f"Scaling study: lambda = {lam:g}")
        results.append(estimate_welfare(base.replace(lam=lam), **kwargs))

    losses = np.array([res.accrued_loss for res in results])
    rates = np.array([res.trades_per_year for res in results])
    if np.any(losses <= 0.0) or np.any(rates <= 0.0):
        raise NoConvergence(
            "nonpositive welfare loss or trade rate, increase n_paths or horizon"
        )
    log_lam = np.log(lambdas)
    predicted = [
        predicted_loss(base.replace(lam=lam), e, res.horizon)
        for lam, res in zip(lambdas, results)
    ]
    return ScalingStudy(
        loss_slope=float(np.polyfit(log_lam, np.log(losses), 1)[0]),
        trade_slope=float(np.polyfit(log_lam, np.log(rates), 1)[0]),
        lambdas=lambdas,
        results=results,
        predicted_losses=predicted,
    )


@dataclass(frozen=True)
class SweepRow:
    """One band-width multiplier of a width sweep.

    paired_diff is the mean of reference minus this run's path utilities, i.e.
    the extra loss against the multiplier closest to 1. accrued_diff is the
    same comparison made with the accrued losses.
    """

    multiplier: float
    result: SimResult
    paired_diff: float
    paired_stderr: float
    accrued_diff: float
    accrued_diff_stderr: float


def width_sweep(
    cfg: SimConfig, multipliers: Sequence[float], **kwargs
) -> List[SweepRow]:
    """Scale the half-width constant 12/γ by each multiplier and compare losses."""
    if cfg.market.d != 1:
        raise DimensionError("width sweeps are defined for one risky asset")
    multipliers = [float(c) for c in multipliers]
    if not multipliers or any(not c > 0.0 for c in multipliers):
        raise BadInput("multipliers must be positive")
    _, e = _build_context(cfg)
    base = _common_grid(cfg, e, cfg.replace(width_multiplier=min(multipliers)))

    results = []
    for c in multipliers:
        logger.info(f"Width sweep: multiplier = {c:g}")
        results.append(estimate_welfare(base.replace(width_multiplier=c), **kwargs))

    ref = results[int(np.argmin([abs(math.log(c)) for c in multipliers]))]
    rows = []
    for c, res in zip(multipliers, results):
        diff, diff_stderr = _mean_stderr(ref.path_utilities - res.path_utilities)
        acc, acc_stderr = _mean_stderr(res.path_accrued - ref.path_accrued)
        rows.append(SweepRow(c, res, diff, diff_stderr, acc, acc_stderr))
    return rows
