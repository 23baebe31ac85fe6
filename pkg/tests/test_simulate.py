import math

import numpy as np
import pytest
from scipy import integrate

from ntzone.errors import BadInput, DimensionError, InfiniteValue
from ntzone.sim import (
    estimate_welfare,
    liquidation_tail_utility,
    predicted_loss,
    resolve_grid,
    resolve_workers,
    scaling_study,
    simulate_path,
    width_sweep,
)
from ntzone.sim.rng import CHUNK_STEPS, path_generator
from ntzone.solver import (
    ellipsoid_solution,
    frictionless_value,
    merton_solution,
    value_derivatives,
)
from ntzone.types import MarketParams, Preferences, SimConfig, TailMode


@pytest.fixture
def desk_cfg(desk_market, desk_prefs):
    return SimConfig(
        market=desk_market,
        prefs=desk_prefs,
        lam=1e-3,
        z0=1.0,
        dt=1.0 / 100.0,
        horizon=10.0,
        n_paths=16,
        seed=42,
    )


def test_tail_utility_power():
    market = MarketParams(r=0.02, mu=[0.06], sigma=[[0.2]])
    prefs = Preferences(gamma=2.0, beta=0.1)
    tail = liquidation_tail_utility(prefs, market, 100.0)
    assert tail == pytest.approx(-1.0 / 0.11, rel=1e-12)
    quad, _ = integrate.quad(
        lambda t: math.exp(-0.1 * t) * -1.0 / (0.01 * 100.0 * math.exp(0.01 * t)),
        0.0,
        np.inf,
        epsabs=1e-10,
    )
    assert tail == pytest.approx(quad, abs=1e-8)


def test_tail_utility_log():
    market = MarketParams(r=0.02, mu=[0.06], sigma=[[0.2]])
    prefs = Preferences(gamma=1.0, beta=0.1)
    assert liquidation_tail_utility(prefs, market, 2.0 / 0.02) == pytest.approx(
        0.02 / (2 * 0.1**2)
    )
    x = np.array([1.0, 2.0, 5.0])
    assert np.all(np.diff(liquidation_tail_utility(prefs, market, x)) > 0)


def test_tail_utility_errors():
    market = MarketParams(r=0.02, mu=[0.06], sigma=[[0.2]])
    with pytest.raises(InfiniteValue):
        liquidation_tail_utility(Preferences(gamma=0.5, beta=0.001), market, 1.0)
    with pytest.raises(BadInput):
        liquidation_tail_utility(Preferences(gamma=2.0, beta=0.1), market, 0.0)


@pytest.mark.parametrize("gamma", [1.0, 2.0, 6.0, 0.7])
@pytest.mark.parametrize("horizon", [0.5, 7.0, 60.0])
def test_tail_utility_finite_horizon(gamma, horizon):
    market = MarketParams(r=0.02, mu=[0.06], sigma=[[0.2]])
    prefs = Preferences(gamma=gamma, beta=0.05)
    x = 40.0

    def consumption_utility(t):
        c = 0.01 * x * math.exp(0.01 * t)
        u = math.log(c) if gamma == 1.0 else c ** (1.0 - gamma) / (1.0 - gamma)
        return math.exp(-0.05 * t) * u

    quad, _ = integrate.quad(
        consumption_utility, 0.0, horizon, epsabs=1e-11, epsrel=1e-12
    )
    tail = liquidation_tail_utility(prefs, market, x, horizon)
    assert tail == pytest.approx(quad, rel=1e-9, abs=1e-10)
    assert liquidation_tail_utility(prefs, market, x, 0.0) == 0.0
    full = liquidation_tail_utility(prefs, market, x)
    assert liquidation_tail_utility(prefs, market, x, 5e3) == pytest.approx(full)
    with pytest.raises(BadInput):
        liquidation_tail_utility(prefs, market, x, -1.0)


def test_tail_utility_finite_horizon_without_decay():
    market = MarketParams(r=0.02, mu=[0.06], sigma=[[0.2]])
    # β = (1 - γ) r / 2: the consumption utility stays constant in discounted terms
    prefs = Preferences(gamma=0.5, beta=0.005)
    tail = liquidation_tail_utility(prefs, market, 4.0, 3.0)
    assert tail == pytest.approx(3.0 * 2.0 * math.sqrt(0.04), rel=1e-12)


def test_default_grid(desk_market, desk_prefs):
    sol = merton_solution(desk_market, desk_prefs)
    e = ellipsoid_solution(sol, desk_prefs, desk_market)
    cfg = SimConfig(market=desk_market, prefs=desk_prefs, lam=1e-4)
    grid = resolve_grid(cfg, e)
    assert grid.dt == 1.0 / 2520.0
    assert grid.horizon >= math.log(1e4) / 0.1
    assert grid.horizon == pytest.approx(grid.n_steps * grid.dt)

    tiny = cfg.replace(lam=1e-12)
    q = 0.0625
    tau = math.sqrt(1e-12) * math.sqrt(12.0 / 2.0 * q) / e.A[0, 0]
    assert resolve_grid(tiny, e).dt == pytest.approx(tau / 50.0, rel=1e-12)


def test_config_invariants(desk_market, desk_prefs):
    base = dict(market=desk_market, prefs=desk_prefs, lam=1e-3)
    for bad in (
        dict(n_paths=0),
        dict(dt=0.0),
        dict(dt=0.1, horizon=0.05),
        dict(eta=1.5),
        dict(z0=0.0015),
        dict(seed=-1),
        dict(initial_weights=[0.5, 0.5]),
        dict(width_multiplier=0.0),
    ):
        with pytest.raises(BadInput):
            SimConfig(**base, **bad)
    cfg = SimConfig(**base)
    assert cfg.replace(n_paths=5).n_paths == 5
    assert SimConfig(market=desk_market, prefs=desk_prefs, **{"lambda": 0.1}).lam == 0.1


def test_single_path_matches_estimate(desk_cfg):
    cfg = desk_cfg.replace(n_paths=1)
    outcome = simulate_path(cfg, 0)
    res = estimate_welfare(cfg, workers=1)
    assert res.j_hat == outcome.utility
    assert res.stderr == 0.0
    assert res.n_paths_effective == 1
    assert res.trades_per_year == outcome.n_trades / res.horizon


def test_paths_are_reproducible_and_batch_independent(desk_cfg):
    small = estimate_welfare(desk_cfg.replace(n_paths=8), workers=1, batch_size=3)
    large = estimate_welfare(desk_cfg, workers=1, batch_size=5)
    np.testing.assert_array_equal(large.path_utilities[:8], small.path_utilities)
    np.testing.assert_array_equal(large.path_trades[:8], small.path_trades)
    again = estimate_welfare(desk_cfg, workers=1, batch_size=16)
    assert again.j_hat == large.j_hat
    assert again.welfare_loss == large.welfare_loss
    assert simulate_path(desk_cfg, 3).utility == large.path_utilities[3]


def test_worker_count_does_not_change_results(desk_cfg):
    serial = estimate_welfare(desk_cfg, workers=1, batch_size=4)
    parallel = estimate_welfare(desk_cfg, workers=2, batch_size=4)
    np.testing.assert_array_equal(serial.path_utilities, parallel.path_utilities)
    assert serial.j_hat == parallel.j_hat


def test_resolve_workers(monkeypatch):
    monkeypatch.setenv("NTZONE_THREADS", "3")
    assert resolve_workers() == 3
    monkeypatch.setenv("NTZONE_THREADS", "0")
    assert resolve_workers() >= 1
    assert resolve_workers(2) == 2
    with pytest.raises(BadInput):
        resolve_workers(-1)


def _replay_growth(cfg, path_index, n_steps):
    """Recreate the per-step risky growth factors of one path."""
    market = cfg.market
    g = path_generator(cfg.seed, path_index)
    n_chunks = -(-n_steps // CHUNK_STEPS)
    noise = np.concatenate(
        [g.standard_normal((CHUNK_STEPS, market.d)) for _ in range(n_chunks)]
    )[:n_steps]
    log_drift = (market.mu_vec - 0.5 * np.diag(market.cov)) * cfg.dt
    return np.exp(log_drift + math.sqrt(cfg.dt) * (noise @ market.sigma_mat.T))


def test_recorded_paths_trade_to_merton_and_balance(desk_cfg):
    cfg = desk_cfg.replace(initial_weights=[0.9], horizon=5.0)
    sol = merton_solution(cfg.market, cfg.prefs)
    for index in range(10):
        outcome = simulate_path(cfg, index, record=True)
        trace = outcome.trace
        n = trace.x_pre.size
        assert trace.trade_steps[0] == 0
        assert outcome.n_trades == len(trace.trade_steps)
        for k in trace.trade_steps:
            z = trace.x[k] + trace.y[k].sum()
            np.testing.assert_allclose(trace.y[k] / z, sol.pi_m, rtol=1e-14)
        growth = _replay_growth(cfg, index, n)
        for k in range(n):
            x, y = trace.x[k], trace.y[k]
            z = x + y.sum()
            x_next = x + (cfg.market.r * x - sol.c_m * z) * cfg.dt
            y_next = y * growth[k]
            assert trace.x_pre[k] == pytest.approx(x_next, rel=1e-10)
            np.testing.assert_allclose(trace.y_pre[k], y_next, rtol=1e-10)
            z_pre = trace.x_pre[k] + trace.y_pre[k].sum()
            pnl = cfg.market.r * x * cfg.dt + (y * (growth[k] - 1.0)).sum()
            change = pnl - sol.c_m * z * cfg.dt
            assert z_pre - z == pytest.approx(change, rel=1e-10, abs=1e-13)
            if k + 1 not in trace.trade_steps:
                assert trace.x[k + 1] == trace.x_pre[k]


def test_frictionless_limit(desk_cfg):
    cfg = desk_cfg.replace(lam=1e-12, n_paths=200, horizon=5.0)
    res = estimate_welfare(cfg, workers=1)
    sol = merton_solution(cfg.market, cfg.prefs)
    v = frictionless_value(sol, cfg.prefs, cfg.market, cfg.z0)
    assert abs(res.j_hat - v) <= 3 * res.stderr + 0.01 * abs(v)
    assert abs(res.welfare_loss) <= 3 * res.loss_stderr + 1e-4 * abs(v)
    assert 0.0 <= res.accrued_loss <= 1e-4 * abs(v)
    assert res.liquidation_fraction == 0.0


def test_desk_loss_is_significant(desk_cfg):
    # the loss grows like λ^{1/2} but its path noise only like λ^{1/4}
    res = estimate_welfare(desk_cfg.replace(lam=1e-2, n_paths=2000), workers=1)
    assert res.welfare_loss > 3 * res.loss_stderr
    assert res.stderr >= 0 and res.loss_stderr >= 0
    assert res.trades_per_year >= 0
    assert res.j_hat <= frictionless_value(
        merton_solution(desk_cfg.market, desk_cfg.prefs),
        desk_cfg.prefs,
        desk_cfg.market,
        1.0,
    ) + 3 * res.stderr


def test_accrued_loss_agrees_with_paired_estimate(desk_cfg):
    res = estimate_welfare(desk_cfg.replace(lam=1e-2, n_paths=20000), workers=1)
    assert np.all(res.path_accrued >= 0.0)
    assert res.accrued_loss > 30 * res.accrued_stderr
    # paired minus accrued is a martingale up to the time step
    gap = res.path_frictionless - res.path_utilities - res.path_accrued
    gap_stderr = gap.std(ddof=1) / math.sqrt(gap.size)
    assert abs(gap.mean()) <= 4 * gap_stderr + 0.05 * res.accrued_loss


def test_predicted_loss_counts_only_the_horizon(desk_cfg):
    sol = merton_solution(desk_cfg.market, desk_cfg.prefs)
    e = ellipsoid_solution(sol, desk_cfg.prefs, desk_cfg.market)
    cfg = desk_cfg.replace(lam=1e-4, z0=4.0)
    full = math.sqrt(1e-4) * e.u0 * 4.0**-1.5
    assert predicted_loss(cfg, e, 1e4) == pytest.approx(full, rel=1e-12)
    # the loss accrues at rate ν_{1/2-γ} = c_m(2γ) = 0.03625
    assert predicted_loss(cfg, e, 10.0) == pytest.approx(
        full * (1.0 - math.exp(-0.3625)), rel=1e-10
    )


def test_zero_tail_drops_terminal_value(desk_cfg):
    fric = estimate_welfare(desk_cfg, workers=1)
    zero = estimate_welfare(desk_cfg.replace(tail_mode=TailMode.ZERO), workers=1)
    assert np.all(zero.path_utilities > fric.path_utilities)
    np.testing.assert_array_equal(zero.path_trades, fric.path_trades)


def test_liquidation_is_recorded(desk_market, desk_prefs):
    cfg = SimConfig(
        market=desk_market,
        prefs=desk_prefs,
        lam=0.4,
        z0=1.0,
        dt=1.0 / 252.0,
        horizon=5.0,
        n_paths=200,
        seed=1,
    )
    res = estimate_welfare(cfg, workers=1)
    assert 0.0 < res.liquidation_fraction <= 1.0
    liq = res.path_liquidated
    assert np.all(np.isfinite(res.path_utilities))
    # a liquidated path keeps its safe position, grown at half the interest rate
    upper = (cfg.eta * cfg.lam - cfg.lam) * math.exp(0.5 * cfg.market.r * cfg.horizon)
    assert np.all(res.path_z_T[liq] > 0.0)
    assert np.all(res.path_z_T[liq] <= upper)


def test_zero_tail_stops_liquidation_consumption_at_horizon(desk_market, desk_prefs):
    cfg = SimConfig(
        market=desk_market,
        prefs=desk_prefs,
        lam=0.4,
        z0=1.0,
        dt=1.0 / 252.0,
        horizon=3.0,
        n_paths=200,
        seed=1,
    )
    runs = {}
    for mode in (TailMode.ZERO, TailMode.FRICTIONLESS_VALUE):
        for horizon in (3.0, 6.0):
            runs[mode, horizon] = estimate_welfare(
                cfg.replace(tail_mode=mode, horizon=horizon), workers=1
            )
    liq = runs[TailMode.ZERO, 3.0].path_liquidated
    assert liq.any()
    np.testing.assert_array_equal(runs[TailMode.ZERO, 6.0].path_liquidated[liq], True)
    short = runs[TailMode.ZERO, 3.0].path_utilities[liq]
    long = runs[TailMode.ZERO, 6.0].path_utilities[liq]
    # the longer run keeps consuming (negative utility at γ = 2) for three more years
    assert np.all(long < short)
    np.testing.assert_array_equal(
        runs[TailMode.FRICTIONLESS_VALUE, 3.0].path_utilities[liq],
        runs[TailMode.FRICTIONLESS_VALUE, 6.0].path_utilities[liq],
    )
    # the accrued loss ignores the tail mode
    np.testing.assert_array_equal(
        runs[TailMode.ZERO, 3.0].path_accrued,
        runs[TailMode.FRICTIONLESS_VALUE, 3.0].path_accrued,
    )


def test_accrued_loss_replays_recorded_path(desk_cfg):
    cfg = desk_cfg.replace(lam=1e-7, initial_weights=[0.7], horizon=4.0)
    sol = merton_solution(cfg.market, cfg.prefs)
    beta, dt = cfg.prefs.beta, cfg.dt
    for index in range(3):
        outcome = simulate_path(cfg, index, record=True)
        trace = outcome.trace
        assert len(trace.trade_steps) > 10
        expected = 0.0
        for k in range(trace.x_pre.size):
            z = trace.x[k] + trace.y[k].sum()
            dev = trace.y[k] / z - sol.pi_m
            _, v_zz = value_derivatives(sol, cfg.prefs, z)
            rate = -0.5 * v_zz * z**2 * (dev @ cfg.market.cov @ dev)
            expected += math.exp(-beta * k * dt) * dt * rate
        for k in trace.trade_steps:
            if k == 0:
                z = cfg.z0 * (1.0 - 0.7) + cfg.z0 * 0.7
            else:
                z = trace.x_pre[k - 1] + trace.y_pre[k - 1].sum()
            jump = frictionless_value(sol, cfg.prefs, cfg.market, z) - frictionless_value(
                sol, cfg.prefs, cfg.market, z - cfg.lam
            )
            expected += math.exp(-beta * k * dt) * jump
        assert outcome.accrued_loss == pytest.approx(expected, rel=1e-8)


def test_wider_regions_trade_less(desk_cfg):
    rates = [
        estimate_welfare(
            desk_cfg.replace(width_multiplier=c, n_paths=128), workers=1
        ).trades_per_year
        for c in (0.25, 1.0, 4.0)
    ]
    assert rates[0] > rates[1] > rates[2]


def test_study_guards(desk_cfg, fig2_uncorr):
    with pytest.raises(BadInput):
        scaling_study(desk_cfg, [1e-4, 1e-3])
    with pytest.raises(BadInput):
        scaling_study(desk_cfg, [1e-4, 3e-4, 1e-3])
    cfg2 = SimConfig(market=fig2_uncorr.market, prefs=fig2_uncorr.prefs, lam=1e-3)
    with pytest.raises(DimensionError):
        width_sweep(cfg2, [0.5, 1.0, 2.0])
    with pytest.raises(BadInput):
        width_sweep(desk_cfg, [0.0, 1.0])


ACCEPTANCE_LAMBDAS = [1e-5, 10**-4.5, 1e-4, 10**-3.5, 1e-3]
# λ/z0 from 1e-8 to 1e-6: the consumption drift of the weights stays small
# against their diffusion across the region and no path comes near ηλ
ACCEPTANCE_WEALTH = 1000.0
ACCEPTANCE_HORIZON = 10.0


@pytest.fixture
def acceptance_cfg(desk):
    return desk.sim_config(
        z0=ACCEPTANCE_WEALTH, n_paths=20000, horizon=ACCEPTANCE_HORIZON
    )


@pytest.mark.slow
def test_loss_scaling_acceptance(acceptance_cfg):
    study = scaling_study(acceptance_cfg, ACCEPTANCE_LAMBDAS)
    assert 0.42 <= study.loss_slope <= 0.58
    assert -0.60 <= study.trade_slope <= -0.40
    for res, predicted in zip(study.results, study.predicted_losses):
        assert res.liquidation_fraction == 0.0
        assert abs(res.accrued_loss - predicted) <= (
            3 * res.accrued_stderr + 0.15 * predicted
        )
    # the paired estimate is noisiest relative to the loss at small λ
    widest = study.results[-1]
    gap = widest.path_frictionless - widest.path_utilities - widest.path_accrued
    gap_stderr = gap.std(ddof=1) / math.sqrt(gap.size)
    assert abs(gap.mean()) <= 4 * gap_stderr + 0.05 * widest.accrued_loss


@pytest.mark.slow
def test_scaling_study_is_deterministic(acceptance_cfg):
    cfg = acceptance_cfg.replace(n_paths=2000, horizon=1.0)
    first = scaling_study(cfg, ACCEPTANCE_LAMBDAS)
    second = scaling_study(cfg, ACCEPTANCE_LAMBDAS, workers=1)
    assert first.loss_slope == second.loss_slope
    assert first.trade_slope == second.trade_slope
    for a, b in zip(first.results, second.results):
        np.testing.assert_array_equal(a.path_utilities, b.path_utilities)
        np.testing.assert_array_equal(a.path_accrued, b.path_accrued)


@pytest.mark.slow
def test_width_sweep_acceptance(acceptance_cfg):
    rows = width_sweep(acceptance_cfg.replace(lam=1e-4), [0.25, 0.5, 1.0, 2.0, 4.0])
    by_c = {row.multiplier: row for row in rows}
    for c in (0.25, 4.0):
        # c and 1/c both cost about a quarter of the optimal loss on top
        assert by_c[c].accrued_diff > 2 * by_c[c].accrued_diff_stderr
        assert by_c[c].accrued_diff > 0.1 * by_c[1.0].result.accrued_loss
    rates = [row.result.trades_per_year for row in rows]
    assert np.all(np.diff(rates) < 0)


@pytest.mark.slow
def test_flat_loss_near_optimum(acceptance_cfg):
    rows = width_sweep(acceptance_cfg.replace(lam=1e-4), [0.8, 1.0, 1.25])
    for row in rows:
        if row.multiplier != 1.0:
            # grid monitoring lets the weights overshoot the boundary a little
            assert abs(row.accrued_diff) <= 3 * row.accrued_diff_stderr + 0.03 * (
                row.result.accrued_loss
            )
