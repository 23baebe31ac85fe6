import math

import numpy as np
import pytest

from ntzone.errors import BadInput, DegenerateRegion
from ntzone.solver import (
    W_function,
    W_hessian,
    boundary_points,
    directional_extent,
    ellipsoid_solution,
    half_width_1d,
    max_deviations,
    merton_solution,
    rescaled_matrices,
    riccati_residual,
    solve_riccati,
)
from ntzone.types import MarketParams, Preferences

SWAP = np.array([[0.0, 1.0], [1.0, 0.0]])


def _solve(run):
    sol = merton_solution(run.market, run.prefs)
    return sol, ellipsoid_solution(sol, run.prefs, run.market)


def test_one_asset_riccati():
    A, Sigma = np.array([[0.0025]]), np.array([[0.04]])
    M = solve_riccati(A, Sigma, 2.0)
    assert M[0, 0] == pytest.approx(math.sqrt(2 * 0.04 / (12 * 0.0025)), rel=1e-12)
    assert M[0, 0] == pytest.approx(1.63299, abs=1e-5)
    assert M[0, 0] ** -0.5 == pytest.approx(0.78254, abs=1e-5)


def test_desk_rescaled_matrix(desk_market, desk_prefs):
    sol = merton_solution(desk_market, desk_prefs)
    A, Sigma = rescaled_matrices(sol, desk_market)
    assert A[0, 0] == pytest.approx(0.0025)
    assert Sigma[0, 0] == pytest.approx(0.04)


@pytest.mark.parametrize("name", ["fig2_uncorr", "fig2_corr", "fig3_gamma6"])
def test_figure_configs_residual(name, request):
    sol, e = _solve(request.getfixturevalue(name))
    assert e.residual <= 1e-10
    np.testing.assert_allclose(e.M, e.M.T, rtol=0, atol=0)
    assert np.all(np.linalg.eigvalsh(e.M) > 0)
    assert np.all(np.linalg.eigvalsh(e.A) > 0)
    assert e.a0_tilde > 0 and e.u0 > 0


def test_random_riccati_residuals(draw_problem):
    rng = np.random.default_rng(11)
    for k in range(1000):
        d = (2, 3, 5)[k % 3]
        market, prefs, sol = draw_problem(rng, d)
        A, Sigma = rescaled_matrices(sol, market)
        M = solve_riccati(A, Sigma, prefs.gamma)
        assert riccati_residual(M, A, Sigma, prefs.gamma) <= 1e-10
        assert np.linalg.eigvalsh(M)[0] > 0


def test_uncorrelated_figure_is_swap_symmetric(fig2_uncorr):
    sol, e = _solve(fig2_uncorr)
    assert e.A[0, 0] == pytest.approx(e.A[1, 1], rel=1e-12)
    np.testing.assert_allclose(
        SWAP @ e.M @ SWAP, e.M, rtol=1e-10, atol=1e-12 * np.abs(e.M).max()
    )
    points = boundary_points(e, 50000.0, 3.41, 360)
    # reflection across the (1,1) line through π maps boundary onto boundary
    reflected = sol.pi_m + (points - sol.pi_m) @ SWAP
    dev = reflected - sol.pi_m
    q = np.einsum("ni,ij,nj->n", dev, e.M, dev) * math.sqrt(50000.0 / 3.41)
    np.testing.assert_allclose(q, 1.0, rtol=1e-10)


def test_correlation_reshapes_region(fig2_uncorr, fig2_corr):
    _, e0 = _solve(fig2_uncorr)
    _, e1 = _solve(fig2_corr)
    z, lam = 50000.0, 3.41
    diag, anti = [1.0, 1.0], [1.0, -1.0]
    assert directional_extent(e1, z, lam, diag) < directional_extent(e0, z, lam, diag)
    assert directional_extent(e1, z, lam, anti) > directional_extent(e0, z, lam, anti)
    # the (1,1) axis of the correlated region is its short axis
    m_diag = np.dot(diag, e1.M @ diag) / 2.0
    m_anti = np.dot(anti, e1.M @ anti) / 2.0
    assert m_diag > m_anti


def test_higher_risk_aversion_narrows_region(fig2_uncorr, fig3_gamma6):
    _, e2 = _solve(fig2_uncorr)
    _, e6 = _solve(fig3_gamma6)
    z, lam = 50000.0, 3.41
    assert np.all(max_deviations(e6, z, lam) < max_deviations(e2, z, lam))


def test_figure_half_width_calibration(fig2_uncorr):
    # a single asset with the figure's parameters
    market = MarketParams(r=0.02, mu=[0.07], sigma=[[0.4]])
    prefs = fig2_uncorr.prefs
    sol1 = merton_solution(market, prefs)
    _, e = _solve(fig2_uncorr)
    z, lam = 50000.0, 3.41
    one_d = half_width_1d(sol1, prefs, z, lam)
    assert sol1.pi_m[0] == pytest.approx(5.0 / 32.0)
    assert 0.03 < one_d < 0.07
    # both assets of the uncorrelated figure deviate by the same amount
    dev = max_deviations(e, z, lam)
    assert dev[0] == pytest.approx(dev[1], rel=1e-10)


def test_boundary_points_lie_on_boundary(fig2_corr):
    sol, e = _solve(fig2_corr)
    z, lam = 50000.0, 3.41
    points = boundary_points(e, z, lam, 64)
    assert points.shape == (64, 2)
    dev = points - sol.pi_m
    q = np.einsum("ni,ij,nj->n", dev, e.M, dev) * math.sqrt(z / lam)
    np.testing.assert_allclose(q, 1.0, rtol=1e-10)


def test_boundary_points_general_dimension(draw_problem):
    market, prefs, sol = draw_problem(np.random.default_rng(5), 3)
    e = ellipsoid_solution(sol, prefs, market)
    points = boundary_points(e, 10.0, 0.01, 3)
    assert points.shape == (6, 3)
    dev = points - sol.pi_m
    q = np.einsum("ni,ij,nj->n", dev, e.M, dev) * math.sqrt(10.0 / 0.01)
    np.testing.assert_allclose(q, 1.0, rtol=1e-10)


@pytest.mark.parametrize("n,z,lam", [(2, 1.0, 0.1), (10, 0.0, 0.1), (10, 1.0, 0.0)])
def test_boundary_points_rejects_bad_input(fig2_corr, n, z, lam):
    _, e = _solve(fig2_corr)
    with pytest.raises(BadInput):
        boundary_points(e, z, lam, n)


def test_zero_weight_is_degenerate():
    market = MarketParams(r=0.02, mu=[0.02, 0.07], sigma=[[0.2, 0.0], [0.0, 0.3]])
    prefs = Preferences(gamma=2.0, beta=0.1)
    sol = merton_solution(market, prefs, strict=False)
    with pytest.raises(DegenerateRegion):
        ellipsoid_solution(sol, prefs, market)


def test_W_normalization_and_continuity(fig2_corr):
    _, e = _solve(fig2_corr)
    assert W_function(e, np.zeros(2)) == 0.0
    rng = np.random.default_rng(0)
    dirs = rng.normal(size=(100, 2))
    radii = 1.0 / np.sqrt(np.einsum("ni,ij,nj->n", dirs, e.M, dirs))
    on_boundary = dirs * radii[:, None]
    np.testing.assert_allclose(W_function(e, on_boundary), 1.0, atol=1e-12)
    values = W_function(e, dirs * rng.uniform(0, 2, size=(100, 1)) * radii[:, None])
    assert np.all((values >= 0.0) & (values <= 1.0))


def test_W_gradient_continuous_across_boundary(fig2_corr):
    _, e = _solve(fig2_corr)
    u = np.array([0.6, 0.8])
    rho_b = u / math.sqrt(u @ e.M @ u)
    h = 1e-7
    inner = (W_function(e, rho_b) - W_function(e, rho_b * (1 - h))) / h
    outer = (W_function(e, rho_b * (1 + h)) - W_function(e, rho_b)) / h
    assert abs(inner) < 1e-5
    assert abs(outer) < 1e-5


def test_rescaled_corrector_residual(fig2_corr, draw_problem):
    problems = [(fig2_corr.market, fig2_corr.prefs)]
    rng = np.random.default_rng(8)
    problems += [draw_problem(rng, d)[:2] for d in (2, 3, 5)]
    for market, prefs in problems:
        sol = merton_solution(market, prefs)
        e = ellipsoid_solution(sol, prefs, market)
        d = e.d
        # uniform samples inside 𝒥
        g = rng.normal(size=(10000 // len(problems), d))
        g /= np.linalg.norm(g, axis=1)[:, None]
        g *= rng.uniform(0, 1, size=(g.shape[0], 1)) ** (1.0 / d)
        chol = np.linalg.cholesky(e.M)
        rho = np.linalg.solve(chol.T, g.T).T
        for r in rho:
            hess = W_hessian(e, r)
            lhs = -0.5 * prefs.gamma * r @ market.cov @ r
            residual = lhs - 0.5 * np.trace(e.A @ hess) + e.a0_tilde
            scale = e.a0_tilde + abs(lhs)
            assert abs(residual) <= 1e-9 * scale


def test_W_hessian_matches_finite_difference(fig2_corr):
    _, e = _solve(fig2_corr)
    rho = np.array([0.1, -0.2]) / math.sqrt(np.array([0.1, -0.2]) @ e.M @ [0.1, -0.2])
    rho *= 0.5
    h = 1e-4
    fd = np.zeros((2, 2))
    for i in range(2):
        for j in range(2):
            ei, ej = np.eye(2)[i] * h, np.eye(2)[j] * h
            fd[i, j] = (
                W_function(e, rho + ei + ej)
                - W_function(e, rho + ei - ej)
                - W_function(e, rho - ei + ej)
                + W_function(e, rho - ei - ej)
            ) / (4 * h * h)
    np.testing.assert_allclose(fd, W_hessian(e, rho), rtol=1e-5, atol=1e-5)
