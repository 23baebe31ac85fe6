"""Frictionless consumption-investment problem for CRRA investors.

Everything downstream (correctors, no-trade ellipsoid, simulator) consumes the
closed-form Merton solution computed here. Logarithmic utility (γ = 1) has its
own branch wherever the formulas differ rather than being taken as a limit.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import BadInput, DegenerateRegion, InfiniteValue
from ..types import MarketParams, NDArrayF64, Preferences

# α counts as singular when its smallest singular value drops below this
# fraction of the largest one
ALPHA_RCOND = 1e-12


@dataclass(frozen=True)
class MertonSolution:
    """Frictionless optimum.

    pi_m (NDArrayF64): Merton weights, shape [d].
    c_m (float): Optimal consumption per unit of wealth c_m(γ).
    v0 (float): Value coefficient c_m^{-γ}, so that v_z(z) = v0 z^{-γ}.
    alpha (NDArrayF64): (I - π 1^⊤) diag(π) σ, shape [d, d].
    alpha_cond (float): Condition number of alpha, inf if singular.
    is_log (bool): Whether γ = 1.
    """

    pi_m: NDArrayF64
    c_m: float
    v0: float
    alpha: NDArrayF64
    alpha_cond: float
    is_log: bool

    @property
    def d(self) -> int:
        return int(self.pi_m.size)


def excess_sharpe_sq(market: MarketParams) -> float:
    """Squared maximal Sharpe ratio (μ - r1)^⊤ Σ^{-1} (μ - r1)."""
    excess = market.excess
    return float(excess @ np.linalg.solve(market.cov, excess))


def consumption_rate(market: MarketParams, gamma: float, beta: float) -> float:
    """Frictionless consumption rate c_m(γ); may be nonpositive."""
    if gamma == 1.0:
        return float(beta)
    sharpe_sq = excess_sharpe_sq(market)
    return beta / gamma + (1.0 - 1.0 / gamma) * (
        market.r + sharpe_sq / (2.0 * gamma)
    )


def alpha_matrix(pi_m: NDArrayF64, sigma: NDArrayF64) -> NDArrayF64:
    """α = (I - π 1^⊤) diag(π) σ."""
    d = pi_m.size
    return (np.eye(d) - np.outer(pi_m, np.ones(d))) @ np.diag(pi_m) @ sigma


def merton_solution(
    market: MarketParams, prefs: Preferences, strict: bool = True
) -> MertonSolution:
    """Compute the frictionless Merton solution.

    Args:
        market (MarketParams): Market parameters.
        prefs (Preferences): Risk aversion and impatience.
        strict (bool): Reject a singular α. With ``strict=False`` the one
            dimensional closed forms can still be evaluated at π ∈ {0, 1},
            where the no-trade region has zero width. Default: True.

    Raises:
        InfiniteValue: If c_m(γ) ≤ 0.
        DegenerateRegion: If α is singular and ``strict`` is set.

    Returns:
        MertonSolution: The frictionless optimum.
    """
    if not isinstance(market, MarketParams) or not isinstance(prefs, Preferences):
        raise BadInput("merton_solution expects MarketParams and Preferences")
    pi_m = np.linalg.solve(market.cov, market.excess) / prefs.gamma
    c_m = consumption_rate(market, prefs.gamma, prefs.beta)
    if not c_m > 0.0:
        raise InfiniteValue(
            f"consumption rate c_m = {c_m:.6g} is not positive, value is infinite"
        )
    v0 = c_m ** (-prefs.gamma)

    alpha = alpha_matrix(pi_m, market.sigma_mat)
    singular = np.linalg.svd(alpha, compute_uv=False)
    # a scalar α = π(1-π)σ needs an absolute reference to detect π ≈ 1
    scale = np.linalg.norm(market.sigma_mat, 2) * max(1.0, float(np.max(np.abs(pi_m))))
    if singular[0] == 0.0 or singular[-1] < ALPHA_RCOND * max(singular[0], scale):
        if strict:
            raise DegenerateRegion(
                "alpha = (I - pi 1^T) diag(pi) sigma is singular: every Merton "
                "weight must be nonzero and their sum must differ from one"
            )
        alpha_cond = float("inf")
    else:
        alpha_cond = float(singular[0] / singular[-1])

    return MertonSolution(
        pi_m=pi_m,
        c_m=float(c_m),
        v0=float(v0),
        alpha=alpha,
        alpha_cond=alpha_cond,
        is_log=prefs.is_log,
    )


def crra_utility(c, gamma: float):
    """Utility U_γ(c) of a consumption rate, log(c) for γ = 1."""
    c = np.asarray(c, dtype=np.float64)
    if gamma == 1.0:
        return np.log(c)
    return c ** (1.0 - gamma) / (1.0 - gamma)


def frictionless_value(
    sol: MertonSolution, prefs: Preferences, market: MarketParams, z
):
    """Frictionless value v(z) for wealth z > 0 (scalar or array)."""
    z_arr = np.asarray(z, dtype=np.float64)
    if np.any(~(z_arr > 0.0)):
        raise BadInput("wealth z must be positive")
    if sol.is_log:
        beta = prefs.beta
        const = (market.r + excess_sharpe_sq(market) / 2.0 - beta) / beta**2
        value = np.log(beta * z_arr) / beta + const
    else:
        value = z_arr ** (1.0 - prefs.gamma) * sol.v0 / (1.0 - prefs.gamma)
    if np.ndim(value) == 0:
        return float(value)
    return value


def value_derivatives(
    sol: MertonSolution, prefs: Preferences, z: float
) -> tuple[float, float]:
    """Return (v_z, v_zz) at wealth z; both branches share v_z = v0 z^{-γ}."""
    if not z > 0.0:
        raise BadInput("wealth z must be positive")
    v_z = sol.v0 * z ** (-prefs.gamma)
    v_zz = -prefs.gamma * v_z / z
    return v_z, v_zz


def nu_exponent(
    sol: MertonSolution, prefs: Preferences, market: MarketParams, p: float
) -> float:
    """Eigenvalue ν_p of the frictionless wealth generator on z^p.

    With 𝒜u = βu - 𝓛₀u + κ u_z one has 𝒜 z^p = ν_p z^p where
    ν_p = β - p r - p π·(μ - r1) - ½ p (p - 1) |σ^⊤π|² + p c_m.
    """
    if not np.isfinite(p):
        raise BadInput("exponent p must be finite")
    pi_m = sol.pi_m
    drift = float(pi_m @ market.excess)
    var = float(np.sum((market.sigma_mat.T @ pi_m) ** 2))
    return float(
        prefs.beta
        - p * market.r
        - p * drift
        - 0.5 * p * (p - 1.0) * var
        + p * sol.c_m
    )
