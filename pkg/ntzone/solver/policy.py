"""Almost-optimal trading policy and its headline economic quantities.

The policy consumes at the Merton rate, does nothing while the risky weights
stay inside π + (λ/z)^{1/4} 𝒥 and jumps back to π, paying λ, as soon as they
leave it. Wealth enters only through λ/z: doubling wealth acts like halving
the fixed cost.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import BadInput, DegenerateRegion, DimensionError, Insolvent
from ..types import MarketParams, NDArrayBool, NDArrayF64, Preferences
from .ellipsoid import NoTradeEllipsoid
from .merton import MertonSolution


@dataclass(frozen=True)
class PortfolioState:
    """Safe position x and risky positions y, both in currency."""

    x: float
    y: NDArrayF64

    @classmethod
    def from_weights(cls, z: float, weights) -> "PortfolioState":
        """State with total wealth z split according to risky ``weights``."""
        w = np.atleast_1d(np.asarray(weights, dtype=np.float64))
        y = w * z
        return cls(x=float(z - y.sum()), y=y)

    @property
    def z(self) -> float:
        """Total wealth x + y·1."""
        return float(self.x + np.sum(self.y))

    @property
    def weights(self) -> NDArrayF64:
        return np.asarray(self.y, dtype=np.float64) / self.z


def _pi_1d(sol: MertonSolution) -> float:
    if sol.d != 1:
        raise DimensionError(f"one risky asset required, got d = {sol.d}")
    return float(sol.pi_m[0])


def _check_wealth(z: float, lam: float) -> None:
    if not z > 0.0:
        raise BadInput("wealth z must be positive")
    if not lam >= 0.0:
        raise BadInput("fixed cost lambda must be nonnegative")


def outside_region(
    z: NDArrayF64, y: NDArrayF64, pi_m: NDArrayF64, M: NDArrayF64, lam: float
) -> NDArrayBool:
    """Trade test for a batch of states.

    Args:
        z (NDArrayF64): Total wealth of each state, shape [n].
        y (NDArrayF64): Risky positions, shape [n, d].
        pi_m (NDArrayF64): Center of the region, shape [d].
        M (NDArrayF64): Region matrix, shape [d, d].
        lam (float): Fixed cost per trade.

    Returns:
        NDArrayBool: Mask, True where (y/z - π)^⊤ M (y/z - π) is not
            below (λ/z)^{1/2}. The boundary itself triggers a trade.
    """
    dev = y / z[:, None] - pi_m
    q = np.einsum("bi,ij,bj->b", dev, M, dev)
    return ~(q < np.sqrt(lam / z))


def rebalance_positions(
    z: NDArrayF64, pi_m: NDArrayF64, lam: float
) -> tuple[NDArrayF64, NDArrayF64]:
    """Safe and risky positions after paying λ and trading to π.

    Args:
        z (NDArrayF64): Wealth before the trade, shape [n].
        pi_m (NDArrayF64): Target weights, shape [d].
        lam (float): Fixed cost per trade.

    Raises:
        Insolvent: If some wealth does not exceed the fixed cost.

    Returns:
        tuple[NDArrayF64, NDArrayF64]: x of shape [n] and y of shape [n, d].
    """
    z_after = np.asarray(z, dtype=np.float64) - lam
    if np.any(~(z_after > 0.0)):
        raise Insolvent(
            f"wealth {float(np.min(z_after)) + lam:.6g} cannot cover fixed cost {lam:.6g}"
        )
    return z_after * (1.0 - float(pi_m.sum())), z_after[..., None] * pi_m


def tracking_loss_rate(
    sol: MertonSolution,
    prefs: Preferences,
    market: MarketParams,
    z: NDArrayF64,
    dev: NDArrayF64,
) -> NDArrayF64:
    """Rate at which holding weights π + dev instead of π lowers the value drift.

    The generator gap of v between the two portfolios is exactly
    ½ |v_zz| z² dev^⊤ Σ dev = ½ γ v₀ z^{1-γ} dev^⊤ Σ dev, with dev of shape
    [n, d] and z of shape [n].
    """
    quad = np.einsum("bi,ij,bj->b", dev, market.cov, dev)
    return 0.5 * prefs.gamma * sol.v0 * np.asarray(z) ** (1.0 - prefs.gamma) * quad


def nt_contains(state: PortfolioState, e: NoTradeEllipsoid, lam: float) -> bool:
    """Whether ``state`` lies strictly inside the no-trade region.

    (y/z - π)^⊤ M (y/z - π) < (λ/z)^{1/2}; the boundary itself triggers a trade.
    """
    z = state.z
    if not z > 0.0:
        raise BadInput("wealth z must be positive")
    if not lam > 0.0:
        raise BadInput("fixed cost lambda must be positive")
    y = np.asarray(state.y, dtype=np.float64).reshape(1, -1)
    return not bool(outside_region(np.array([z]), y, e.pi_m, e.M, lam)[0])


def half_width_1d(sol: MertonSolution, prefs: Preferences, z: float, lam: float) -> float:
    """Maximal deviation (12/γ π²(1-π)² λ/z)^{1/4} of the risky weight."""
    pi = _pi_1d(sol)
    _check_wealth(z, lam)
    return (12.0 / prefs.gamma * pi**2 * (1.0 - pi) ** 2 * lam / z) ** 0.25


def trading_boundaries_1d(
    sol: MertonSolution, prefs: Preferences, z: float, lam: float
) -> tuple[float, float]:
    """Lower and upper risky-weight boundaries π ∓ half-width."""
    pi = _pi_1d(sol)
    half = half_width_1d(sol, prefs, z, lam)
    return pi - half, pi + half


def equivalent_proportional_cost(
    sol: MertonSolution, prefs: Preferences, z: float, lam: float
) -> float:
    """Proportional cost with the same leading-order region and welfare loss.

    (1024γ / (3π²(1-π)²))^{1/4} (λ/z)^{3/4}, decreasing in wealth.
    """
    pi = _pi_1d(sol)
    _check_wealth(z, lam)
    q = pi**2 * (1.0 - pi) ** 2
    if q == 0.0:
        raise DegenerateRegion("Merton weight 0 or 1, no equivalent proportional cost")
    return (1024.0 * prefs.gamma / (3.0 * q)) ** 0.25 * (lam / z) ** 0.75


def proportional_half_width(sol: MertonSolution, prefs: Preferences, eps: float) -> float:
    """Half-width (3/(2γ) π²(1-π)² ε)^{1/3} of the band for proportional cost ε."""
    pi = _pi_1d(sol)
    if not eps >= 0.0:
        raise BadInput("proportional cost must be nonnegative")
    return (1.5 / prefs.gamma * pi**2 * (1.0 - pi) ** 2 * eps) ** (1.0 / 3.0)


def quasi_fixed_boundaries(
    sol: MertonSolution, prefs: Preferences, fraction: float
) -> tuple[float, float]:
    """Boundaries for a fee equal to a constant fraction of current wealth.

    The fee κz makes λ/z constant, so the band no longer moves with wealth.
    """
    if not 0.0 <= fraction < 0.5:
        raise BadInput("fee fraction must lie in [0, 0.5)")
    return trading_boundaries_1d(sol, prefs, 1.0, fraction)


def certainty_equivalent_loss(
    sol: MertonSolution,
    prefs: Preferences,
    e: NoTradeEllipsoid,
    z: float,
    lam: float,
) -> float:
    """Leading-order fraction of wealth forfeited to the fixed cost.

    u₀ c_m(γ)^γ (λ/z)^{1/2}; c_m^γ = 1/v₀ so this is u₀/v₀ (λ/z)^{1/2}.
    """
    del prefs  # loss depends on preferences only through u₀ and v₀
    _check_wealth(z, lam)
    return e.u0 / sol.v0 * math.sqrt(lam / z)


def rebalance_target(
    state: PortfolioState, sol: MertonSolution, lam: float
) -> PortfolioState:
    """Pay the fixed cost and move to the Merton weights.

    The new state holds z - λ split as (1 - π·1, π).

    Raises:
        Insolvent: If wealth does not exceed the fixed cost.
    """
    x_after, y_after = rebalance_positions(np.array([state.z]), sol.pi_m, lam)
    return PortfolioState(x=float(x_after[0]), y=y_after[0])
