"""Closed-form correctors for a single risky asset.

The first corrector w(z, ξ) is the quartic A(z)ξ² - B(z)ξ⁴ inside the
no-trade interval |ξ| ≤ ξ₀(z) and the constant v_z(z) outside. Here ξ is the
deviation of the risky position from its frictionless target, in currency per
λ^{1/4}. Smooth pasting and value matching at ±ξ₀ pin down A, B, ξ₀ and the
loss rate a(z); the second corrector u(z) = u₀ z^{1/2-γ} then follows from
the eigenvalue identity 𝒜 z^p = ν_p z^p.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from ..errors import BadInput, DimensionError, InfiniteValue
from ..types import MarketParams, Preferences
from .merton import MertonSolution, consumption_rate, nu_exponent, value_derivatives


@dataclass(frozen=True)
class Corrector1D:
    """First and second corrector of the one-dimensional problem.

    The z-dependent coefficients are exact monomials under CRRA utility, so
    they are kept as callables instead of precomputed grids.

    A_coef (Callable): z -> A(z), quadratic coefficient of w.
    B_coef (Callable): z -> B(z), quartic coefficient of w.
    xi0 (Callable): z -> ξ₀(z), no-trade half-width in deviation units.
    a (Callable): z -> a(z), first-corrector constant.
    v_z (Callable): z -> v_z(z), value of w outside the no-trade interval.
    u0 (float): Welfare coefficient, u(z) = u₀ z^{1/2-γ}.
    """

    A_coef: Callable[[float], float]
    B_coef: Callable[[float], float]
    xi0: Callable[[float], float]
    a: Callable[[float], float]
    v_z: Callable[[float], float]
    u0: float


def coeffs_from_derivatives(
    v_z: float, v_zz: float, theta: float, theta_z: float, sigma: float
) -> tuple[float, float, float, float]:
    """Corrector coefficients for a general utility at one wealth level.

    Args:
        v_z (float): First derivative of the frictionless value.
        v_zz (float): Second derivative of the frictionless value (< 0).
        theta (float): Frictionless risky position θ(z).
        theta_z (float): Its derivative θ_z(z).
        sigma (float): Volatility of the risky asset.

    Returns:
        tuple[float, float, float, float]: (A, B, ξ₀, a). Zero-width regions
            (α = 0) return A = a = ξ₀ = 0 and B = inf.
    """
    alpha = abs(sigma * theta * (1.0 - theta_z))
    a = v_z * alpha * sigma * math.sqrt(-v_zz / (3.0 * v_z))
    xi0 = (12.0 / (-v_zz / v_z) * theta**2 * (1.0 - theta_z) ** 2) ** 0.25
    if alpha == 0.0:
        return 0.0, math.inf, xi0, a
    A = a / alpha**2
    B = sigma**2 * (-v_zz) / (12.0 * alpha**2)
    return A, B, xi0, a


def _check_1d(sol: MertonSolution) -> None:
    if sol.d != 1:
        raise DimensionError(f"one risky asset required, got d = {sol.d}")


def corrector_coeffs(
    sol: MertonSolution, prefs: Preferences, market: MarketParams, z: float
) -> tuple[float, float, float, float]:
    """Return (A(z), B(z), ξ₀(z), a(z)) for CRRA utility.

    With θ(z) = π z one gets ξ₀(z) = (12/γ π²(1-π)² z³)^{1/4} and
    a(z) = v₀ σ² |π(1-π)| √(γ/3) z^{1/2-γ}.
    """
    _check_1d(sol)
    if not z > 0.0:
        raise BadInput("wealth z must be positive")
    pi = float(sol.pi_m[0])
    sigma = float(market.sigma_mat[0, 0])
    v_z, v_zz = value_derivatives(sol, prefs, z)
    return coeffs_from_derivatives(v_z, v_zz, pi * z, pi, abs(sigma))


def u0_1d(sol: MertonSolution, prefs: Preferences, market: MarketParams) -> float:
    """Welfare coefficient u₀ of the expansion v^λ = v - λ^{1/2} u₀ z^{1/2-γ}.

    u₀ = σ² (γ/3 π²(1-π)²)^{1/2} c_m(γ)^{-γ} / c_m(2γ).

    Raises:
        InfiniteValue: If c_m(2γ) ≤ 0.
    """
    _check_1d(sol)
    c_2g = consumption_rate(market, 2.0 * prefs.gamma, prefs.beta)
    if not c_2g > 0.0:
        raise InfiniteValue(f"c_m(2 gamma) = {c_2g:.6g} is not positive")
    pi = float(sol.pi_m[0])
    sigma_sq = float(market.cov[0, 0])
    return (
        sigma_sq
        * math.sqrt(prefs.gamma / 3.0 * pi**2 * (1.0 - pi) ** 2)
        * sol.v0
        / c_2g
    )


def u0_from_loss_rate(
    sol: MertonSolution, prefs: Preferences, market: MarketParams
) -> float:
    """u₀ = a₀ / ν_{1/2-γ} with a₀ = a(z) z^{γ-1/2}; agrees with ``u0_1d``."""
    _check_1d(sol)
    p = 0.5 - prefs.gamma
    nu = nu_exponent(sol, prefs, market, p)
    if not nu > 0.0:
        raise InfiniteValue(f"nu_(1/2 - gamma) = {nu:.6g} is not positive")
    a0 = corrector_coeffs(sol, prefs, market, 1.0)[3]
    return a0 / nu


def corrector_1d(
    sol: MertonSolution, prefs: Preferences, market: MarketParams
) -> Corrector1D:
    """Bundle the one-dimensional correctors."""
    _check_1d(sol)

    def coeff(i: int) -> Callable[[float], float]:
        return lambda z: corrector_coeffs(sol, prefs, market, z)[i]

    return Corrector1D(
        A_coef=coeff(0),
        B_coef=coeff(1),
        xi0=coeff(2),
        a=coeff(3),
        v_z=lambda z: value_derivatives(sol, prefs, z)[0],
        u0=u0_1d(sol, prefs, market),
    )


def w_1d(c: Corrector1D, z: float, xi):
    """First corrector w(z, ξ), piecewise quartic / constant in ξ."""
    if not z > 0.0:
        raise BadInput("wealth z must be positive")
    xi_arr = np.asarray(xi, dtype=np.float64)
    xi0 = c.xi0(z)
    if xi0 == 0.0:
        inside = np.zeros_like(xi_arr)
    else:
        inside = c.A_coef(z) * xi_arr**2 - c.B_coef(z) * xi_arr**4
    w = np.where(np.abs(xi_arr) <= xi0, inside, c.v_z(z))
    if np.ndim(w) == 0:
        return float(w)
    return w


def portfolio_gamma(sol: MertonSolution, z: float, price: float) -> float:
    """Squared portfolio gamma d⟨φ⟩/d⟨S⟩ = π²(1-π)² z²/S⁴ of the Merton holding."""
    _check_1d(sol)
    if not z > 0.0 or not price > 0.0:
        raise BadInput("wealth and price must be positive")
    pi = float(sol.pi_m[0])
    return pi**2 * (1.0 - pi) ** 2 * z**2 / price**4


def share_half_width(
    sol: MertonSolution, prefs: Preferences, z: float, price: float, lam: float
) -> float:
    """No-trade half-width in number of shares, (12/(γ/z) d⟨φ⟩/d⟨S⟩ λ)^{1/4}."""
    if lam < 0.0:
        raise BadInput("fixed cost must be nonnegative")
    risk_tolerance = z / prefs.gamma
    return (12.0 * risk_tolerance * portfolio_gamma(sol, z, price) * lam) ** 0.25
