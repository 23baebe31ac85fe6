"""No-trade ellipsoid for several risky assets.

In the rescaled deviation ρ = z^{-3/4}ξ the first corrector becomes
wealth-independent, w(z, ξ) = v_z(z) W(ρ), and the ansatz
W(ρ) = 1 - (ρ^⊤Mρ - 1)² solves it inside 𝒥 = {ρ : ρ^⊤Mρ < 1} once M solves
the algebraic Riccati equation

    4 M Tr[AM] + 8 MAM = γΣ,    A = z^{-2} α(z) α(z)^⊤,  Σ = σσ^⊤.

The normalized loss constant is ã₀ = 2 Tr[AM]. With these two conventions the
one-asset case reproduces the closed-form boundary and loss rate exactly.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize

from ..errors import (
    BadInput,
    DegenerateRegion,
    InfiniteValue,
    NoConvergence,
    ResidualTooLarge,
)
from ..types import MarketParams, NDArrayF64, Preferences
from ..utils import setup_logger
from .merton import MertonSolution, nu_exponent

logger = setup_logger()

# smallest/largest eigenvalue ratio of A below which the region degenerates
A_RCOND = 1e-14
RESIDUAL_TOL = 1e-10
BISECT_MAXITER = 200
BISECT_XTOL = 1e-14


@dataclass(frozen=True)
class NoTradeEllipsoid:
    """Asymptotic no-trade region in weight space.

    M (NDArrayF64): Symmetric positive-definite matrix of 𝒥, shape [d, d].
    A (NDArrayF64): Rescaled diffusion matrix of the deviation, shape [d, d].
    a0_tilde (float): Normalized loss constant 2 Tr[AM], a(z) = v₀ ã₀ z^{1/2-γ}.
    u0 (float): Welfare coefficient v₀ ã₀ / ν_{1/2-γ}.
    residual (float): Relative Frobenius residual of the Riccati equation.
    pi_m (NDArrayF64): Center of the region, the Merton weights.
    """

    M: NDArrayF64
    A: NDArrayF64
    a0_tilde: float
    u0: float
    residual: float
    pi_m: NDArrayF64

    @property
    def d(self) -> int:
        return int(self.pi_m.size)


def _sym(mat: NDArrayF64) -> NDArrayF64:
    return 0.5 * (mat + mat.T)


def riccati_residual(M: NDArrayF64, A: NDArrayF64, Sigma: NDArrayF64, gamma: float):
    """Relative residual ‖4M Tr[AM] + 8MAM - γΣ‖_F / ‖γΣ‖_F."""
    lhs = 4.0 * M * np.trace(A @ M) + 8.0 * M @ A @ M
    rhs = gamma * Sigma
    return float(np.linalg.norm(lhs - rhs) / np.linalg.norm(rhs))


def rescaled_matrices(
    sol: MertonSolution, market: MarketParams
) -> tuple[NDArrayF64, NDArrayF64]:
    """Return (A, Σ) with A = αα^⊤ = z^{-2} α(z) α(z)^⊤.

    Raises:
        DegenerateRegion: If A is (numerically) singular.
    """
    A = _sym(sol.alpha @ sol.alpha.T)
    eig = np.linalg.eigvalsh(A)
    if eig[-1] <= 0.0 or eig[0] <= A_RCOND * eig[-1]:
        raise DegenerateRegion("rescaled diffusion matrix A is singular")
    return A, market.cov


def solve_riccati(A: NDArrayF64, Sigma: NDArrayF64, gamma: float) -> NDArrayF64:
    """Solve 4M Tr[AM] + 8MAM = γΣ for symmetric positive-definite M.

    A change of coordinates turns A into the identity, after which the
    transformed unknown M̃ shares its eigenvectors with the transformed Σ̃ and
    each eigenvalue solves 8m_i² + 4t m_i = γ s_i with t = Tr M̃. The scalar
    t is the unique root of the decreasing map t -> Σ m_i(t) - t.

    Raises:
        NoConvergence: If the scalar root cannot be bracketed or found.
        ResidualTooLarge: If the back-transformed M fails the residual check.
    """
    A = np.asarray(A, dtype=np.float64)
    Sigma = np.asarray(Sigma, dtype=np.float64)
    if A.shape != Sigma.shape or A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise BadInput("A and Sigma must be square matrices of equal shape")
    if not gamma > 0.0:
        raise BadInput("gamma must be positive")

    zeta, V = np.linalg.eigh(_sym(A))
    if zeta[0] <= 0.0:
        raise DegenerateRegion("A must be positive definite")
    scale = np.sqrt(zeta)
    sigma_t = _sym(scale[:, None] * (V.T @ Sigma @ V) * scale[None, :])
    s, P = np.linalg.eigh(sigma_t)
    if s[0] <= 0.0:
        raise BadInput("Sigma must be positive definite")

    def eigvals(t: float) -> NDArrayF64:
        return (-t + np.sqrt(t * t + 2.0 * gamma * s)) / 4.0

    t_hi = float(np.sum(np.sqrt(gamma * s / 8.0)))
    try:
        t_star = optimize.bisect(
            lambda t: float(np.sum(eigvals(t))) - t,
            0.0,
            t_hi,
            xtol=BISECT_XTOL * t_hi,
            maxiter=BISECT_MAXITER,
        )
    except (RuntimeError, ValueError) as e:
        raise NoConvergence(f"trace fixed point did not converge: {e}") from e

    m_tilde = (P * eigvals(t_star)) @ P.T
    inv_scale = 1.0 / scale
    M = _sym(V @ (inv_scale[:, None] * m_tilde * inv_scale[None, :]) @ V.T)

    residual = riccati_residual(M, A, Sigma, gamma)
    if not residual <= RESIDUAL_TOL:
        raise ResidualTooLarge(f"Riccati residual {residual:.3e} exceeds tolerance")
    if np.linalg.eigvalsh(M)[0] <= 0.0:
        raise ResidualTooLarge("Riccati solution is not positive definite")
    return M


def ellipsoid_solution(
    sol: MertonSolution, prefs: Preferences, market: MarketParams
) -> NoTradeEllipsoid:
    """Solve the rescaled first corrector and the second corrector constant."""
    if not np.isfinite(sol.alpha_cond):
        raise DegenerateRegion("alpha is singular, the no-trade region degenerates")
    A, Sigma = rescaled_matrices(sol, market)
    M = solve_riccati(A, Sigma, prefs.gamma)
    a0_tilde = 2.0 * float(np.trace(A @ M))
    nu = nu_exponent(sol, prefs, market, 0.5 - prefs.gamma)
    if not nu > 0.0:
        raise InfiniteValue(f"nu_(1/2 - gamma) = {nu:.6g} is not positive")
    residual = riccati_residual(M, A, Sigma, prefs.gamma)
    logger.debug(f"Riccati solved for d = {sol.d}, residual {residual:.2e}")
    return NoTradeEllipsoid(
        M=M,
        A=A,
        a0_tilde=a0_tilde,
        u0=sol.v0 * a0_tilde / nu,
        residual=residual,
        pi_m=sol.pi_m.copy(),
    )


def W_function(e: NoTradeEllipsoid, rho) -> NDArrayF64 | float:
    """Rescaled corrector W(ρ) = 1 - (ρ^⊤Mρ - 1)² in 𝒥 and 1 outside."""
    rho = np.asarray(rho, dtype=np.float64)
    q = np.einsum("...i,ij,...j->...", rho, e.M, rho)
    W = np.where(q < 1.0, 1.0 - (q - 1.0) ** 2, 1.0)
    if np.ndim(W) == 0:
        return float(W)
    return W


def W_hessian(e: NoTradeEllipsoid, rho) -> NDArrayF64:
    """Hessian -4(ρ^⊤Mρ - 1)M - 8 Mρ⊗Mρ of the quartic branch of W."""
    rho = np.asarray(rho, dtype=np.float64)
    m_rho = rho @ e.M
    q = float(rho @ m_rho)
    return -4.0 * (q - 1.0) * e.M - 8.0 * np.outer(m_rho, m_rho)


def _scale(z: float, lam: float) -> float:
    if not z > 0.0:
        raise BadInput("wealth z must be positive")
    if not lam > 0.0:
        raise BadInput("fixed cost lambda must be positive")
    return (lam / z) ** 0.25


def boundary_angles(n: int) -> NDArrayF64:
    """Equispaced polar angles of the two-asset boundary polyline."""
    return 2.0 * math.pi * np.arange(n) / n


def boundary_points(e: NoTradeEllipsoid, z: float, lam: float, n: int) -> NDArrayF64:
    """Points on the boundary of π + (λ/z)^{1/4} 𝒥 in weight space.

    For two assets the boundary is sampled at ``n`` equispaced polar angles.
    Otherwise the 2d extremes along the eigen-directions of M are returned.

    Returns:
        NDArrayF64: Risky weights, shape [n, 2] or [2d, d].
    """
    if n < 3:
        raise BadInput(f"at least 3 boundary points required, got {n}")
    scale = _scale(z, lam)
    if e.d == 2:
        angles = boundary_angles(n)
        dirs = np.stack([np.cos(angles), np.sin(angles)], axis=1)
        radii = 1.0 / np.sqrt(np.einsum("ni,ij,nj->n", dirs, e.M, dirs))
        return e.pi_m[None, :] + scale * radii[:, None] * dirs
    m_eig, vecs = np.linalg.eigh(e.M)
    axes = (vecs / np.sqrt(m_eig)[None, :]).T
    return e.pi_m[None, :] + scale * np.concatenate([axes, -axes], axis=0)


def max_deviations(e: NoTradeEllipsoid, z: float, lam: float) -> NDArrayF64:
    """Largest deviation of each risky weight from π inside the region.

    The maximum of ρ_i over ρ^⊤Mρ ≤ 1 is √((M⁻¹)_ii).
    """
    return _scale(z, lam) * np.sqrt(np.diag(np.linalg.inv(e.M)))


def directional_extent(e: NoTradeEllipsoid, z: float, lam: float, direction) -> float:
    """Distance from π to the boundary along ``direction`` in weight space."""
    u = np.asarray(direction, dtype=np.float64)
    norm = np.linalg.norm(u)
    if u.shape != (e.d,) or norm == 0.0:
        raise BadInput(f"direction must be a nonzero vector of length {e.d}")
    u = u / norm
    return _scale(z, lam) / math.sqrt(float(u @ e.M @ u))
