from .corrector import (
    Corrector1D,
    corrector_1d,
    corrector_coeffs,
    portfolio_gamma,
    share_half_width,
    u0_1d,
    u0_from_loss_rate,
    w_1d,
)
from .ellipsoid import (
    NoTradeEllipsoid,
    W_function,
    W_hessian,
    boundary_angles,
    boundary_points,
    directional_extent,
    ellipsoid_solution,
    max_deviations,
    rescaled_matrices,
    riccati_residual,
    solve_riccati,
)
from .merton import (
    MertonSolution,
    consumption_rate,
    crra_utility,
    frictionless_value,
    merton_solution,
    nu_exponent,
    value_derivatives,
)
from .policy import (
    PortfolioState,
    certainty_equivalent_loss,
    equivalent_proportional_cost,
    half_width_1d,
    nt_contains,
    outside_region,
    proportional_half_width,
    quasi_fixed_boundaries,
    rebalance_positions,
    rebalance_target,
    tracking_loss_rate,
    trading_boundaries_1d,
)
