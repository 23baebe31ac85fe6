"""Defines output related constants.

The command-line front end writes flat CSV tables. The column names below are
shared between the writers and the tests so that a renamed column fails
loudly instead of silently producing an unreadable table.
"""
from dataclasses import dataclass
from enum import Enum


class TailMode(str, Enum):
    """What a simulated path earns after the truncated horizon T.

    FRICTIONLESS_VALUE: add e^{-βT} v(Z_T), the frictionless value of the
        terminal wealth.
    ZERO: add nothing. Useful to bound the truncation bias.
    """

    FRICTIONLESS_VALUE = "frictionless_value"
    ZERO = "zero"


@dataclass
class Columns:
    """Column names of the emitted CSV tables.

    boundaries: wealth, lower, upper, merton, equiv_prop_cost
    ellipsoid: angle, w1, w2
    corrector: xi, w
    study tables: lambda | multiplier, loss, stderr, accrued_loss,
        accrued_stderr, trades_per_year, liq_frac
    """

    # trading boundaries over a wealth grid
    wealth = "wealth"
    lower = "lower"
    upper = "upper"
    merton = "merton"
    equiv_prop_cost = "equiv_prop_cost"

    # ellipsoid polyline
    angle = "angle"
    w1 = "w1"
    w2 = "w2"

    # one-dimensional corrector profile
    xi = "xi"
    w = "w"

    # Monte Carlo tables
    lam = "lambda"
    multiplier = "multiplier"
    loss = "loss"
    stderr = "stderr"
    trades_per_year = "trades_per_year"
    liq_frac = "liq_frac"
    predicted_loss = "predicted_loss"
    paired_diff = "paired_diff"
    paired_stderr = "paired_stderr"
    accrued_loss = "accrued_loss"
    accrued_stderr = "accrued_stderr"
    accrued_diff = "accrued_diff"
    accrued_diff_stderr = "accrued_diff_stderr"
