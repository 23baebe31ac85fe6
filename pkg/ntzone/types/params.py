"""Input parameter models.

The models validate the schema (keys, types, shapes) through pydantic and the
economic invariants through ``_check_invariants``. Schema problems surface as
``pydantic.ValidationError`` (turned into ``ConfigError`` by the loader) while
invariant violations raise ``BadInput`` directly.
"""
from __future__ import annotations

from typing import Optional, Tuple

import numpy as np
from pydantic import BaseModel, Field, root_validator, validator

from ..errors import BadInput
from .common import NDArrayF64
from .data import TailMode

Vector = Tuple[float, ...]
Matrix = Tuple[Tuple[float, ...], ...]

# smallest/largest eigenvalue ratio below which σσ^⊤ counts as singular
_COV_RTOL = 1e-14


class MarketParams(BaseModel):
    """Safe rate r, expected returns μ and volatility matrix σ (per year)."""

    r: float
    mu: Vector
    sigma: Matrix

    class Config:
        allow_mutation = False
        extra = "forbid"

    def __init__(self, **data) -> None:
        super().__init__(**data)
        self._check_invariants()

    @root_validator(pre=True)
    def _sigma_from_vols(cls, values):  # pylint: disable=no-self-argument
        """Build σ = diag(vols)·chol(corr) when given vols and corr."""
        has_vols = "vols" in values or "corr" in values
        if has_vols and "sigma" in values:
            raise ValueError("give either 'sigma' or 'vols' + 'corr', not both")
        if not has_vols:
            return values
        if "vols" not in values or "corr" not in values:
            missing = "corr" if "vols" in values else "vols"
            raise ValueError(f"'{missing}' is required together with 'vols'/'corr'")
        values = dict(values)
        vols = np.atleast_1d(np.asarray(values.pop("vols"), dtype=np.float64))
        corr = np.atleast_2d(np.asarray(values.pop("corr"), dtype=np.float64))
        if vols.ndim != 1 or corr.shape != (vols.size, vols.size):
            raise ValueError("'corr' must be a square matrix matching 'vols'")
        if not np.allclose(corr, corr.T) or not np.allclose(np.diag(corr), 1.0):
            raise BadInput("'corr' must be symmetric with unit diagonal")
        try:
            chol = np.linalg.cholesky(corr)
        except np.linalg.LinAlgError as e:
            raise BadInput("'corr' must be positive definite") from e
        values["sigma"] = (np.diag(vols) @ chol).tolist()
        return values

    @validator("mu", pre=True)
    def _mu_to_tuple(cls, v):  # pylint: disable=no-self-argument
        arr = np.atleast_1d(np.asarray(v, dtype=np.float64))
        if arr.ndim != 1:
            raise ValueError("'mu' must be a vector")
        return tuple(arr.tolist())

    @validator("sigma", pre=True)
    def _sigma_to_tuple(cls, v):  # pylint: disable=no-self-argument
        arr = np.asarray(v, dtype=np.float64)
        if arr.size == 1:
            arr = arr.reshape(1, 1)
        if arr.ndim != 2:
            raise ValueError("'sigma' must be a matrix")
        return tuple(tuple(row) for row in arr.tolist())

    @root_validator(skip_on_failure=True)
    def _check_shapes(cls, values):  # pylint: disable=no-self-argument
        d = len(values["mu"])
        if d == 0:
            raise ValueError("'mu' must not be empty")
        sigma = values["sigma"]
        if len(sigma) != d or any(len(row) != d for row in sigma):
            raise ValueError(f"'sigma' must be a {d}x{d} matrix")
        return values

    def _check_invariants(self) -> None:
        if not np.isfinite(self.r) or self.r <= 0.0:
            raise BadInput(f"'r' must be positive, got {self.r}")
        if not np.all(np.isfinite(self.sigma_mat)) or not np.all(
            np.isfinite(self.mu_vec)
        ):
            raise BadInput("'mu' and 'sigma' must be finite")
        eig = np.linalg.eigvalsh(self.cov)
        if eig[0] <= _COV_RTOL * max(eig[-1], 0.0):
            raise BadInput("sigma sigma^T must be positive definite")
        if np.any(self.excess < 0.0):
            raise BadInput("expected excess returns mu - r must be nonnegative")

    @property
    def d(self) -> int:
        """Number of risky assets."""
        return len(self.mu)

    @property
    def mu_vec(self) -> NDArrayF64:
        return np.asarray(self.mu, dtype=np.float64)

    @property
    def sigma_mat(self) -> NDArrayF64:
        return np.asarray(self.sigma, dtype=np.float64)

    @property
    def cov(self) -> NDArrayF64:
        """Σ = σσ^⊤, symmetrized."""
        sigma = self.sigma_mat
        cov = sigma @ sigma.T
        return 0.5 * (cov + cov.T)

    @property
    def excess(self) -> NDArrayF64:
        """Expected excess returns μ - r·1."""
        return self.mu_vec - self.r


class Preferences(BaseModel):
    """Relative risk aversion γ and impatience rate β."""

    gamma: float
    beta: float

    class Config:
        allow_mutation = False
        extra = "forbid"

    def __init__(self, **data) -> None:
        super().__init__(**data)
        if not np.isfinite(self.gamma) or self.gamma <= 0.0:
            raise BadInput(f"'gamma' must be positive, got {self.gamma}")
        if not np.isfinite(self.beta) or self.beta <= 0.0:
            raise BadInput(f"'beta' must be positive, got {self.beta}")

    @property
    def is_log(self) -> bool:
        return self.gamma == 1.0


class SimConfig(BaseModel):
    """Monte Carlo configuration for the almost-optimal policy.

    ``dt`` and ``horizon`` may be left empty; the simulator then picks a step
    that resolves the mean time between trades and a horizon with discount
    factor e^{-βT} ≤ 1e-4.
    """

    market: MarketParams
    prefs: Preferences
    lam: float = Field(..., alias="lambda")
    z0: float = 1.0
    initial_weights: Optional[Vector] = None
    dt: Optional[float] = None
    horizon: Optional[float] = None
    n_paths: int = 1000
    seed: int = 0
    eta: float = 2.0
    tail_mode: TailMode = TailMode.FRICTIONLESS_VALUE
    width_multiplier: float = 1.0

    class Config:
        allow_mutation = False
        allow_population_by_field_name = True
        extra = "forbid"

    def __init__(self, **data) -> None:
        super().__init__(**data)
        self._check_invariants()

    def _check_invariants(self) -> None:
        if not self.lam > 0.0:
            raise BadInput(f"'lambda' must be positive, got {self.lam}")
        if not self.z0 > 2.0 * self.lam:
            raise BadInput("'z0' must exceed twice the fixed cost")
        if self.n_paths < 1:
            raise BadInput(f"'n_paths' must be at least 1, got {self.n_paths}")
        if not 0 <= self.seed < 2**64:
            raise BadInput("'seed' must be a 64-bit unsigned integer")
        if self.eta < 2.0:
            raise BadInput(f"'eta' must be at least 2, got {self.eta}")
        if self.dt is not None and not self.dt > 0.0:
            raise BadInput(f"'dt' must be positive, got {self.dt}")
        if self.horizon is not None:
            if self.dt is not None and self.horizon < self.dt:
                raise BadInput("'horizon' must be at least one step 'dt'")
            if not self.horizon > 0.0:
                raise BadInput(f"'horizon' must be positive, got {self.horizon}")
        if not self.width_multiplier > 0.0:
            raise BadInput("'width_multiplier' must be positive")
        if self.initial_weights is not None:
            if len(self.initial_weights) != self.market.d:
                raise BadInput(f"'initial_weights' must have {self.market.d} entries")

    def replace(self, **changes) -> "SimConfig":
        """Return a validated copy with some fields changed."""
        data = self.dict()
        data.update(changes)
        return SimConfig(**data)
