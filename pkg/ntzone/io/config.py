"""Load market, preference and simulation settings from a JSON or YAML file.

Example file::

    {"r": 0.01, "mu": [0.05], "sigma": [[0.2]], "gamma": 2.0, "beta": 0.1,
     "simulation": {"lambda": 1e-4, "n_paths": 20000, "seed": 7}}

``sigma`` may be replaced by ``vols`` and ``corr``.
"""
from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field
from typing import Optional

import yaml
from pydantic import ValidationError

from ..errors import ConfigError
from ..types import DictStrAny, MarketParams, Preferences, SimConfig

MARKET_KEYS = ("r", "mu", "sigma", "vols", "corr")
PREFERENCE_KEYS = ("gamma", "beta")
SIMULATION_KEY = "simulation"


@dataclass(frozen=True)
class RunConfig:
    """Parsed configuration file."""

    market: MarketParams
    prefs: Preferences
    simulation: DictStrAny = field(default_factory=dict)
    digest: str = ""
    path: Optional[str] = None

    def sim_config(self, **overrides) -> SimConfig:
        """Build a SimConfig from the ``simulation`` block and overrides.

        Overrides that are None leave the file value in place.
        """
        data = dict(self.simulation)
        data.update({k: v for k, v in overrides.items() if v is not None})
        if "lambda" not in data and "lam" not in data:
            raise ConfigError("missing key 'simulation.lambda'")
        return _validated(
            SimConfig, SIMULATION_KEY, market=self.market, prefs=self.prefs, **data
        )


def _error_key(err: ValidationError, prefix: str = "") -> str:
    loc = err.errors()[0]["loc"]
    key = ".".join(str(part) for part in loc if part != "__root__")
    if prefix:
        key = f"{prefix}.{key}" if key else prefix
    return key or "<root>"


def _validated(model, prefix: str = "", **data):
    try:
        return model(**data)
    except ValidationError as e:
        raise ConfigError(
            f"invalid key '{_error_key(e, prefix)}': {e.errors()[0]['msg']}"
        ) from e


def config_digest(text: str) -> str:
    """sha256 hex digest of the raw configuration text."""
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def parse_config(text: str, fmt: str = "json", path: Optional[str] = None) -> RunConfig:
    """Parse configuration text in ``fmt`` ("json" or "yaml")."""
    try:
        if fmt == "json":
            data = json.loads(text)
        elif fmt == "yaml":
            data = yaml.safe_load(text)
        else:
            raise ConfigError(f"unknown config format '{fmt}'")
    except json.JSONDecodeError as e:
        raise ConfigError(
            f"malformed JSON at line {e.lineno} column {e.colno}: {e.msg}"
        ) from e
    except yaml.YAMLError as e:
        raise ConfigError(f"malformed YAML: {e}") from e
    if not isinstance(data, dict):
        raise ConfigError("configuration must be a mapping at the top level")

    known = set(MARKET_KEYS + PREFERENCE_KEYS + (SIMULATION_KEY,))
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"unknown key '{unknown[0]}'")
    for key in ("r", "mu", "gamma", "beta"):
        if key not in data:
            raise ConfigError(f"missing key '{key}'")
    if "sigma" not in data and "vols" not in data:
        raise ConfigError("missing key 'sigma' (or 'vols' and 'corr')")

    market = _validated(
        MarketParams, **{k: data[k] for k in MARKET_KEYS if k in data}
    )
    prefs = _validated(Preferences, **{k: data[k] for k in PREFERENCE_KEYS})
    simulation = data.get(SIMULATION_KEY) or {}
    if not isinstance(simulation, dict):
        raise ConfigError(f"key '{SIMULATION_KEY}' must be a mapping")
    return RunConfig(
        market=market,
        prefs=prefs,
        simulation=simulation,
        digest=config_digest(text),
        path=path,
    )


def load_config(path: str) -> RunConfig:
    """Read a ``.json``, ``.yaml`` or ``.yml`` configuration file."""
    ext = os.path.splitext(path)[1].lower()
    if ext == ".json":
        fmt = "json"
    elif ext in (".yaml", ".yml"):
        fmt = "yaml"
    else:
        raise ConfigError(f"unsupported config extension '{ext}' of {path}")
    try:
        with open(path, "r", encoding="utf-8") as f:
            text = f.read()
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    return parse_config(text, fmt=fmt, path=path)
