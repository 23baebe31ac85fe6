from .common import *
from .data import *
from .params import MarketParams, Preferences, SimConfig

__all__ = [
    "DictStrAny",
    "NDArrayF64",
    "NDArrayBool",
    "Columns",
    "TailMode",
    "MarketParams",
    "Preferences",
    "SimConfig",
]
