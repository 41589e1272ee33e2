"""Dynamic network formation with foresighted heterogeneous agents."""

__version__ = "0.1.0"

from .errors import (
    ArgumentError,
    ConfigError,
    ConsistencyError,
    DegenerateParameterError,
    NetformError,
    NumericalError,
    SizeLimitError,
)
from .graph import Network, NetworkStats, stats
from .payoff import ConnectionsModel, PayoffParams, TableModel, TypeVector, example1_model

__all__ = [
    "ArgumentError",
    "ConfigError",
    "ConnectionsModel",
    "ConsistencyError",
    "DegenerateParameterError",
    "Network",
    "NetformError",
    "NetworkStats",
    "NumericalError",
    "PayoffParams",
    "SizeLimitError",
    "TableModel",
    "TypeVector",
    "example1_model",
    "stats",
]
