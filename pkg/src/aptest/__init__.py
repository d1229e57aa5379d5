"""Active property testing: testers, oracles and testing-dimension estimators."""
from . import errors
from ._accel import backend
from .functions import BinnedTable, LinearThreshold, PiecewiseConstantFn
from .oracle import ActiveOracle, TesterVerdict, cluster_error, distance_to_interval_union

__version__ = "0.1.0"

__all__ = [
    "ActiveOracle", "BinnedTable", "LinearThreshold", "PiecewiseConstantFn", "TesterVerdict",
    "backend", "cluster_error", "distance_to_interval_union", "errors",
]
