"""Hermitian metrics on holomorphic bundles over flat tori and the bundle-valued
k-Hessian equation: curvature, the Donaldson-type functional, cone tests, a
gradient-flow solver and a verification harness.
"""

__version__ = "0.1.0"

from .bundle import Metric, curvature, geodesic, random_metric
from .errors import (
    ConfigurationError,
    ConsistencyError,
    DegenerateMetricError,
    HessBundleError,
    SnapshotError,
    StallError,
)
from .functional import donaldson_M, lambda_k
from .geometry import Background, EndForm

__all__ = [
    "Background",
    "ConfigurationError",
    "ConsistencyError",
    "DegenerateMetricError",
    "EndForm",
    "HessBundleError",
    "Metric",
    "SnapshotError",
    "StallError",
    "curvature",
    "donaldson_M",
    "geodesic",
    "lambda_k",
    "random_metric",
]
