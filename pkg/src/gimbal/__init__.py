"""Gimbal regression: deterministic geometry-aware local linear regression.

Library surface for the realized estimator map (orientation quantities,
directional weight field with one-shot ESS safeguard, closed-form modulated
local solve), the seeded simulation harness, mechanism experiments, and
post-estimation diagnostics. The ``gimbal`` CLI wraps the batch workflows.
"""

__version__ = "0.1.0"

from .engine import (
    Dataset,
    GimbalConfig,
    LocationRecord,
    fit_all,
    fit_location,
    predict_at,
    residual_knn_correct,
)
from .experiments import MapSummary, WeightDiffSummary, run_experiment, summarize, weight_diff
from .kernels import active_backend, available_backends, set_backend
from .simgen import SimSpec, generate

__all__ = [
    "Dataset",
    "GimbalConfig",
    "LocationRecord",
    "MapSummary",
    "SimSpec",
    "WeightDiffSummary",
    "__version__",
    "active_backend",
    "available_backends",
    "fit_all",
    "fit_location",
    "generate",
    "predict_at",
    "residual_knn_correct",
    "run_experiment",
    "set_backend",
    "summarize",
    "weight_diff",
]
