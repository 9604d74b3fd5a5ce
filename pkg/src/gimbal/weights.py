"""Directional weight field: metric construction, raw weights, ESS safeguard.

The metric is M = Q diag(1, eta^-2) Q^T / h^2 with Q = R(phi) R(theta_z).
Raw weights exp(-Delta^T M Delta) are normalized, checked for effective
sample size, corrected once via h_eff = h * sqrt(n0 / n_eff_raw) (rebuilding
only the diagonal scaling, never Q or eta), and replaced by uniform weights
when the corrected ESS still falls below n_min. The correction is one-shot by
construction; it is never iterated.

``n_eff_post`` always reports the ESS of the *recomputed candidate* weights,
i.e. the quantity the fallback rule tests. The ESS of the final weight vector
(which is n_i on the uniform branch) is exposed separately.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geo import rotation_matrix
from .orientation import OrientationResult

FALLBACK_NONE = 0
FALLBACK_UNIFORM = 1
FALLBACK_UNDERFLOW = 2


@dataclass(frozen=True)
class RealizedWeightMap:
    orientation: OrientationResult
    h_nominal: float
    h_eff: float
    n_eff_raw: float
    n_eff_post: float
    fallback_code: int
    weights: np.ndarray

    @property
    def fallback_uniform(self):
        return self.fallback_code != FALLBACK_NONE

    @property
    def n_eff_final(self):
        return ess(self.weights)


def build_metric(orient, h):
    """Weight-evaluation metric Q Lambda Q^T for one neighborhood."""
    return metric_matrix(orient.phi, orient.theta_z, orient.eta, h)


def metric_matrix(phi, theta_z, eta, h):
    q = rotation_matrix(phi) @ rotation_matrix(theta_z)
    lam = np.array([[1.0 / (h * h), 0.0], [0.0, 1.0 / (h * h * eta * eta)]])
    return q @ lam @ q.T


def raw_weights(east, north, metric):
    """exp(-Delta^T M Delta) for each displacement."""
    east = np.asarray(east, dtype=np.float64)
    north = np.asarray(north, dtype=np.float64)
    quad = (
        metric[0, 0] * east * east
        + 2.0 * metric[0, 1] * east * north
        + metric[1, 1] * north * north
    )
    return np.exp(-quad)


def ess(normalized_weights):
    """Effective sample size 1 / sum(w^2) of a normalized weight vector."""
    w = np.asarray(normalized_weights, dtype=np.float64)
    total = float(np.sum(w))
    if total == 0.0:
        raise ValueError("ESS is undefined for an all-zero weight vector")
    if abs(total - 1.0) > 1e-9:
        raise ValueError(f"weights must be normalized (sum={total!r})")
    return 1.0 / float(np.sum(w * w))


def one_shot_safeguard(east, north, orient, h, n0, n_min, on_recompute=None):
    """Raw weights, single ESS bandwidth correction, uniform fallback.

    on_recompute, when given, is called once per weight recomputation at a
    corrected bandwidth (instrumentation for the one-shot property).
    """
    east = np.asarray(east, dtype=np.float64)
    north = np.asarray(north, dtype=np.float64)
    n = east.shape[0]

    w_raw = raw_weights(east, north, metric_matrix(orient.phi, orient.theta_z, orient.eta, h))
    s_raw = float(np.sum(w_raw))
    if s_raw == 0.0:
        # every raw weight underflowed; h_eff cannot be formed
        return RealizedWeightMap(
            orientation=orient,
            h_nominal=h,
            h_eff=math.nan,
            n_eff_raw=0.0,
            n_eff_post=float(n),
            fallback_code=FALLBACK_UNDERFLOW,
            weights=np.full(n, 1.0 / n),
        )

    w_tilde = w_raw / s_raw
    n_eff_raw = 1.0 / float(np.sum(w_tilde * w_tilde))

    # unconditional one-shot correction: shrinks as well as inflates
    h_eff = h * math.sqrt(n0 / n_eff_raw)
    if on_recompute is not None:
        on_recompute(h_eff)
    w1 = raw_weights(east, north, metric_matrix(orient.phi, orient.theta_z, orient.eta, h_eff))
    s1 = float(np.sum(w1))
    if s1 == 0.0:
        return RealizedWeightMap(
            orientation=orient,
            h_nominal=h,
            h_eff=h_eff,
            n_eff_raw=n_eff_raw,
            n_eff_post=float(n),
            fallback_code=FALLBACK_UNDERFLOW,
            weights=np.full(n, 1.0 / n),
        )

    w1_tilde = w1 / s1
    n_eff_post = 1.0 / float(np.sum(w1_tilde * w1_tilde))
    if n_eff_post < n_min:
        final = np.full(n, 1.0 / n)
        code = FALLBACK_UNIFORM
    else:
        final = w1_tilde
        code = FALLBACK_NONE
    return RealizedWeightMap(
        orientation=orient,
        h_nominal=h,
        h_eff=h_eff,
        n_eff_raw=n_eff_raw,
        n_eff_post=n_eff_post,
        fallback_code=code,
        weights=final,
    )
