"""Realized orientation quantities for one neighborhood.

Three deterministic summaries feed the directional metric:

* ``bearing_resultant``: distance-decayed circular mean of neighbor bearings
  and its normalized magnitude; below the isotropy threshold the direction is
  declared non-identifiable and forced to zero.
* ``value_orientation``: half-angle of atan2(Var(y) - Var(z), 2 Cov(z, y))
  over (normalized distance, response) pairs, with an identifiability score
  that deterministically selects the zero branch when the second-moment
  structure is flat.
* ``anisotropy_ratio``: square-rooted eigenvalue ratio of the decay-weighted
  displacement second-moment matrix, floored and clipped to [1, eta_max].

All moments are population moments (divide by n). Decay weights always use
the nominal bandwidth h, never the ESS-corrected one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class OrientationResult:
    phi: float
    r_phi: float
    phi_deactivated: bool
    theta_z: float
    g_ident: float
    theta_deactivated: bool
    eta: float
    lambda_max: float
    lambda_min: float


def sym2_eigvals(sxx, sxy, syy):
    """Eigenvalues (max, min) of [[sxx, sxy], [sxy, syy]] in closed form."""
    half_tr = 0.5 * (sxx + syy)
    rad = math.sqrt(max(0.0, (0.5 * (sxx - syy)) ** 2 + sxy * sxy))
    return half_tr + rad, half_tr - rad


def decay_weights(distances, h):
    """Distance-decay weights exp(-d^2 / h^2) at the nominal bandwidth."""
    d = np.asarray(distances, dtype=np.float64)
    return np.exp(-(d * d) / (h * h))


def bearing_resultant(bearings, distances, h, eps_phi):
    """Dominant bearing direction with isotropy deactivation.

    Returns (phi, r_phi, deactivated). Callers must pass bearings only for
    nonzero displacements; an empty input (all neighbors coincident with the
    target) is treated as isotropic.
    """
    th = np.asarray(bearings, dtype=np.float64)
    if th.size == 0:
        return 0.0, 0.0, True
    om = decay_weights(distances, h)
    wsum = float(np.sum(om))
    if wsum <= 0.0:
        return 0.0, 0.0, True
    c = float(np.sum(om * np.cos(th)))
    s = float(np.sum(om * np.sin(th)))
    r_phi = math.sqrt(c * c + s * s) / wsum
    if r_phi <= eps_phi:
        return 0.0, r_phi, True
    return math.atan2(s, c), r_phi, False


def value_orientation(z, y, eps_theta):
    """Value-based orientation with the identifiability rule.

    Returns (theta_z, g_ident, deactivated) from population second moments of
    the (z, y) pairs.
    """
    z = np.asarray(z, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n = z.shape[0]
    zc = z - np.mean(z)
    yc = y - np.mean(y)
    var_z = float(np.sum(zc * zc)) / n
    var_y = float(np.sum(yc * yc)) / n
    cov = float(np.sum(zc * yc)) / n
    diff = var_y - var_z
    g_ident = abs(diff) + abs(2.0 * cov)
    if g_ident <= eps_theta:
        return 0.0, g_ident, True
    return 0.5 * math.atan2(diff, 2.0 * cov), g_ident, False


def anisotropy_ratio(east, north, distances, h, eps_eta, eta_max):
    """Clipped anisotropy ratio from the weighted displacement second moments.

    Returns (eta, lambda_max, lambda_min) where the lambdas are the raw
    (unfloored) eigenvalues of the weighted second-moment matrix.
    """
    east = np.asarray(east, dtype=np.float64)
    north = np.asarray(north, dtype=np.float64)
    om = decay_weights(distances, h)
    wsum = float(np.sum(om))
    if wsum <= 0.0:
        return 1.0, 0.0, 0.0
    om_t = om / wsum
    sxx = float(np.sum(om_t * east * east))
    sxy = float(np.sum(om_t * east * north))
    syy = float(np.sum(om_t * north * north))
    lam_max, lam_min = sym2_eigvals(sxx, sxy, syy)
    eta_raw = math.sqrt(max(0.0, lam_max) / max(lam_min, eps_eta))
    eta = min(max(eta_raw, 1.0), eta_max)
    return eta, lam_max, lam_min
