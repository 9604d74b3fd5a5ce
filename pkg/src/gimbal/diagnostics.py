"""Post-estimation diagnostics, deliberately outside the estimator map.

Local Moran values use a fixed row-standardized KNN adjacency that never
depends on the regression weights, so they measure remaining spatial
structure rather than echoing the weighting scheme. Values are reported raw
and are not bounded to [-1, 1] under this convention.
"""

from __future__ import annotations

import math

import numpy as np

from .neighborhood import knn

DEFAULT_K_MORAN = 8


def local_moran(residuals, lats, lons, k_moran=DEFAULT_K_MORAN):
    """Local Moran's I of standardized residuals under KNN adjacency.

    Returns (values, defined). With zero residual variance the statistic is
    undefined; all values are 0 and defined is False.
    """
    residuals = np.asarray(residuals, dtype=np.float64)
    lats = np.asarray(lats, dtype=np.float64)
    lons = np.asarray(lons, dtype=np.float64)
    n = residuals.shape[0]
    std = float(np.std(residuals))
    if std == 0.0:
        return np.zeros(n), False
    z = (residuals - np.mean(residuals)) / std
    values = np.empty(n)
    for i in range(n):
        nb = knn(lats, lons, lats[i], lons[i], k_moran,
                 exclude_index=i, target_index=i)
        values[i] = z[i] * float(np.mean(z[nb.member_indices]))
    return values, True


def reliability_mask(records, kappa_quantile=0.95, neff_floor=0.0):
    """Boolean fragility flags per location.

    Fragile when the realized normal-matrix condition number exceeds the
    empirical kappa_quantile, when the post-correction ESS falls below
    neff_floor, or when the solve is ill-posed.
    """
    kappas = np.array([r.fit.m_nor_condition for r in records if r.fit.well_posed])
    threshold = float(np.quantile(kappas, kappa_quantile)) if kappas.size else math.inf
    flags = []
    for r in records:
        fragile = (
            not r.fit.well_posed
            or r.fit.m_nor_condition > threshold
            or r.weight_map.n_eff_post < neff_floor
        )
        flags.append(bool(fragile))
    return np.array(flags, dtype=bool)
