"""Per-target orchestration of the realized estimator map.

fit_location composes the stages for one target: KNN neighborhood, tangent
displacements, orientation quantities (with ablation overrides), the one-shot
safeguarded weight field, the closed-form local solve, and the standardized
conditioning diagnostic. fit_all evaluates every target, optionally across
threads; records always come back in input order and each location's record
depends only on its own data, so parallel and serial runs agree bitwise.

Out-of-sample prediction follows the training-pool-only protocol: neighbors
come from the training table, the distance-trend regressor is zero at the
target, and the optional residual-KNN correction averages training residuals.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import kernels
from .geo import tangent_displacements
from .neighborhood import ConfigurationError, Neighborhood, knn
from .orientation import OrientationResult
from .solver import LocalFit, cond_wls2, solve_local
from .weights import FALLBACK_UNDERFLOW, FALLBACK_UNIFORM, RealizedWeightMap

BRANCH_PHI_ISO = "phi_iso"
BRANCH_THETA_NONIDENT = "theta_nonident"
BRANCH_UNIFORM_FALLBACK = "uniform_fallback"
BRANCH_UNDERFLOW_FALLBACK = "underflow_fallback"
BRANCH_ILL_POSED = "ill_posed"

_MODES = {
    "theta_z_mode": ("on", "off"),
    "phi_mode": ("on", "forced_zero"),
    "eta_mode": ("geometry", "forced_one"),
}


@dataclass(frozen=True)
class GimbalConfig:
    k: int = 50
    h: float = 3000.0
    gamma: float = 1.0
    u: Optional[float] = None  # distance-normalization scale; None -> h
    n0: float = 15.0
    n_min: float = 4.0
    eta_max: float = 50.0
    eps_phi: float = 1e-3
    eps_theta: float = 1e-8
    eps_eta: float = 1e-8
    eps_kappa: float = 1e-12
    theta_z_mode: str = "on"
    phi_mode: str = "on"
    eta_mode: str = "geometry"
    seed: int = 0

    def __post_init__(self):
        if self.k < 1:
            raise ConfigurationError(f"K must be >= 1, got {self.k}")
        for name in ("h", "gamma", "n0", "n_min", "eta_max",
                     "eps_phi", "eps_theta", "eps_eta", "eps_kappa"):
            value = getattr(self, name)
            if not math.isfinite(value) or value < 0:
                raise ConfigurationError(f"{name} must be finite and nonnegative, got {value}")
        if self.h <= 0:
            raise ConfigurationError("h must be positive")
        if self.u is not None and self.u <= 0:
            raise ConfigurationError("u must be positive when given")
        if self.eta_max < 1:
            raise ConfigurationError("eta_max must be >= 1")
        for name, allowed in _MODES.items():
            if getattr(self, name) not in allowed:
                raise ConfigurationError(f"{name} must be one of {allowed}")

    @property
    def u_scale(self):
        return self.h if self.u is None else self.u


@dataclass(frozen=True)
class Dataset:
    lat: np.ndarray
    lon: np.ndarray
    x: np.ndarray
    y: np.ndarray
    ids: Optional[np.ndarray] = None

    def __post_init__(self):
        for name in ("lat", "lon", "x", "y"):
            object.__setattr__(self, name, np.ascontiguousarray(getattr(self, name), dtype=np.float64))
        n = self.lat.shape[0]
        for name in ("lon", "x", "y"):
            if getattr(self, name).shape[0] != n:
                raise ValueError(f"column {name} has length {getattr(self, name).shape[0]}, expected {n}")

    @property
    def n(self):
        return self.lat.shape[0]

    def validate(self):
        """Range/finiteness checks; raises ValueError naming the first bad row."""
        for name in ("lat", "lon", "x", "y"):
            col = getattr(self, name)
            bad = np.nonzero(~np.isfinite(col))[0]
            if bad.size:
                raise ValueError(f"column {name} is not finite at row {bad[0]}")
        bad = np.nonzero((self.lat < -90.0) | (self.lat > 90.0))[0]
        if bad.size:
            raise ValueError(f"lat out of range [-90, 90] at row {bad[0]}")
        bad = np.nonzero((self.lon < -180.0) | (self.lon > 180.0))[0]
        if bad.size:
            raise ValueError(f"lon out of range [-180, 180] at row {bad[0]}")
        return self


@dataclass(frozen=True)
class LocationRecord:
    index: int
    lat: float
    lon: float
    neighborhood: Neighborhood
    orientation: OrientationResult
    weight_map: RealizedWeightMap
    fit: LocalFit
    cond_wls2: float
    residual_at_target: float
    branch_codes: frozenset = field(default_factory=frozenset)


def standardized_covariate(x, mean=None, std=None):
    """Population-moment standardization used only for the condWLS2 diagnostic.

    A constant column standardizes to zeros (rank-1 Gram, huge finite kappa).
    """
    x = np.asarray(x, dtype=np.float64)
    if mean is None:
        mean = float(np.mean(x))
    if std is None:
        std = float(np.std(x))
    if std == 0.0:
        return np.zeros_like(x), mean, std
    return (x - mean) / std, mean, std


def build_local_design(dataset, nb, u):
    """Local design [1, x_j, z_ij] with z_ij = d_ij / u, plus y and z."""
    members = nb.member_indices
    z = nb.distances / u
    X = np.column_stack([np.ones(members.shape[0]), dataset.x[members], z])
    return X, dataset.y[members], z


def _mode_flags(config):
    return (
        0 if config.phi_mode == "forced_zero" else 1,
        0 if config.theta_z_mode == "off" else 1,
        0 if config.eta_mode == "forced_one" else 1,
    )


def _unpack_weight_map(raw, h):
    (phi, r_phi, phi_deact, theta_z, g_ident, theta_deact, eta, lam_max,
     lam_min, n_eff_raw, h_eff, n_eff_post, fallback_code, n_recompute,
     weight_vec) = raw
    orient = OrientationResult(
        phi=float(phi), r_phi=float(r_phi), phi_deactivated=bool(phi_deact),
        theta_z=float(theta_z), g_ident=float(g_ident),
        theta_deactivated=bool(theta_deact),
        eta=float(eta), lambda_max=float(lam_max), lambda_min=float(lam_min),
    )
    wmap = RealizedWeightMap(
        orientation=orient, h_nominal=h, h_eff=float(h_eff),
        n_eff_raw=float(n_eff_raw), n_eff_post=float(n_eff_post),
        fallback_code=int(fallback_code), weights=np.asarray(weight_vec),
    )
    return orient, wmap, int(n_recompute)


def _branch_codes(orient, wmap, fit):
    codes = set()
    if orient.phi_deactivated:
        codes.add(BRANCH_PHI_ISO)
    if orient.theta_deactivated:
        codes.add(BRANCH_THETA_NONIDENT)
    if wmap.fallback_code == FALLBACK_UNIFORM:
        codes.add(BRANCH_UNIFORM_FALLBACK)
    elif wmap.fallback_code == FALLBACK_UNDERFLOW:
        codes.add(BRANCH_UNDERFLOW_FALLBACK)
    if not fit.well_posed:
        codes.add(BRANCH_ILL_POSED)
    return frozenset(codes)


def _fit_neighborhood(dataset, config, nb, target_lat, target_lon, x_std):
    """Shared tail of the pipeline once a neighborhood is fixed."""
    members = nb.member_indices
    east, north = tangent_displacements(
        target_lat, target_lon, dataset.lat[members], dataset.lon[members]
    )
    X, y_loc, z = build_local_design(dataset, nb, config.u_scale)

    raw = kernels.weight_map(
        east, north, nb.distances, z, y_loc,
        config.h, config.eps_phi, config.eps_theta, config.eps_eta,
        config.eta_max, config.n0, config.n_min, *_mode_flags(config),
    )
    orient, wmap, _ = _unpack_weight_map(raw, config.h)

    fit = solve_local(X, y_loc, wmap.weights, config.gamma, config.eps_kappa)
    cw2 = cond_wls2(x_std[members], wmap.weights, config.eps_kappa)
    return X, y_loc, orient, wmap, fit, cw2


def fit_location(dataset, config, target_index, x_std=None, dists=None):
    """Full realized estimator map at one in-sample target."""
    if x_std is None:
        x_std, _, _ = standardized_covariate(dataset.x)
    lat_i = float(dataset.lat[target_index])
    lon_i = float(dataset.lon[target_index])
    nb = knn(dataset.lat, dataset.lon, lat_i, lon_i, config.k,
             target_index=target_index, dists=dists)
    X, y_loc, orient, wmap, fit, cw2 = _fit_neighborhood(
        dataset, config, nb, lat_i, lon_i, x_std
    )

    residual_at_target = math.nan
    if fit.well_posed:
        pos = np.nonzero(nb.member_indices == target_index)[0]
        if pos.size:
            residual_at_target = float(fit.residuals[pos[0]])

    return LocationRecord(
        index=target_index, lat=lat_i, lon=lon_i, neighborhood=nb,
        orientation=orient, weight_map=wmap, fit=fit, cond_wls2=cw2,
        residual_at_target=residual_at_target,
        branch_codes=_branch_codes(orient, wmap, fit),
    )


def fit_all(dataset, config, threads=1):
    """One LocationRecord per row, in input order.

    threads: 1 runs serial, 0 uses all cores, otherwise the given count.
    Per-location work is independent and side-effect-free, so the thread
    schedule cannot change any output value.
    """
    dataset.validate()
    if config.k > dataset.n:
        raise ConfigurationError(f"K={config.k} exceeds dataset size {dataset.n}")
    x_std, _, _ = standardized_covariate(dataset.x)

    def one(i):
        return fit_location(dataset, config, i, x_std=x_std)

    indices = range(dataset.n)
    if threads == 1:
        return [one(i) for i in indices]
    max_workers = None if threads == 0 else threads
    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        return list(pool.map(one, indices))


def predict_at(train, config, target_lat, target_lon, x_target, x_moments=None):
    """Out-of-sample prediction at a target point.

    Neighbors come from the training pool only; the distance-trend regressor
    is evaluated as zero at the target, so the prediction is
    beta0 + beta1 * x_target. Returns (prediction, record); the prediction is
    NaN when the local solve is ill-posed.
    """
    if x_moments is None:
        _, mean, std = standardized_covariate(train.x)
    else:
        mean, std = x_moments
    x_std, _, _ = standardized_covariate(train.x, mean, std)

    nb = knn(train.lat, train.lon, target_lat, target_lon, config.k, target_index=None)
    X, y_loc, orient, wmap, fit, cw2 = _fit_neighborhood(
        train, config, nb, target_lat, target_lon, x_std
    )
    record = LocationRecord(
        index=-1, lat=float(target_lat), lon=float(target_lon),
        neighborhood=nb, orientation=orient, weight_map=wmap, fit=fit,
        cond_wls2=cw2, residual_at_target=math.nan,
        branch_codes=_branch_codes(orient, wmap, fit),
    )
    if not fit.well_posed:
        return math.nan, record
    prediction = float(fit.beta[0] + fit.beta[1] * x_target)
    return prediction, record


def residual_knn_correct(training_residuals, train_lats, train_lons,
                         target_lat, target_lon, k_resid):
    """Unweighted mean of the k nearest training residuals."""
    residuals = np.asarray(training_residuals, dtype=np.float64)
    nb = knn(train_lats, train_lons, target_lat, target_lon, k_resid, target_index=None)
    return float(np.mean(residuals[nb.member_indices]))
