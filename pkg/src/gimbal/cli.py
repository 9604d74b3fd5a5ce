"""Batch command-line surface: fit, predict, simulate, experiment.

CSV conventions: a schema comment line (starting with ``#``) precedes the
header of every file this tool writes; readers skip comment lines. Floats are
written with ``repr`` so outputs are byte-identical across reruns with the
same inputs. Missing values (ill-posed locations, undefined diagnostics) are
empty fields.

Exit codes: 0 success (flagged locations included), 2 input/configuration
error, 3 internal invariant violation.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .diagnostics import DEFAULT_K_MORAN, local_moran, reliability_mask
from .engine import (
    Dataset,
    GimbalConfig,
    fit_all,
    predict_at,
    residual_knn_correct,
    standardized_covariate,
)
from .experiments import run_experiment
from .neighborhood import ConfigurationError
from .simgen import SimSpec, generate

SCHEMA_DATASET = "gimbal.dataset.v1"
SCHEMA_RECORDS = "gimbal.records.v1"
SCHEMA_PREDICTIONS = "gimbal.predictions.v1"

_REQUIRED_COLUMNS = ("lat", "lon", "x", "y")

RECORD_FIELDS = (
    "index", "id", "lat", "lon", "beta0", "beta1", "beta2",
    "kappa_m_nor", "cond_wls2", "h_eff", "phi", "r_phi", "theta_z",
    "g_ident", "eta", "n_eff_raw", "n_eff_post", "branch_codes",
    "rmse_local", "r2_local", "local_moran", "fragile",
)


class InputError(ValueError):
    """Problem with an input file; maps to exit code 2."""


def _fmt(value):
    if value is None:
        return ""
    if isinstance(value, float) and math.isnan(value):
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _json_safe(obj):
    """Recursively replace NaN/inf with None so the JSON stays standard."""
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


def read_dataset(path):
    """Read a dataset CSV; raises InputError naming the offending column/row."""
    path = Path(path)
    if not path.exists():
        raise InputError(f"input file not found: {path}")
    with path.open(newline="") as fh:
        rows = [row for row in csv.reader(fh) if row and not row[0].startswith("#")]
    if not rows:
        raise InputError(f"{path}: empty file")
    header = [name.strip() for name in rows[0]]
    missing = [name for name in _REQUIRED_COLUMNS if name not in header]
    if missing:
        raise InputError(f"{path}: missing required column '{missing[0]}'")
    col = {name: header.index(name) for name in header}

    data = {name: [] for name in _REQUIRED_COLUMNS}
    ids = [] if "id" in col else None
    for row_no, row in enumerate(rows[1:]):
        if len(row) != len(header):
            raise InputError(f"{path}: row {row_no} has {len(row)} fields, expected {len(header)}")
        for name in _REQUIRED_COLUMNS:
            raw = row[col[name]]
            try:
                value = float(raw)
            except ValueError:
                raise InputError(f"{path}: row {row_no}: column {name} is not numeric ({raw!r})")
            data[name].append(value)
        if ids is not None:
            ids.append(row[col["id"]])

    dataset = Dataset(
        lat=np.array(data["lat"]), lon=np.array(data["lon"]),
        x=np.array(data["x"]), y=np.array(data["y"]),
        ids=np.array(ids) if ids is not None else None,
    )
    try:
        dataset.validate()
    except ValueError as exc:
        raise InputError(f"{path}: {exc}") from exc
    return dataset


def write_dataset_csv(path, dataset, beta1_true=None):
    with Path(path).open("w", newline="") as fh:
        fh.write(f"# schema: {SCHEMA_DATASET}\n")
        writer = csv.writer(fh)
        header = ["lat", "lon", "x", "y"]
        if beta1_true is not None:
            header.append("beta1_true")
        writer.writerow(header)
        for i in range(dataset.n):
            row = [_fmt(float(dataset.lat[i])), _fmt(float(dataset.lon[i])),
                   _fmt(float(dataset.x[i])), _fmt(float(dataset.y[i]))]
            if beta1_true is not None:
                row.append(_fmt(float(beta1_true[i])))
            writer.writerow(row)


def _record_row(record, rec_id, moran_value, fragile):
    beta = record.fit.beta
    w = record.weight_map
    o = record.orientation
    return [
        str(record.index),
        "" if rec_id is None else str(rec_id),
        _fmt(record.lat), _fmt(record.lon),
        _fmt(None if beta is None else float(beta[0])),
        _fmt(None if beta is None else float(beta[1])),
        _fmt(None if beta is None else float(beta[2])),
        _fmt(record.fit.m_nor_condition),
        _fmt(record.cond_wls2),
        _fmt(w.h_eff),
        _fmt(o.phi), _fmt(o.r_phi), _fmt(o.theta_z),
        _fmt(o.g_ident), _fmt(o.eta),
        _fmt(w.n_eff_raw), _fmt(w.n_eff_post),
        ";".join(sorted(record.branch_codes)),
        _fmt(record.fit.rmse_local), _fmt(record.fit.r2_local),
        _fmt(moran_value),
        str(int(fragile)),
    ]


def write_records_csv(path, records, dataset, moran_values, fragile_flags):
    with Path(path).open("w", newline="") as fh:
        fh.write(f"# schema: {SCHEMA_RECORDS}\n")
        writer = csv.writer(fh)
        writer.writerow(RECORD_FIELDS)
        for i, record in enumerate(records):
            rec_id = dataset.ids[record.index] if dataset.ids is not None else None
            writer.writerow(_record_row(record, rec_id, moran_values[i], fragile_flags[i]))


def _moran_over_records(records, lats, lons, k_moran):
    """Per-record local Moran of the target-row residuals; ill-posed -> NaN."""
    residuals = np.array([r.residual_at_target for r in records])
    finite = np.isfinite(residuals)
    values = np.full(len(records), math.nan)
    if np.sum(finite) >= 2:
        sub, defined = local_moran(
            residuals[finite], np.asarray(lats)[finite], np.asarray(lons)[finite], k_moran
        )
        if defined:
            values[finite] = sub
        else:
            values[finite] = 0.0
    return values


def _annotate_and_write(path, records, dataset, k_moran, kappa_quantile, neff_floor):
    lats = [r.lat for r in records]
    lons = [r.lon for r in records]
    moran = _moran_over_records(records, lats, lons, k_moran)
    fragile = reliability_mask(records, kappa_quantile, neff_floor)
    write_records_csv(path, records, dataset, moran, fragile)


# ---------------------------------------------------------------- config

_CONFIG_FLAGS = (
    ("k", int), ("h", float), ("gamma", float), ("u", float),
    ("n0", float), ("n_min", float), ("eta_max", float),
    ("eps_phi", float), ("eps_theta", float), ("eps_eta", float),
    ("eps_kappa", float), ("theta_z_mode", str), ("phi_mode", str),
    ("eta_mode", str), ("seed", int),
)


def _add_config_flags(parser):
    parser.add_argument("--config", type=Path, help="JSON file with config fields")
    for name, typ in _CONFIG_FLAGS:
        parser.add_argument(f"--{name.replace('_', '-')}", type=typ, default=None)


def build_config(args):
    """Flags override config-file values override documented defaults."""
    values = {}
    if getattr(args, "config", None):
        try:
            loaded = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise InputError(f"cannot read config file {args.config}: {exc}") from exc
        known = {name for name, _ in _CONFIG_FLAGS}
        unknown = set(loaded) - known
        if unknown:
            raise InputError(f"unknown config keys: {sorted(unknown)}")
        values.update(loaded)
    for name, _ in _CONFIG_FLAGS:
        flag = getattr(args, name, None)
        if flag is not None:
            values[name] = flag
    try:
        return GimbalConfig(**values)
    except (ConfigurationError, TypeError) as exc:
        raise InputError(str(exc)) from exc


# ---------------------------------------------------------------- commands

def cmd_fit(args):
    dataset = read_dataset(args.input)
    config = build_config(args)
    try:
        records = fit_all(dataset, config, threads=args.threads)
    except (ConfigurationError, ValueError) as exc:
        raise InputError(str(exc)) from exc

    _annotate_and_write(
        args.out_records, records, dataset,
        args.moran_k, args.fragile_kappa_quantile, args.fragile_neff_floor,
    )
    from .experiments import summarize

    try:
        map_summary = dataclasses.asdict(summarize(records))
    except ValueError:
        # every location ill-posed: records still emitted, summary is null
        map_summary = None
    summary = {
        "schema": "gimbal.summary.v1",
        "version": __version__,
        "config": dataclasses.asdict(config),
        "map_summary": map_summary,
    }
    Path(args.out_summary).write_text(
        json.dumps(_json_safe(summary), sort_keys=True, indent=2) + "\n"
    )
    return 0


def cmd_predict(args):
    train = read_dataset(args.train)
    test = read_dataset(args.test)
    config = build_config(args)
    if config.k > train.n:
        raise InputError(f"K={config.k} exceeds training size {train.n}")

    use_residual_knn = args.residual_knn is not None and args.residual_knn > 0
    training_residuals = None
    if use_residual_knn:
        if args.residual_knn > train.n:
            raise InputError(f"--residual-knn {args.residual_knn} exceeds training size {train.n}")
        train_records = fit_all(train, config, threads=args.threads)
        training_residuals = np.array([r.residual_at_target for r in train_records])

    _, x_mean, x_std = standardized_covariate(train.x)
    with Path(args.out).open("w", newline="") as fh:
        fh.write(f"# schema: {SCHEMA_PREDICTIONS}\n")
        writer = csv.writer(fh)
        header = ["index", "lat", "lon", "x", "y", "prediction", "ill_posed"]
        if use_residual_knn:
            header += ["residual_correction", "prediction_corrected"]
        writer.writerow(header)
        for i in range(test.n):
            pred, record = predict_at(
                train, config, float(test.lat[i]), float(test.lon[i]),
                float(test.x[i]), x_moments=(x_mean, x_std),
            )
            ill = not record.fit.well_posed
            row = [str(i), _fmt(float(test.lat[i])), _fmt(float(test.lon[i])),
                   _fmt(float(test.x[i])), _fmt(float(test.y[i])),
                   _fmt(pred), str(int(ill))]
            if use_residual_knn:
                corr = residual_knn_correct(
                    training_residuals, train.lat, train.lon,
                    float(test.lat[i]), float(test.lon[i]), args.residual_knn,
                )
                row += [_fmt(corr), _fmt(pred + corr if not ill else math.nan)]
            writer.writerow(row)
    return 0


def cmd_simulate(args):
    try:
        spec = SimSpec(
            n=args.n, lat0=args.lat0, lon0=args.lon0, extent=args.extent,
            sampling=args.sampling, rho=args.rho, psi=args.psi,
            delta_beta=args.delta_beta, sigma=args.sigma, c_rad=args.c_rad,
            seed=args.seed,
        )
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    dataset, beta1 = generate(spec)
    write_dataset_csv(args.out, dataset, beta1_true=beta1)
    return 0


_EXPERIMENT_IDS = {"7.1": "e71", "7.2": "e72", "7.3": "e73", "7.4": "e74"}


def cmd_experiment(args):
    exp_id = _EXPERIMENT_IDS.get(args.id, args.id)
    if exp_id not in _EXPERIMENT_IDS.values():
        raise InputError(f"unknown experiment id {args.id!r}")
    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    report, records_by_variant = run_experiment(exp_id, base_seed=args.seed, threads=args.threads)

    spec = SimSpec(**report["sim_spec"])
    dataset, _ = generate(spec)
    for name, records in records_by_variant.items():
        _annotate_and_write(
            outdir / f"{exp_id}_{name}.csv", records, dataset,
            DEFAULT_K_MORAN, 0.95, 0.0,
        )
    (outdir / f"{exp_id}_report.json").write_text(
        json.dumps(_json_safe(report), sort_keys=True, indent=2) + "\n"
    )

    failed = [k for k, v in report["properties"].items() if not v["pass"]]
    for name in sorted(report["properties"]):
        verdict = report["properties"][name]
        print(f"{exp_id} {name}: {'PASS' if verdict['pass'] else 'FAIL'}")
    if failed:
        print(f"{exp_id}: {len(failed)} property check(s) failed", file=sys.stderr)
    return 0


# ---------------------------------------------------------------- parser

def _build_parser():
    parser = argparse.ArgumentParser(prog="gimbal", description=__doc__)
    parser.add_argument("--version", action="version", version=f"gimbal {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_fit = sub.add_parser("fit", help="fit every location of a dataset")
    p_fit.add_argument("--input", required=True, type=Path)
    p_fit.add_argument("--out-records", required=True, type=Path)
    p_fit.add_argument("--out-summary", required=True, type=Path)
    p_fit.add_argument("--threads", type=int, default=1, help="0 = all cores")
    p_fit.add_argument("--moran-k", type=int, default=DEFAULT_K_MORAN)
    p_fit.add_argument("--fragile-kappa-quantile", type=float, default=0.95)
    p_fit.add_argument("--fragile-neff-floor", type=float, default=0.0)
    _add_config_flags(p_fit)
    p_fit.set_defaults(func=cmd_fit)

    p_pred = sub.add_parser("predict", help="out-of-sample prediction")
    p_pred.add_argument("--train", required=True, type=Path)
    p_pred.add_argument("--test", required=True, type=Path)
    p_pred.add_argument("--out", required=True, type=Path)
    p_pred.add_argument("--threads", type=int, default=1)
    p_pred.add_argument("--residual-knn", type=int, default=None)
    _add_config_flags(p_pred)
    p_pred.set_defaults(func=cmd_predict)

    p_sim = sub.add_parser("simulate", help="generate a seeded synthetic dataset")
    p_sim.add_argument("--out", required=True, type=Path)
    p_sim.add_argument("--n", type=int, default=1200)
    p_sim.add_argument("--lat0", type=float, default=35.0)
    p_sim.add_argument("--lon0", type=float, default=135.0)
    p_sim.add_argument("--extent", type=float, default=40_000.0)
    p_sim.add_argument("--sampling", choices=["uniform", "gaussian"], default="uniform")
    p_sim.add_argument("--rho", type=float, default=1.0)
    p_sim.add_argument("--psi", type=float, default=0.0)
    p_sim.add_argument("--delta-beta", type=float, default=0.5)
    p_sim.add_argument("--sigma", type=float, default=1.0)
    p_sim.add_argument("--c-rad", type=float, default=0.0)
    p_sim.add_argument("--seed", type=int, default=0)
    p_sim.set_defaults(func=cmd_simulate)

    p_exp = sub.add_parser("experiment", help="run a mechanism experiment")
    p_exp.add_argument("--id", required=True, help="7.1, 7.2, 7.3 or 7.4")
    p_exp.add_argument("--seed", type=int, default=0)
    p_exp.add_argument("--outdir", required=True, type=Path)
    p_exp.add_argument("--threads", type=int, default=1)
    p_exp.set_defaults(func=cmd_experiment)
    return parser


def main(argv=None):
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (InputError, ConfigurationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # internal invariant violation
        print(f"internal error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
