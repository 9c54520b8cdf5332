"""Command-line front end: simulate, fit, evaluate, replicate, bootstrap,
bandwidth sensitivity. Each command reads a JSON config and writes CSV
or JSON outputs (plus rendered figures on the report paths).

Exit codes: 0 success, 1 usage or config error, 2 data error, 3
numerical failure.
"""

from __future__ import annotations

import csv
import json
import sys
from pathlib import Path

import click
import numpy as np

from msic.data_model import (
    DataValidationError,
    ModelParams,
    read_dataset_csv,
    write_dataset_csv,
)
from msic.fit import FitConfig, FitError, bootstrap_ci, fit_method
from msic.latency import CoxError
from msic.metrics import mse_cure_grid, prediction_error
from msic.simgen import ExperimentSpec, generate, preset, summarize
from msic.study import RAW_COLUMNS, SUMMARY_COLUMNS, run_replications, summarize_replications

SCHEMA_VERSION = 1

USAGE_ERROR, DATA_ERROR, NUMERICAL_ERROR = 1, 2, 3


class ConfigError(Exception):
    pass


def _fail(code, msg):
    click.echo(f"error: {msg}", err=True)
    sys.exit(code)


def load_config(path):
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed config: {exc}")
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    version = cfg.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ConfigError(f"unsupported schema_version: {version!r}")
    return cfg


def experiment_spec(cfg):
    try:
        if "experiment" in cfg:
            overrides = {k: cfg[k] for k in ("n", "seed", "censor_rate") if k in cfg}
            if "censor_rate" in overrides:
                overrides["censor_rate"] = float(overrides["censor_rate"])
            return preset(cfg["experiment"], **overrides)
        if "spec" in cfg:
            return ExperimentSpec.from_dict(cfg["spec"])
    except (DataValidationError, TypeError, KeyError) as exc:
        raise ConfigError(f"invalid experiment config: {exc}")
    raise ConfigError("config needs an 'experiment' preset name or a 'spec' object")


def fit_config(cfg):
    try:
        fc = FitConfig.from_dict(cfg.get("fit", {}))
        if "seed" in cfg and "seed" not in cfg.get("fit", {}):
            fc = FitConfig.from_dict({**fc.to_dict(), "seed": cfg["seed"]})
        return fc
    except (DataValidationError, TypeError) as exc:
        raise ConfigError(f"invalid fit config: {exc}")


def _write_csv(path, columns, rows):
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=columns)
        w.writeheader()
        for row in rows:
            w.writerow({k: row.get(k, "") for k in columns})


@click.group()
def main():
    """Monotone single-index mixture cure model toolkit."""


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path())
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--seed", type=int, default=None, help="override config seed")
def simulate(config_path, out_dir, seed):
    """Generate a dataset: data.csv, truth.csv, summary.json."""
    try:
        cfg = load_config(config_path)
        spec = experiment_spec(cfg)
        if seed is not None:
            spec = spec.with_(seed=seed)
    except ConfigError as exc:
        _fail(USAGE_ERROR, exc)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ds, truth = generate(spec)
    write_dataset_csv(ds, out / "data.csv")
    with open(out / "truth.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["B", "T", "C", "p"])
        w.writerows(zip(truth["B"].tolist(), truth["T"].tolist(),
                        truth["C"].tolist(), truth["p"].tolist()))
    cure, cens, plateau = summarize(ds, truth)
    with open(out / "summary.json", "w") as fh:
        json.dump({"cure_proportion": cure, "censoring_rate": cens,
                   "plateau_proportion": plateau, "n": spec.n,
                   "spec": spec.to_dict()}, fh, indent=1)
    click.echo(f"wrote {spec.n} rows to {out / 'data.csv'}")


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path())
@click.option("--data", "data_csv", required=True, type=click.Path())
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--method", default="msic", help="msic | msic-score | lc")
@click.option("--plot/--no-plot", default=False, help="render the fitted link")
def fit(config_path, data_csv, out_path, method, plot):
    """Fit a model to a dataset CSV and write the model file."""
    if method not in ("msic", "msic-score", "lc"):
        _fail(USAGE_ERROR, f"unknown method {method!r}")
    try:
        cfg = load_config(config_path)
        fc = fit_config(cfg)
    except ConfigError as exc:
        _fail(USAGE_ERROR, exc)
    try:
        ds = read_dataset_csv(data_csv, z_from_x=cfg.get("z_from_x"))
    except (DataValidationError, OSError, ValueError) as exc:
        _fail(DATA_ERROR, exc)
    try:
        model = fit_method(ds, fc, method)
    except (FitError, CoxError) as exc:
        _fail(NUMERICAL_ERROR, exc)
    except DataValidationError as exc:
        _fail(DATA_ERROR, exc)
    model.save(out_path)
    if plot:
        from msic.plots import plot_fitted_link

        plot_fitted_link(model, str(Path(out_path).with_suffix(".png")))
    click.echo(f"method={method} loglik={model.loglik:.6f} "
               f"iterations={model.iterations} converged={model.converged}")


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path())
@click.option("--model", "model_path", required=True, type=click.Path())
@click.option("--data", "data_csv", required=True, type=click.Path())
@click.option("--out", "out_path", required=True, type=click.Path())
def evaluate(config_path, model_path, data_csv, out_path):
    """Prediction error of a fitted model on held-out data (grid MSE too
    when the config carries the experiment truth)."""
    try:
        cfg = load_config(config_path)
    except ConfigError as exc:
        _fail(USAGE_ERROR, exc)
    try:
        ds = read_dataset_csv(data_csv, z_from_x=cfg.get("z_from_x"))
        model = ModelParams.load(model_path)
    except (DataValidationError, OSError, ValueError, KeyError) as exc:
        _fail(DATA_ERROR, exc)
    fc = fit_config(cfg)
    result = {"prediction_error": prediction_error(
        model, ds, alternate_orientation=fc.pe_alternate_orientation)}
    if "experiment" in cfg or "spec" in cfg:
        spec = experiment_spec(cfg)
        result["mse_cure_grid"] = mse_cure_grid(
            model, (spec.link_id, spec.intercept, spec.gamma0))
    with open(out_path, "w") as fh:
        json.dump(result, fh, indent=1)
    click.echo(json.dumps(result))


def _progress(done, total):
    click.echo(f"\rreplication {done}/{total}", nl=(done == total), err=True)


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path())
@click.option("--out", "out_csv", required=True, type=click.Path())
@click.option("--workers", type=int, default=None)
@click.option("--plot/--no-plot", default=True)
def replicate(config_path, out_csv, workers, plot):
    """Monte Carlo study: summary CSV, per-replication raw CSV, figure."""
    try:
        cfg = load_config(config_path)
        spec = experiment_spec(cfg)
        fc = fit_config(cfg)
        methods = cfg.get("methods", ["msic"])
        reps = int(cfg["replications"])
    except (ConfigError, KeyError, ValueError) as exc:
        _fail(USAGE_ERROR, f"invalid config: {exc}")
    workers = workers or int(cfg.get("workers", 1))
    raw = run_replications(spec, fc, methods, reps, workers=workers,
                           progress=_progress)
    summary = summarize_replications(spec, raw, methods)
    out = Path(out_csv)
    _write_csv(out, SUMMARY_COLUMNS, summary)
    raw_rows = [{**r, "gamma": json.dumps(r["gamma"]), "beta": json.dumps(r["beta"])}
                for r in raw]
    _write_csv(out.with_name(out.stem + "_raw.csv"), RAW_COLUMNS, raw_rows)
    if plot:
        from msic.plots import plot_replication_mse

        plot_replication_mse(raw, methods, str(out.with_suffix(".png")))
    failures = sum(1 for r in raw if r["error"])
    for s in summary:
        click.echo(f"{s['method']}: mse_mean={s['mse_mean']:.5f} "
                   f"gamma_bias={s['gamma_bias']:.5f} beta_bias={s['beta_bias']:.5f}")
    if failures > 0.1 * len(raw):
        _fail(NUMERICAL_ERROR, f"{failures}/{len(raw)} replications failed")


@main.command("bw-sensitivity")
@click.option("--config", "config_path", required=True, type=click.Path())
@click.option("--out", "out_csv", required=True, type=click.Path())
@click.option("--workers", type=int, default=None)
@click.option("--plot/--no-plot", default=True)
def bw_sensitivity(config_path, out_csv, workers, plot):
    """Replication study per bandwidth multiplier; (m, MSE) table + figure."""
    try:
        cfg = load_config(config_path)
        spec = experiment_spec(cfg)
        fc = fit_config(cfg)
        reps = int(cfg["replications"])
        multipliers = sorted(cfg.get(
            "bandwidth_multipliers", [0.25, 0.5, 0.75, 1, 1.25, 1.5, 2, 2.5, 3]))
    except (ConfigError, KeyError, ValueError) as exc:
        _fail(USAGE_ERROR, f"invalid config: {exc}")
    workers = workers or int(cfg.get("workers", 1))
    rows = []
    for m in multipliers:
        fc_m = FitConfig.from_dict({**fc.to_dict(), "bandwidth_multiplier": float(m)})
        raw = run_replications(spec, fc_m, ["msic"], reps, workers=workers)
        summary = summarize_replications(spec, raw, ["msic"])[0]
        rows.append({"multiplier": float(m), "mse_mean": summary["mse_mean"],
                     "mse_variance": summary["mse_variance"],
                     "failures": summary["failures"]})
        click.echo(f"m={m}: mse_mean={summary['mse_mean']:.5f}")
    _write_csv(out_csv, ["multiplier", "mse_mean", "mse_variance", "failures"], rows)
    if plot:
        from msic.plots import plot_bandwidth_sensitivity

        plot_bandwidth_sensitivity(rows, str(Path(out_csv).with_suffix(".png")))


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path())
@click.option("--data", "data_csv", required=True, type=click.Path())
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--method", default="msic")
@click.option("-b", "--resamples", type=int, default=500)
@click.option("--level", type=float, default=0.95)
def bootstrap(config_path, data_csv, out_path, method, resamples, level):
    """Naive percentile bootstrap confidence intervals for gamma and beta."""
    try:
        cfg = load_config(config_path)
        fc = fit_config(cfg)
    except ConfigError as exc:
        _fail(USAGE_ERROR, exc)
    try:
        ds = read_dataset_csv(data_csv, z_from_x=cfg.get("z_from_x"))
    except (DataValidationError, OSError, ValueError) as exc:
        _fail(DATA_ERROR, exc)
    try:
        result = bootstrap_ci(ds, fc, resamples, level, method=method)
    except FitError as exc:
        _fail(NUMERICAL_ERROR, exc)
    except DataValidationError as exc:
        _fail(USAGE_ERROR, exc)
    with open(out_path, "w") as fh:
        json.dump(result, fh, indent=1)
    click.echo(f"bootstrap: {result['B']} resamples, {result['failures']} failures")


if __name__ == "__main__":
    main()
