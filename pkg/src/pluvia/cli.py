"""Command line interface.

Subcommands mirror the analysis workflow: fit, simulate, calibrate,
diagnose, simstudy, forecast-eval.  Every command reads one JSON
configuration file, optionally patched by repeatable --set key=value
overrides, and writes its outputs into --output-dir.  JSON outputs
carry a meta block with the configuration hash, the seed, the RNG
scheme name and a created_at timestamp; apart from that timestamp,
rerunning a command with the same configuration produces byte
identical files.

Exit codes: 0 success; 2 input data problems; 3 optimization or
numerical failures (including a fit or calibration that finishes
without converging, whose output file is still written); 4
configuration problems.
"""

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__, rng
from .dataio import (
    ConfigError,
    DataError,
    PanelSchema,
    apply_overrides,
    config_hash,
    load_config,
    load_covariates_csv,
    load_panels,
    now_iso,
    preprocess_small_values,
    save_panel,
    write_json,
)
from .diagnostics import (
    DEFAULT_BIN_EDGES,
    DEFAULT_WET_THRESHOLD,
    DiagnosticsOptions,
    build_report,
    forecast_odds,
)
from .inference import (
    DEFAULT_THRESHOLD_GRID,
    FitOptions,
    ProfileOptions,
    calibrate_threshold,
    fit_ml,
    profile_interval,
)
from .likelihood import LikelihoodContext, param_names
from .model import (
    CovariatePanel,
    ModelParams,
    SimulationConfig,
    VolatilityOverflowError,
    simulate,
)
from .simstudy import CovariateSpec, StudyConfig, reference_params, run_study

logger = logging.getLogger("pluvia.cli")

STREAM_CLI_SIMULATE = 1

EXIT_OK = 0
EXIT_DATA = 2
EXIT_OPTIM = 3
EXIT_CONFIG = 4


def _get(config, dotted, default=KeyError):
    node = config
    for part in dotted.split("."):
        if not isinstance(node, dict) or part not in node:
            if default is KeyError:
                raise ConfigError(f"configuration key {dotted!r} is required")
            return default
        node = node[part]
    return node


def _meta(config, seed):
    return {
        "config_hash": config_hash(config),
        "created_at": now_iso(),
        "generator": rng.GENERATOR_ALGORITHM,
        "package_version": __version__,
        "seed": seed,
    }


def _schema(config):
    return PanelSchema(
        time_column=_get(config, "data.time_column", "time"),
        station_columns=_nullable_tuple(_get(config, "data.stations", None)),
        covariate_columns=_nullable_tuple(
            _get(config, "data.covariate_names", None)
        ),
    )


def _nullable_tuple(value):
    return None if value is None else tuple(value)


def _load_bundle(config):
    return load_panels(
        _get(config, "data.precip"),
        _get(config, "data.covariates"),
        schema=_schema(config),
        train_end=_get(config, "data.train_end", None),
        winter_only=bool(_get(config, "data.winter_only", False)),
    )


def _fit_options(config):
    section = _get(config, "fit", {})
    if not isinstance(section, dict):
        raise ConfigError("'fit' must be an object")
    known = {f.name for f in FitOptions.__dataclass_fields__.values()}
    unknown = set(section) - known
    if unknown:
        raise ConfigError(f"unknown fit option(s): {sorted(unknown)}")
    try:
        return FitOptions(**section)
    except TypeError as exc:
        raise ConfigError(f"bad fit options: {exc}") from None


def _params_to_dict(params):
    return {
        "contagion": params.contagion.tolist(),
        "volatility_coefs": params.volatility_coefs.tolist(),
        "threshold": params.threshold,
    }


def _params_from_dict(obj, where):
    try:
        return ModelParams(
            contagion=np.array(obj["contagion"], dtype=np.float64),
            volatility_coefs=np.array(obj["volatility_coefs"], dtype=np.float64),
            threshold=float(obj["threshold"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad parameters in {where}: {exc}") from None


def _resolve_params(config):
    inline = _get(config, "params", None)
    if inline is not None:
        return _params_from_dict(inline, "'params'")
    path = _get(config, "params_file", None)
    if path is None:
        raise ConfigError("provide 'params' inline or a 'params_file'")
    try:
        with open(path, "r", encoding="utf-8") as handle:
            content = json.load(handle)
    except OSError as exc:
        raise ConfigError(f"cannot read params_file {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"params_file {path}: invalid JSON: {exc}") from None
    estimates = content.get("result", {}).get("estimates", content)
    return _params_from_dict(estimates, path)


def _context_for(config, precip, covariates, threshold):
    mode = _get(config, "model.small_values", "mask")
    cleaned, mask = preprocess_small_values(precip, threshold, mode=mode)
    return LikelihoodContext(cleaned, covariates, threshold, mask=mask)


def _interval_indices(spec, n_stations, n_covariates):
    names = param_names(n_stations, n_covariates)
    if spec == "contagion":
        return list(range(n_stations * n_stations))
    if spec == "all":
        return list(range(len(names)))
    indices = []
    for item in spec:
        if isinstance(item, str):
            if item not in names:
                raise ConfigError(f"unknown parameter name {item!r}")
            indices.append(names.index(item))
        else:
            idx = int(item)
            if not 0 <= idx < len(names):
                raise ConfigError(f"parameter index {idx} out of range")
            indices.append(idx)
    return indices


def _cmd_fit(args, config, out_dir):
    bundle = _load_bundle(config)
    threshold = float(_get(config, "model.threshold"))
    context = _context_for(
        config, bundle.train_precip, bundle.train_covariates, threshold
    )
    fit = fit_ml(context, options=_fit_options(config))
    logger.info(
        "fit finished: loglik=%.4f converged=%s evals=%d",
        fit.max_loglik, fit.converged, fit.n_evals,
    )
    result = {
        "estimates": _params_to_dict(fit.estimates),
        "max_loglik": fit.max_loglik,
        "converged": fit.converged,
        "n_evals": fit.n_evals,
        "n_obs_used": fit.n_obs_used,
        "grad_norm": fit.grad_norm,
        "simplex_diameter": fit.simplex_diameter,
        "trace": [[n, value] for n, value in fit.trace],
    }
    interval_spec = _get(config, "intervals", None)
    if interval_spec is not None and fit.converged:
        level = float(interval_spec.get("level", 0.95))
        indices = _interval_indices(
            interval_spec.get("params", "contagion"),
            context.n_stations,
            context.n_covariates,
        )
        options = ProfileOptions()
        intervals = []
        for index in indices:
            ci = profile_interval(context, fit, index, level=level, options=options)
            intervals.append(
                {
                    "param_index": ci.param_index,
                    "param_name": ci.param_name,
                    "level": ci.level,
                    "estimate": ci.estimate,
                    "lower": ci.lower,
                    "upper": ci.upper,
                    "lower_open": ci.lower_open,
                    "upper_open": ci.upper_open,
                }
            )
        result["intervals"] = intervals
    seed = int(_get(config, "seed", 0))
    write_json(
        out_dir / "fit.json",
        {"meta": _meta(config, seed), "resolved_config": config, "result": result},
    )
    return EXIT_OK if fit.converged else EXIT_OPTIM


def _cmd_simulate(args, config, out_dir):
    params = _resolve_params(config)
    covariates = load_covariates_csv(_get(config, "data.covariates"), _schema(config))
    n_steps = _get(config, "simulate.n_steps", None)
    if n_steps is not None:
        n_steps = int(n_steps)
        if n_steps > covariates.n_hours:
            raise ConfigError(
                f"simulate.n_steps={n_steps} exceeds the {covariates.n_hours} "
                "available covariate rows"
            )
        covariates = covariates.window(0, n_steps)
    initial = _get(config, "simulate.initial_state", None)
    if initial is None:
        initial = np.zeros(params.n_stations)
    seed = int(_get(config, "seed", 0))
    panel = simulate(
        params,
        covariates,
        SimulationConfig(
            initial_state=np.asarray(initial, dtype=np.float64),
            n_steps=covariates.n_hours,
            rng_seed=rng.seed_sequence(seed, (STREAM_CLI_SIMULATE, 0)),
        ),
    )
    save_panel(
        panel,
        out_dir / "simulated.csv",
        meta={
            "config_hash": config_hash(config),
            "generator": rng.GENERATOR_ALGORITHM,
            "seed": seed,
        },
    )
    return EXIT_OK


def _cmd_calibrate(args, config, out_dir):
    bundle = _load_bundle(config)
    section = _get(config, "calibrate", {})
    seed = int(_get(config, "seed", 0))
    calibration = calibrate_threshold(
        bundle.train_precip,
        bundle.train_covariates,
        candidates=tuple(section.get("candidates", DEFAULT_THRESHOLD_GRID)),
        start=float(section.get("start", 0.5)),
        n_sims=int(section.get("n_sims", 20)),
        max_iters=int(section.get("max_iters", 10)),
        master_seed=seed,
        fit_options=_fit_options(config),
    )
    result = {
        "candidates": list(calibration.candidates),
        "chosen": calibration.chosen,
        "converged": calibration.converged,
        "steps": [
            {"fitted_at": s.fitted_at, "selected": s.selected, "gap": s.gap}
            for s in calibration.steps
        ],
    }
    write_json(
        out_dir / "calibration.json",
        {"meta": _meta(config, seed), "resolved_config": config, "result": result},
    )
    return EXIT_OK if calibration.converged else EXIT_OPTIM


def _window(bundle, which):
    if which == "validation":
        return bundle.validation_precip, bundle.validation_covariates
    if which == "train":
        return bundle.train_precip, bundle.train_covariates
    if which == "all":
        return bundle.precip, bundle.covariates
    raise ConfigError(f"unknown window {which!r}")


def _cmd_diagnose(args, config, out_dir):
    bundle = _load_bundle(config)
    params = _resolve_params(config)
    section = _get(config, "diagnostics", {})
    precip, covariates = _window(bundle, section.get("window", "validation"))
    seed = int(_get(config, "seed", 0))
    options = DiagnosticsOptions(
        wet_threshold=float(section.get("wet_threshold", DEFAULT_WET_THRESHOLD)),
        bin_edges=tuple(section.get("bin_edges", DEFAULT_BIN_EDGES)),
        lags=tuple(section.get("lags", (-6, -3, -1, 0, 1, 3, 6))),
        n_sim_replicas=int(section.get("n_sim_replicas", 20)),
        master_seed=seed,
    )
    report = build_report(params, precip, covariates, options)
    write_json(
        out_dir / "diagnostics.json",
        {"meta": _meta(config, seed), "resolved_config": config, "result": report},
    )
    return EXIT_OK


def _cmd_simstudy(args, config, out_dir):
    section = _get(config, "study", {})
    if section.get("reference", True) and "params" not in config:
        params = reference_params(bool(section.get("raw_intercept", False)))
    else:
        params = _resolve_params(config)
    specs_cfg = section.get("covariates")
    if specs_cfg is None:
        specs = None
    else:
        specs = tuple(
            CovariateSpec(
                name=str(s["name"]),
                mean=float(s.get("mean", 0.0)),
                stdev=float(s.get("stdev", 1.0)),
                autocorrelation=float(s.get("autocorrelation", 0.8)),
            )
            for s in specs_cfg
        )
    seed = int(_get(config, "seed", 0))
    kwargs = {
        "true_params": params,
        "sample_sizes": tuple(section.get("sample_sizes", (100, 1000))),
        "n_replicas": int(section.get("n_replicas", 100)),
        "master_seed": seed,
    }
    if specs is not None:
        kwargs["covariate_specs"] = specs
    study_config = StudyConfig(**kwargs)
    report = run_study(
        study_config, fit_options=_fit_options(config), n_workers=args.threads
    )
    write_json(
        out_dir / "study.json",
        {
            "meta": _meta(config, seed),
            "resolved_config": config,
            "result": report.to_dict(),
        },
    )
    return EXIT_OK


def _cmd_forecast_eval(args, config, out_dir):
    bundle = _load_bundle(config)
    params = _resolve_params(config)
    section = _get(config, "forecast", {})
    precip, covariates = _window(bundle, section.get("window", "validation"))
    seed = int(_get(config, "seed", 0))
    odds = forecast_odds(
        params,
        covariates,
        precip,
        horizons=tuple(section.get("horizons", (1, 2, 3, 6, 12, 24))),
        n_paths=int(section.get("n_paths", 200)),
        wet_threshold=float(
            section.get("wet_threshold", DEFAULT_WET_THRESHOLD)
        ),
        origin_stride=int(section.get("origin_stride", 1)),
        master_seed=seed,
    )
    result = {
        "horizons": list(odds.horizons),
        "n_origins": odds.n_origins,
        "n_paths": odds.n_paths,
        "wet_threshold": odds.wet_threshold,
        "model_accuracy": odds.model_accuracy.tolist(),
        "persistence_accuracy": odds.persistence_accuracy.tolist(),
        "model_by_station": odds.model_by_station.tolist(),
        "persistence_by_station": odds.persistence_by_station.tolist(),
    }
    write_json(
        out_dir / "forecast.json",
        {"meta": _meta(config, seed), "resolved_config": config, "result": result},
    )
    return EXIT_OK


_COMMANDS = {
    "fit": _cmd_fit,
    "simulate": _cmd_simulate,
    "calibrate": _cmd_calibrate,
    "diagnose": _cmd_diagnose,
    "simstudy": _cmd_simstudy,
    "forecast-eval": _cmd_forecast_eval,
}


def build_parser():
    parser = argparse.ArgumentParser(
        prog="pluvia",
        description="Multi-site precipitation generator: fit, simulate, "
        "calibrate, diagnose.",
    )
    parser.add_argument(
        "--version", action="version", version=f"%(prog)s {__version__}"
    )
    subparsers = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        sub = subparsers.add_parser(name)
        sub.add_argument("--config", required=True, help="JSON configuration file")
        sub.add_argument(
            "--set",
            action="append",
            default=[],
            metavar="KEY=VALUE",
            help="override a configuration entry (dotted path, repeatable)",
        )
        sub.add_argument(
            "--output-dir", default=".", help="directory for output files"
        )
        sub.add_argument(
            "--threads", type=int, default=1, help="worker processes for studies"
        )
        sub.add_argument(
            "--json-errors",
            action="store_true",
            help="report handled errors as JSON on stderr",
        )
        sub.add_argument(
            "-v", "--verbose", action="store_true", help="debug logging"
        )
    return parser


def _emit_error(exc, code, json_errors):
    if json_errors:
        payload = {
            "error": type(exc).__name__,
            "message": str(exc),
            "exit_code": code,
        }
        print(json.dumps(payload, sort_keys=True), file=sys.stderr)
    else:
        print(f"pluvia: error: {exc}", file=sys.stderr)
    return code


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        stream=sys.stderr,
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        config = load_config(args.config)
        config = apply_overrides(config, args.set)
        out_dir = Path(args.output_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        logger.info("config hash %s", config_hash(config))
        return _COMMANDS[args.command](args, config, out_dir)
    except ConfigError as exc:
        return _emit_error(exc, EXIT_CONFIG, args.json_errors)
    except DataError as exc:
        return _emit_error(exc, EXIT_DATA, args.json_errors)
    except (VolatilityOverflowError, RuntimeError) as exc:
        return _emit_error(exc, EXIT_OPTIM, args.json_errors)


if __name__ == "__main__":
    sys.exit(main())
