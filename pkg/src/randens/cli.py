"""Command-line front end: ``randens {forecast,sweep,compare,synth}``.

A run is described by one JSON config document (see README). Flags override
config keys: ``--seed``, ``--out`` and ``--jobs`` directly, anything else via
``--set dotted.key=value`` (value parsed as JSON, falling back to a string).

Exit codes: 0 success, 1 configuration error, 2 data error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import copy
import csv
import datetime as dt
import hashlib
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .data import (
    CsvSchema,
    EnsembleForecaster,
    NaiveForecaster,
    load_csv,
    read_exclusions,
    rolling_forecast,
    synth_series,
    write_csv,
)
from .ensemble import DEFAULT_M, DiversityStrategy, diversity
from .errors import ConfigError, DataError, NumericalError, RandEnsError, WindowMismatch
from .evaluation import (
    ape_distribution,
    compute_metrics,
    gw_matrix,
    write_metrics_table,
    write_pvalue_csv,
)
from .randnn import RandNNConfig

log = logging.getLogger("randens")

CONFIG_VERSION = 1
SEED_DERIVATION = (
    "day seed = SeedSequence([seed, date.toordinal()]).generate_state(1)[0]; "
    "ensemble member k uses default_rng(day_seed + k); shared template uses default_rng([day_seed, 0x7E3A])"
)

DEFAULTS = {
    "version": CONFIG_VERSION,
    "name": None,
    "data": {"synth": {}},
    "exclusions": None,
    "excluded_dates": [],
    "test_start": None,
    "test_end": None,
    "horizon": 1,
    "weekday_pairing": True,
    "model": {
        "kind": "E1",
        "parameter": 70.0,
        "M": DEFAULT_M,
        "m": 40,
        "alpha_max": 70.0,
        "base_m": None,
        "reuse_template_biases": False,
    },
    "seed": 0,
    "jobs": 1,
    "out": None,
    "sweep": None,
}


def _merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict) and key != "data":
            out[key] = _merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def _set_dotted(config: dict, assignment: str) -> None:
    key, sep, raw = assignment.partition("=")
    if not sep or not key:
        raise ConfigError(f"--set expects key=value, got {assignment!r}")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    node = config
    parts = key.split(".")
    for part in parts[:-1]:
        node = node.setdefault(part, {})
        if not isinstance(node, dict):
            raise ConfigError(f"cannot set {key!r}: {part!r} is not an object")
    node[parts[-1]] = value


def load_config(args) -> dict:
    raw = {}
    if args.config:
        try:
            raw = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from None
        if not isinstance(raw, dict):
            raise ConfigError("config must be a JSON object")
    config = _merge(DEFAULTS, raw)
    for assignment in args.set or ():
        _set_dotted(config, assignment)
    for flag in ("seed", "out", "jobs"):
        value = getattr(args, flag, None)
        if value is not None:
            config[flag] = value
    validate_config(config, getattr(args, "command", "forecast"))
    return config


def _date(config: dict, key: str) -> dt.date:
    try:
        return dt.date.fromisoformat(str(config[key]))
    except (TypeError, ValueError):
        raise ConfigError(f"{key} must be an ISO date, got {config.get(key)!r}") from None


def build_forecaster(model: dict, weekday_pairing: bool = True):
    kind = str(model.get("kind", "")).upper()
    if kind == "NAIVE":
        return NaiveForecaster()
    try:
        strategy = DiversityStrategy(kind, model["parameter"], model.get("base_m"), bool(model.get("reuse_template_biases", False)))
        RandNNConfig(model["m"], model["alpha_max"], 0)
    except ConfigError as exc:
        raise ConfigError(f"model: {exc}") from None
    except (TypeError, KeyError, ValueError) as exc:
        raise ConfigError(f"model: invalid value ({exc})") from None
    M = model.get("M", DEFAULT_M)
    if not isinstance(M, int) or M < 1:
        raise ConfigError(f"model.M must be a positive integer, got {M!r}")
    return EnsembleForecaster(strategy, M, int(model["m"]), float(model["alpha_max"]), bool(weekday_pairing))


def validate_config(config: dict, command: str = "forecast") -> None:
    if config.get("version") != CONFIG_VERSION:
        raise ConfigError(f"version must be {CONFIG_VERSION}, got {config.get('version')!r}")
    data = config.get("data")
    if not isinstance(data, dict) or len([k for k in ("csv", "synth") if k in data]) != 1:
        raise ConfigError("data must name exactly one source: 'csv' or 'synth'")
    if not isinstance(config.get("seed"), int) or config["seed"] < 0:
        raise ConfigError(f"seed must be a non-negative integer, got {config.get('seed')!r}")
    if not isinstance(config.get("jobs"), int) or config["jobs"] < 1:
        raise ConfigError(f"jobs must be a positive integer, got {config.get('jobs')!r}")
    if not isinstance(config.get("horizon"), int) or config["horizon"] < 1:
        raise ConfigError(f"horizon must be a positive integer, got {config.get('horizon')!r}")
    if config.get("test_start") is not None or config.get("test_end") is not None:
        if _date(config, "test_start") > _date(config, "test_end"):
            raise ConfigError("test_start must not be after test_end")
    if command != "sweep":
        # sweep cells override the model and are checked one by one
        build_forecaster(config["model"])


def config_hash(config: dict) -> str:
    canonical = {k: v for k, v in config.items() if k not in ("out", "jobs")}
    return hashlib.sha256(json.dumps(canonical, sort_keys=True).encode()).hexdigest()


def load_series(config: dict):
    data = config["data"]
    try:
        excluded = set(dt.date.fromisoformat(str(d)) for d in config.get("excluded_dates") or ())
    except ValueError as exc:
        raise ConfigError(f"excluded_dates: {exc}") from None
    if config.get("exclusions"):
        try:
            excluded |= read_exclusions(config["exclusions"])
        except OSError as exc:
            raise DataError(f"cannot read exclusion list: {exc}") from None
    if "csv" in data:
        schema = CsvSchema(data.get("timestamp_column", "timestamp"), data.get("value_column", "value"), data.get("timezone"))
        try:
            return load_csv(data["csv"], schema, excluded, int(data.get("n", 24)))
        except OSError as exc:
            raise DataError(f"cannot read data: {exc}") from None
    params = dict(data["synth"])
    try:
        return synth_series(**params, excluded=excluded)
    except TypeError as exc:
        raise ConfigError(f"data.synth: {exc}") from None


def prepare_out(path, force: bool) -> Path:
    if path is None:
        raise ConfigError("an output directory is required (--out or config 'out')")
    out = Path(path)
    if out.exists() and (not out.is_dir() or any(out.iterdir())) and not force:
        raise ConfigError(f"output directory {out} already exists; pass --force to overwrite")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_json(path: Path, payload) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def manifest(command: str, config: dict, **extra) -> dict:
    return {
        "command": command,
        "tool": "randens",
        "version": __version__,
        "numpy": np.__version__,
        "config": config,
        "config_sha256": config_hash(config),
        "seed": config["seed"],
        "seed_derivation": SEED_DERIVATION,
        **extra,
    }


def _require_window(config: dict):
    if config.get("test_start") is None or config.get("test_end") is None:
        raise ConfigError("test_start and test_end are required")
    return _date(config, "test_start"), _date(config, "test_end")


def cmd_forecast(config: dict, force: bool = False) -> int:
    start, end = _require_window(config)
    out = prepare_out(config["out"], force)
    series = load_series(config)
    forecaster = build_forecaster(config["model"], config["weekday_pairing"])
    result = rolling_forecast(series, start, end, forecaster, config["horizon"], config["seed"], config["jobs"])
    if not result.days:
        raise DataError("no test day could be forecast")

    result.to_csv(out / "forecasts.csv")
    metrics = compute_metrics(result.actuals(), result.forecasts())
    ape = ape_distribution(result.actuals(), result.forecasts())
    _write_json(out / "metrics.json", {**metrics.to_dict(), "ape_quantiles": ape.to_dict()["quantiles"]})
    stack = result.member_stack()
    div = None if stack is None else diversity(stack)
    _write_json(out / "diversity.json", {
        "diversity": None if div is None else div.value,
        "test_set_size": len(result.days) if div is None else div.test_set_size,
        "members": None if stack is None else stack.shape[0],
    })
    _write_json(out / "manifest.json", manifest(
        "forecast",
        config,
        test_start=start.isoformat(),
        test_end=end.isoformat(),
        day_seeds={d.date.isoformat(): d.seed for d in result.days},
        evaluated_days=len(result.days),
        skipped=[{"date": d.isoformat(), "reason": reason} for d, reason in result.skipped],
        artifacts=["forecasts.csv", "metrics.json", "diversity.json", "manifest.json"],
    ))
    print(f"{len(result.days)} days forecast, {len(result.skipped)} skipped; MAPE {metrics.mape:.4f}"
          + ("" if div is None else f", diversity {div.value:.4f}"))
    return 0


def _sweep_cells(config: dict):
    sweep = config.get("sweep")
    if not isinstance(sweep, dict):
        raise ConfigError("sweep requires a 'sweep' object with 'parameter' and/or 'm' grids")
    model = config["model"]
    m_grid = sweep.get("m") or [model["m"]]
    p_grid = sweep.get("parameter") or [model["parameter"]]
    seeds = sweep.get("seeds", 1)
    if not isinstance(seeds, int) or seeds < 1:
        raise ConfigError(f"sweep.seeds must be a positive integer, got {seeds!r}")
    cells = []
    for m in m_grid:
        for p in p_grid:
            cell = {**model, "m": m, "parameter": p}
            build_forecaster(cell)
            cells.append(cell)
    return cells, seeds


def cmd_sweep(config: dict, force: bool = False) -> int:
    start, end = _require_window(config)
    cells, n_seeds = _sweep_cells(config)
    out = prepare_out(config["out"], force)
    series = load_series(config)
    rows = []
    for cell in cells:
        forecaster = build_forecaster(cell, config["weekday_pairing"])
        mapes, divs = [], []
        for s in range(n_seeds):
            result = rolling_forecast(series, start, end, forecaster, config["horizon"], config["seed"] + s, config["jobs"])
            if not result.days:
                raise DataError("no test day could be forecast")
            mapes.append(compute_metrics(result.actuals(), result.forecasts()).mape)
            stack = result.member_stack()
            divs.append(np.nan if stack is None else diversity(stack).value)
        rows.append({
            "kind": str(cell["kind"]).upper(),
            "m": cell["m"],
            "parameter": cell["parameter"],
            "seeds": n_seeds,
            "mape": float(np.mean(mapes)),
            "mape_sd": float(np.std(mapes)),
            "diversity": float(np.mean(divs)),
        })
        log.info("cell m=%s parameter=%s: MAPE %.4f", cell["m"], cell["parameter"], rows[-1]["mape"])
    with open(out / "sweep.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})
    _write_json(out / "manifest.json", manifest(
        "sweep", config, test_start=start.isoformat(), test_end=end.isoformat(),
        seeds=[config["seed"] + s for s in range(n_seeds)], artifacts=["sweep.csv", "manifest.json"],
    ))
    print(f"{len(rows)} grid cells written to {out / 'sweep.csv'}")
    return 0


def read_run(path: Path):
    try:
        meta = json.loads((path / "manifest.json").read_text(encoding="utf-8"))
        with open(path / "forecasts.csv", newline="", encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
    except OSError as exc:
        raise DataError(f"cannot read run {path}: {exc}") from None
    days: dict = {}
    for row in rows:
        days.setdefault(row["date"], []).append((float(row["actual"]), float(row["forecast"])))
    name = meta.get("config", {}).get("name") or path.name
    return name, meta, {d: np.array(v) for d, v in days.items()}


def cmd_compare(run_dirs, out, force: bool = False) -> int:
    if len(run_dirs) < 1:
        raise ConfigError("compare needs at least one run directory")
    runs = [read_run(Path(p)) for p in run_dirs]
    windows = {(m.get("test_start"), m.get("test_end")) for _, m, _ in runs}
    if len(windows) != 1:
        raise WindowMismatch(f"runs cover different test windows: {sorted(windows)}")
    common = sorted(set.intersection(*(set(days) for _, _, days in runs)))
    if not common:
        raise WindowMismatch("runs share no evaluated day")
    names, seen = [], {}
    for name, _, _ in runs:
        seen[name] = seen.get(name, 0) + 1
        names.append(name if seen[name] == 1 else f"{name}_{seen[name]}")
    out = prepare_out(out, force)
    losses, reports = {}, {}
    for name, (_, _, days) in zip(names, runs):
        stacked = np.stack([days[d] for d in common])
        actual, forecast = stacked[..., 0], stacked[..., 1]
        losses[name] = np.abs(actual - forecast)
        reports[name] = compute_metrics(actual, forecast)
    labels, P = gw_matrix(losses)
    write_pvalue_csv(labels, P, out / "gw_pvalues.csv")
    write_metrics_table(reports, out / "metrics_table.csv")
    print((out / "metrics_table.csv").read_text(encoding="utf-8"), end="")
    return 0


def cmd_synth(config: dict, force: bool = False) -> int:
    out = prepare_out(config["out"], force)
    if "synth" not in config["data"]:
        raise ConfigError("synth needs data.synth parameters")
    series = load_series(config)
    write_csv(series, out / "series.csv")
    _write_json(out / "manifest.json", manifest("synth", config, artifacts=["series.csv", "manifest.json"]))
    print(f"wrote {len(series)} rows to {out / 'series.csv'}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="randens", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config=True):
        if config:
            p.add_argument("--config", help="JSON run configuration")
            p.add_argument("--seed", type=int, help="top-level seed")
            p.add_argument("--jobs", type=int, help="worker threads (results do not depend on it)")
            p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key")
        p.add_argument("--out", help="output directory")
        p.add_argument("--force", action="store_true", help="overwrite a non-empty output directory")

    common(sub.add_parser("forecast", help="rolling daily forecast over the test window"))
    common(sub.add_parser("sweep", help="grid over diversity parameter / hidden nodes"))
    common(sub.add_parser("synth", help="write a synthetic triple-seasonal series"))
    compare = sub.add_parser("compare", help="pairwise GW p-values and metrics table for finished runs")
    compare.add_argument("runs", nargs="+", help="run directories written by 'forecast'")
    common(compare, config=False)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.command == "compare":
            return cmd_compare(args.runs, args.out, args.force)
        config = load_config(args)
        handler = {"forecast": cmd_forecast, "sweep": cmd_sweep, "synth": cmd_synth}[args.command]
        return handler(config, args.force)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except (NumericalError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except RandEnsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
