"""Command-line entry point: ingest, train, predict, benchmark, advise, gradcheck.

Exit codes: 0 success, 1 configuration error, 2 data error, 3 training
failure.  Failures also print one JSON object on stderr, e.g.
``{"error": "config", "key": "layers", "message": "..."}``.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import advisory as adv
from . import data as qd
from .config import ConfigError, RunConfig, build_run_config, parse_override, read_config, set_dotted
from .evaluation import (
    Forecast,
    benchmark,
    forecast_filename,
    forecast_next,
    format_benchmark,
    format_sweep,
    standard_lineup,
    sweep,
    write_benchmark_csv,
    write_forecast_csv,
    write_sweep_csv,
)
from .fundamentals import relative_valuation
from .models import ARCHITECTURES, GATES, ModelSpec, load_params, predict, save_params
from .preprocess import FeatureMatrix, SeriesTooShortError, from_price_series, inverse_close, prepare
from .sentiment import daily_sentiment, load_lexicon, merge_features
from .train import grad_check, train

logger = logging.getLogger("quantbench")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_TRAIN = 0, 1, 2, 3
GRADCHECK_TOLERANCE = 1e-4
GRADCHECK_SPEC = dict(layers=2, units=4, window=5, horizon=2, features=2, dropout_rate=0.2, seed=7)


class DataFailure(Exception):
    pass


class TrainingFailure(Exception):
    pass


def _emit_error(kind: str, message: str, key: str | None = None) -> None:
    payload = {"error": kind, "message": message}
    if key is not None:
        payload["key"] = key
    print(json.dumps(payload, sort_keys=True), file=sys.stderr)


# -- loading -------------------------------------------------------------------

def _load_config(args) -> RunConfig:
    raw = read_config(args.config)
    for item in args.set or []:
        key, value = parse_override(item)
        set_dotted(raw, key, value)
    if args.output_dir is not None:
        raw["output_dir"] = str(Path(args.output_dir).resolve())
    if args.seed is not None:
        raw["seed"] = args.seed
        raw.setdefault("train", {})["seed"] = args.seed
    return build_run_config(raw, Path(args.config).resolve().parent)


def _source(cfg: RunConfig) -> qd.CsvDirectorySource:
    if cfg.cache_dir is None:
        raise ConfigError("cache_dir", f"needed to look up symbols (or set {qd.CACHE_ENV_VAR})")
    if not cfg.cache_dir.is_dir():
        raise DataFailure(f"cache directory not found: {cfg.cache_dir}")
    return qd.CsvDirectorySource(cfg.cache_dir)


def _slice(series: qd.PriceSeries, cfg: RunConfig) -> qd.PriceSeries:
    if cfg.start is None and cfg.end is None:
        return series
    return series.between(cfg.start or series.dates[0], cfg.end or series.dates[-1])


def _load_symbol(cfg: RunConfig, symbol: str) -> qd.PriceSeries:
    return _slice(_source(cfg).load(symbol), cfg)


def _load_primary_series(cfg: RunConfig) -> qd.PriceSeries:
    if cfg.prices is not None:
        if not cfg.prices.is_file():
            raise DataFailure(f"no such price file: {cfg.prices}")
        return _slice(qd.load_ohlcv_csv(cfg.prices, symbol=cfg.symbol), cfg)
    if not cfg.symbol:
        raise ConfigError("prices", "give a price file or a symbol plus cache_dir")
    return _load_symbol(cfg, cfg.symbol)


def _features(cfg: RunConfig, series: qd.PriceSeries, with_sentiment: bool) -> FeatureMatrix:
    fm = from_price_series(series, adjusted=cfg.adjusted)
    if not with_sentiment:
        return fm
    if cfg.news is None:
        raise ConfigError("news", "a news file is required for the sentiment feature")
    if not cfg.news.is_file():
        raise DataFailure(f"no such news file: {cfg.news}")
    if cfg.lexicon is not None and not cfg.lexicon.is_file():
        raise DataFailure(f"no such lexicon file: {cfg.lexicon}")
    lex = load_lexicon(cfg.lexicon)
    items = qd.load_news_jsonl(cfg.news)
    sent = daily_sentiment(items, fm.dates, lex, cfg.sentiment_decay, symbol=series.symbol)
    return merge_features(fm, sent)


def _outdir(cfg: RunConfig) -> Path:
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    return cfg.output_dir


# -- commands ------------------------------------------------------------------

def cmd_ingest(args) -> int:
    cfg = _load_config(args)
    symbols = cfg.symbols or ([cfg.symbol] if cfg.symbol else [])
    out = _outdir(cfg)
    written = []
    if cfg.prices is not None:
        series = _load_primary_series(cfg)
        qd.write_ohlcv_csv(series, out / f"{series.symbol}.csv")
        written.append(series)
        symbols = [s for s in symbols if s.upper() != series.symbol]
    for sym in symbols:
        series = _load_symbol(cfg, sym)
        qd.write_ohlcv_csv(series, out / f"{series.symbol}.csv")
        written.append(series)
    if not written:
        raise ConfigError("symbols", "nothing to ingest")
    for s in written:
        print(f"{s.symbol}: {len(s)} bars {s.dates[0]} .. {s.dates[-1]}")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _load_config(args)
    series = _load_primary_series(cfg)
    fm = _features(cfg, series, cfg.spec.features > 1)
    try:
        data = prepare(fm.select(cfg.spec.features), cfg.spec.window, cfg.spec.horizon,
                       cfg.train_fraction)
    except (SeriesTooShortError, ValueError) as exc:
        raise DataFailure(str(exc)) from exc
    try:
        params, history = train(cfg.spec, data.train, cfg.train)
    except Exception as exc:
        raise TrainingFailure(str(exc)) from exc
    out = _outdir(cfg)
    save_params(out / "model.qbnn", cfg.spec, params)
    with (out / "loss.csv").open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "loss"])
        for i, loss in enumerate(history, start=1):
            w.writerow([i, repr(loss)])
    print(f"trained {cfg.spec.architecture}: final loss {history[-1]:.6g}")
    return EXIT_OK


def _model_path(cfg: RunConfig, given: str | None) -> Path:
    path = Path(given) if given else cfg.output_dir / "model.qbnn"
    if not path.is_file():
        raise DataFailure(f"no such model file: {path}")
    return path


def cmd_predict(args) -> int:
    cfg = _load_config(args)
    spec, params = load_params(_model_path(cfg, args.model))
    series = _load_primary_series(cfg)
    fm = _features(cfg, series, spec.features > 1)
    try:
        data = prepare(fm.select(spec.features), spec.window, spec.horizon, cfg.train_fraction)
    except (SeriesTooShortError, ValueError) as exc:
        raise DataFailure(str(exc)) from exc
    pred = predict(spec, params, data.test.inputs)
    forecast = Forecast(data.test.target_dates,
                        inverse_close(data.scaler, data.test.targets[:, 0]),
                        inverse_close(data.scaler, pred[:, 0]))
    out = _outdir(cfg)
    write_forecast_csv(forecast, out / forecast_filename(spec.architecture))
    nxt = forecast_next(spec, params, fm)
    print(f"{series.symbol} next close forecast: " + ", ".join(f"{v:.4f}" for v in nxt))
    return EXIT_OK


def cmd_benchmark(args) -> int:
    cfg = _load_config(args)
    series = _load_primary_series(cfg)
    fm = _features(cfg, series, with_sentiment=True)
    lineup = standard_lineup(cfg.spec)
    try:
        report = benchmark(lineup, fm, cfg.train, cfg.train_fraction, cfg.metric_space)
    except SeriesTooShortError as exc:
        raise DataFailure(str(exc)) from exc
    except Exception as exc:
        raise TrainingFailure(str(exc)) from exc
    out = _outdir(cfg)
    write_benchmark_csv(report, out / "benchmark.csv")
    for name, _ in lineup:
        write_forecast_csv(report.runs[name].forecast, out / forecast_filename(name))
    print(format_benchmark(report))
    if args.sweep:
        base = ModelSpec(**{**cfg.spec.to_dict(), "architecture": cfg.sweep_architecture, "features": 1})
        rep = sweep(base, fm, cfg.sweep_windows, cfg.sweep_horizons, cfg.train,
                    cfg.train_fraction, cfg.metric_space)
        write_sweep_csv(rep, out / "sweep.csv")
        print()
        print(format_sweep(rep))
    return EXIT_OK


def cmd_advise(args) -> int:
    cfg = _load_config(args)
    if not cfg.symbols:
        raise ConfigError("symbols", "no symbols to advise on")
    series_set = [_load_symbol(cfg, s) for s in cfg.symbols]
    forecasts = None
    if args.use_model:
        spec, params = load_params(_model_path(cfg, args.use_model))
        forecasts = {}
        for s in series_set:
            fm = _features(cfg, s, spec.features > 1)
            try:
                forecasts[s.symbol] = float(forecast_next(spec, params, fm)[0])
            except SeriesTooShortError as exc:
                raise DataFailure(f"{s.symbol}: {exc}") from exc
    report = adv.advise(series_set, forecasts, cfg.advisory_threshold, cfg.advisory_lookback)
    out = _outdir(cfg)
    adv.write_advisory_csv(report, out / "advisory.csv")
    print(adv.format_advisory(report))
    if cfg.fundamentals is not None:
        if not cfg.fundamentals.is_file():
            raise DataFailure(f"no such fundamentals file: {cfg.fundamentals}")
        results = relative_valuation(qd.load_fundamentals_csv(cfg.fundamentals))
        with (out / "valuation.csv").open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["symbol", "sector", "pe", "ps", "flag"])
            for r in results:
                w.writerow([r.symbol, r.sector, "" if r.pe is None else repr(r.pe),
                            "" if r.ps is None else repr(r.ps), r.flag])
    return EXIT_OK


def run_gradcheck(eps: float = 1e-5, fault_gate: str | None = None,
                  architectures=ARCHITECTURES) -> dict[str, float]:
    """Worst relative gradient error per architecture at the small check config."""
    rng = np.random.default_rng(GRADCHECK_SPEC["seed"])
    results = {}
    for arch in architectures:
        spec = ModelSpec(architecture=arch, **GRADCHECK_SPEC)
        x = rng.uniform(0.0, 1.0, (3, spec.window, spec.features))
        y = rng.uniform(0.0, 1.0, (3, spec.horizon))
        results[arch] = grad_check(spec, (x, y), eps=eps, fault_gate=fault_gate)
    return results


def cmd_gradcheck(args) -> int:
    start = time.perf_counter()
    results = run_gradcheck(args.eps, args.inject_fault)
    ok = True
    print(f"{'architecture':<16}{'max_rel_error':>16}  status")
    for arch, err in results.items():
        passed = err < GRADCHECK_TOLERANCE
        ok &= passed
        print(f"{arch:<16}{err:>16.3e}  {'pass' if passed else 'FAIL'}")
    print(f"elapsed {time.perf_counter() - start:.1f}s")
    if not ok:
        failed = [a for a, e in results.items() if not e < GRADCHECK_TOLERANCE]
        _emit_error("gradcheck", f"relative error >= {GRADCHECK_TOLERANCE:g} for {', '.join(failed)}")
        return EXIT_TRAIN
    return EXIT_OK


# -- wiring --------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="quantbench", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def with_config(name, func, help_text):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("config", help="JSON run configuration")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override a config key (dotted for nested keys)")
        p.add_argument("--output-dir")
        p.add_argument("--seed", type=int)
        p.set_defaults(func=func)
        return p

    with_config("ingest", cmd_ingest, "validate and copy price history into the output dir")
    with_config("train", cmd_train, "train one architecture; writes model.qbnn and loss.csv")
    p = with_config("predict", cmd_predict, "forecast the test split with a saved model")
    p.add_argument("--model", help="model file (default: <output_dir>/model.qbnn)")
    p = with_config("benchmark", cmd_benchmark, "five-model comparison; writes benchmark.csv")
    p.add_argument("--sweep", action="store_true", help="also run the window x horizon sweep")
    p = with_config("advise", cmd_advise, "returns-to-volatility advisories; writes advisory.csv")
    p.add_argument("--use-model", metavar="PATH", help="append model forecasts before ranking")

    p = sub.add_parser("gradcheck", help="certify backprop against finite differences")
    p.add_argument("--eps", type=float, default=1e-5)
    p.add_argument("--inject-fault", choices=GATES, help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_gradcheck)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        _emit_error("config", str(exc), exc.key)
        return EXIT_CONFIG
    except (DataFailure, qd.DataError, FileNotFoundError, OSError) as exc:
        _emit_error("data", str(exc))
        return EXIT_DATA
    except TrainingFailure as exc:
        _emit_error("training", str(exc))
        return EXIT_TRAIN


if __name__ == "__main__":
    sys.exit(main())
