"""Error metrics, paired significance testing, model benchmarks and sweeps."""

from __future__ import annotations

import csv
import datetime as dt
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.special import betainc

from .models import ModelParams, ModelSpec, predict
from .preprocess import (
    FeatureMatrix,
    PreparedData,
    SeriesTooShortError,
    fit_minmax,
    inverse_close,
    prepare,
    transform,
)
from .train import TrainConfig, train

logger = logging.getLogger(__name__)

METRIC_SPACES = ("scaled", "price")
SIGNIFICANCE_LEVEL = 0.01


@dataclass(frozen=True)
class Metrics:
    mse: float
    rmse: float
    mae: float


def metrics(pred, actual) -> Metrics:
    pred = np.asarray(pred, dtype=np.float64)
    actual = np.asarray(actual, dtype=np.float64)
    if pred.shape != actual.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {actual.shape}")
    if pred.size == 0:
        raise ValueError("metrics need at least one value")
    err = pred - actual
    mse = float(np.mean(err * err))
    return Metrics(mse, math.sqrt(mse), float(np.mean(np.abs(err))))


def t_pvalue(t: float, df: float) -> float:
    """Two-sided p-value of Student's t, via the regularized incomplete beta."""
    if math.isinf(t):
        return 0.0
    return float(betainc(df / 2.0, 0.5, df / (df + t * t)))


def significance_test(sq_err_a: Sequence[float], sq_err_b: Sequence[float]) -> float:
    """Paired two-sided t-test on per-sample squared-error differences."""
    a = np.asarray(sq_err_a, dtype=np.float64)
    b = np.asarray(sq_err_b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"length mismatch: {a.shape} vs {b.shape}")
    if a.size < 2:
        raise ValueError("need at least 2 paired samples")
    d = a - b
    if not d.any():
        return 1.0
    sd = d.std(ddof=1)
    if sd == 0.0:
        return 0.0
    t = d.mean() / (sd / math.sqrt(d.size))
    return min(1.0, max(0.0, t_pvalue(t, d.size - 1)))


@dataclass(frozen=True)
class Forecast:
    dates: tuple[dt.date, ...]
    actual: np.ndarray
    predicted: np.ndarray


@dataclass
class ModelRun:
    name: str
    spec: ModelSpec
    params: ModelParams
    loss_history: list[float]
    metrics: Metrics
    sample_sq_err: np.ndarray
    forecast: Forecast


@dataclass(frozen=True)
class MetricsRow:
    name: str
    mse: float
    rmse: float
    mae: float
    p_value: float


@dataclass
class MetricsReport:
    rows: list[MetricsRow]
    runs: dict[str, ModelRun] = field(default_factory=dict)

    @property
    def best(self) -> MetricsRow:
        return self.rows[0]

    def names(self) -> list[str]:
        return [r.name for r in self.rows]


def model_name(spec: ModelSpec) -> str:
    return spec.architecture + ("+sentiment" if spec.features > 1 else "")


def standard_lineup(base: ModelSpec) -> list[tuple[str, ModelSpec]]:
    """The five compared models: vanilla, vanilla+sentiment, bidirectional,
    seq2seq and two_path, all sharing ``base``'s hyperparameters."""
    return [
        ("vanilla", replace(base, architecture="vanilla", features=1)),
        ("vanilla+sentiment", replace(base, architecture="vanilla", features=2)),
        ("bidirectional", replace(base, architecture="bidirectional", features=1)),
        ("seq2seq", replace(base, architecture="seq2seq", features=1)),
        ("two_path", replace(base, architecture="two_path", features=1)),
    ]


def evaluate_spec(spec: ModelSpec, features: FeatureMatrix, cfg: TrainConfig,
                  name: str | None = None, train_fraction: float = 0.8,
                  metric_space: str = "scaled") -> ModelRun:
    """Train ``spec`` on the train split and score it on the test split."""
    if metric_space not in METRIC_SPACES:
        raise ValueError(f"metric_space must be one of {METRIC_SPACES}")
    data: PreparedData = prepare(features.select(spec.features), spec.window, spec.horizon,
                                 train_fraction)
    params, history = train(spec, data.train, cfg)
    scaled_pred = predict(spec, params, data.test.inputs)
    pred, actual = scaled_pred, data.test.targets
    if metric_space == "price":
        pred, actual = inverse_close(data.scaler, pred), inverse_close(data.scaler, actual)
    forecast = Forecast(
        data.test.target_dates,
        inverse_close(data.scaler, data.test.targets[:, 0]),
        inverse_close(data.scaler, scaled_pred[:, 0]),
    )
    return ModelRun(
        name=name or model_name(spec),
        spec=spec,
        params=params,
        loss_history=history,
        metrics=metrics(pred, actual),
        sample_sq_err=np.mean((pred - actual) ** 2, axis=1),
        forecast=forecast,
    )


def benchmark(specs: Sequence[ModelSpec | tuple[str, ModelSpec]], features: FeatureMatrix,
              cfg: TrainConfig, train_fraction: float = 0.8,
              metric_space: str = "scaled") -> MetricsReport:
    """Train and score every spec, rank by MSE, and test each against the winner.

    Specs may be given bare or as ``(name, spec)`` pairs.  All specs must
    share window and horizon so that their test samples pair up.
    """
    if len(specs) < 2:
        raise ValueError("benchmark needs at least 2 specs")
    named = [s if isinstance(s, tuple) else (model_name(s), s) for s in specs]
    if len({n for n, _ in named}) != len(named):
        raise ValueError("benchmark entries need distinct names")
    if len({(s.window, s.horizon) for _, s in named}) != 1:
        raise ValueError("all benchmark specs must share window and horizon")
    runs = []
    for name, spec in named:
        logger.info("benchmark: training %s", name)
        runs.append(evaluate_spec(spec, features, cfg, name, train_fraction, metric_space))
    ranked = sorted(runs, key=lambda r: r.metrics.mse)
    best = ranked[0]
    rows = [
        MetricsRow(r.name, r.metrics.mse, r.metrics.rmse, r.metrics.mae,
                   significance_test(r.sample_sq_err, best.sample_sq_err))
        for r in ranked
    ]
    return MetricsReport(rows, {r.name: r for r in runs})


def forecast_next(spec: ModelSpec, params: ModelParams, features: FeatureMatrix) -> np.ndarray:
    """Price-unit forecast of the next ``horizon`` closes after the last row.

    The scaler is fitted on every row of ``features``.
    """
    features = features.select(spec.features)
    if len(features) < spec.window:
        raise SeriesTooShortError(f"need {spec.window} rows, have {len(features)}")
    scaler = fit_minmax(features)
    scaled = transform(scaler, features).values[-spec.window:]
    return inverse_close(scaler, predict(spec, params, scaled[None, :, :])[0])


@dataclass
class SweepReport:
    spec: ModelSpec
    windows: list[int]
    horizons: list[int]
    # None marks an infeasible cell.
    cells: dict[tuple[int, int], float | None]

    def rmse(self, window: int, horizon: int) -> float | None:
        return self.cells[(window, horizon)]


def sweep(spec: ModelSpec, features: FeatureMatrix, windows: Sequence[int],
          horizons: Sequence[int], cfg: TrainConfig, train_fraction: float = 0.8,
          metric_space: str = "scaled") -> SweepReport:
    """Test RMSE over a window × horizon grid, every cell with the same seeds."""
    if not windows or not horizons:
        raise ValueError("sweep grids must be non-empty")
    cells: dict[tuple[int, int], float | None] = {}
    for w in windows:
        for h in horizons:
            cell_spec = replace(spec, window=w, horizon=h)
            try:
                run = evaluate_spec(cell_spec, features, cfg, train_fraction=train_fraction,
                                    metric_space=metric_space)
            except SeriesTooShortError as exc:
                logger.warning("sweep cell window=%d horizon=%d infeasible: %s", w, h, exc)
                cells[(w, h)] = None
                continue
            cells[(w, h)] = run.metrics.rmse
    return SweepReport(spec, list(windows), list(horizons), cells)


# -- reporting -----------------------------------------------------------------

def _num(x: float) -> str:
    return repr(float(x))


def write_benchmark_csv(report: MetricsReport, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["model", "mse", "rmse", "mae", "p_value"])
        for r in report.rows:
            w.writerow([r.name, _num(r.mse), _num(r.rmse), _num(r.mae), _num(r.p_value)])


def write_sweep_csv(report: SweepReport, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["window", "horizon", "rmse"])
        for (win, hor), rmse in report.cells.items():
            w.writerow([win, hor, "" if rmse is None else _num(rmse)])


def write_forecast_csv(forecast: Forecast, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["date", "actual", "predicted"])
        for d, a, p in zip(forecast.dates, forecast.actual, forecast.predicted):
            w.writerow([d.isoformat(), _num(a), _num(p)])


def forecast_filename(name: str) -> str:
    return f"forecast_{name.replace('+', '_')}.csv"


def format_benchmark(report: MetricsReport) -> str:
    lines = [f"{'model':<20}{'mse':>12}{'rmse':>10}{'mae':>10}{'p_value':>10}"]
    for r in report.rows:
        mark = " *" if r.name != report.best.name and r.p_value < SIGNIFICANCE_LEVEL else ""
        lines.append(f"{r.name:<20}{r.mse:>12.5f}{r.rmse:>10.4f}{r.mae:>10.4f}{r.p_value:>10.4f}{mark}")
    return "\n".join(lines)


def format_sweep(report: SweepReport) -> str:
    head = f"{'window':>8}" + "".join(f"{'h=' + str(h):>10}" for h in report.horizons)
    lines = [head]
    for w in report.windows:
        cells = "".join(
            f"{'n/a':>10}" if report.cells[(w, h)] is None else f"{report.cells[(w, h)]:>10.4f}"
            for h in report.horizons
        )
        lines.append(f"{w:>8}{cells}")
    return "\n".join(lines)
