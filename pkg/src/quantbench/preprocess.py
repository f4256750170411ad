"""MinMax scaling, chronological splitting and sliding-window datasets."""

from __future__ import annotations

import datetime as dt
import math
from dataclasses import dataclass, field

import numpy as np

from .data import PriceSeries

PASSTHROUGH_COLUMNS = frozenset({"sentiment"})


class SeriesTooShortError(ValueError):
    pass


@dataclass(frozen=True)
class FeatureMatrix:
    """Per-day feature rows; column 0 is always the close price."""

    dates: tuple[dt.date, ...]
    values: np.ndarray
    columns: tuple[str, ...] = ("close",)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim == 1:
            values = values.reshape(-1, 1)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "dates", tuple(self.dates))
        object.__setattr__(self, "columns", tuple(self.columns))
        if values.ndim != 2 or values.shape[1] < 1:
            raise ValueError("feature matrix needs at least one column")
        if len(self.dates) != values.shape[0]:
            raise ValueError(f"{len(self.dates)} dates for {values.shape[0]} rows")
        if len(self.columns) != values.shape[1]:
            raise ValueError(f"{len(self.columns)} column names for {values.shape[1]} columns")

    def __len__(self) -> int:
        return self.values.shape[0]

    @property
    def n_features(self) -> int:
        return self.values.shape[1]

    def rows(self, start: int, stop: int) -> FeatureMatrix:
        return FeatureMatrix(self.dates[start:stop], self.values[start:stop], self.columns)

    def select(self, n_features: int) -> FeatureMatrix:
        """Keep the first ``n_features`` columns."""
        if not 1 <= n_features <= self.n_features:
            raise ValueError(f"cannot select {n_features} of {self.n_features} features")
        return FeatureMatrix(self.dates, self.values[:, :n_features], self.columns[:n_features])


def from_price_series(series: PriceSeries, adjusted: bool = False) -> FeatureMatrix:
    return FeatureMatrix(tuple(series.dates), series.closes(adjusted).reshape(-1, 1), ("close",))


@dataclass(frozen=True)
class ScalerState:
    minimum: np.ndarray
    maximum: np.ndarray
    # Columns excluded from scaling (already bounded, e.g. sentiment).
    passthrough: tuple[bool, ...] = field(default=())

    def __post_init__(self):
        if not self.passthrough:
            object.__setattr__(self, "passthrough", (False,) * len(self.minimum))

    @property
    def n_features(self) -> int:
        return len(self.minimum)

    def _span(self) -> np.ndarray:
        return self.maximum - self.minimum

    def _check(self, x: FeatureMatrix) -> None:
        if x.n_features != self.n_features:
            raise ValueError(
                f"feature count mismatch: scaler has {self.n_features}, input has {x.n_features}"
            )


def fit_minmax(train: FeatureMatrix, passthrough=PASSTHROUGH_COLUMNS) -> ScalerState:
    if len(train) == 0:
        raise ValueError("cannot fit a scaler on empty input")
    if len(train) < 2:
        raise ValueError("need at least 2 rows to fit a scaler")
    return ScalerState(
        minimum=train.values.min(axis=0),
        maximum=train.values.max(axis=0),
        passthrough=tuple(c in passthrough for c in train.columns),
    )


def _scale_values(state: ScalerState, values: np.ndarray) -> np.ndarray:
    span = state._span()
    degenerate = span == 0
    out = (values - state.minimum) / np.where(degenerate, 1.0, span)
    out[:, degenerate] = 0.0
    keep = np.array(state.passthrough, dtype=bool)
    out[:, keep] = values[:, keep]
    return out


def _unscale_values(state: ScalerState, values: np.ndarray) -> np.ndarray:
    out = values * state._span() + state.minimum
    keep = np.array(state.passthrough, dtype=bool)
    out[:, keep] = values[:, keep]
    return out


def transform(state: ScalerState, x: FeatureMatrix) -> FeatureMatrix:
    """Map each column to ``(x - min) / (max - min)``; constant columns go to 0."""
    state._check(x)
    return FeatureMatrix(x.dates, _scale_values(state, x.values), x.columns)


def inverse_transform(state: ScalerState, x: FeatureMatrix) -> FeatureMatrix:
    state._check(x)
    return FeatureMatrix(x.dates, _unscale_values(state, x.values), x.columns)


def inverse_close(state: ScalerState, scaled: np.ndarray) -> np.ndarray:
    """Undo scaling of close-price values (column 0) of any shape."""
    span = state.maximum[0] - state.minimum[0]
    return np.asarray(scaled, dtype=np.float64) * span + state.minimum[0]


@dataclass(frozen=True)
class WindowedDataset:
    """Supervised samples: ``inputs`` is N×W×F, ``targets`` is N×H."""

    inputs: np.ndarray
    targets: np.ndarray
    window: int
    horizon: int
    # Date of the first forecast step of each sample.
    target_dates: tuple[dt.date, ...] = ()

    def __post_init__(self):
        if self.inputs.shape[0] != self.targets.shape[0]:
            raise ValueError("inputs and targets differ in length")

    def __len__(self) -> int:
        return self.inputs.shape[0]

    @property
    def n_features(self) -> int:
        return self.inputs.shape[2]

    def subset(self, index) -> WindowedDataset:
        dates = tuple(self.target_dates[i] for i in np.atleast_1d(index)) if self.target_dates else ()
        return WindowedDataset(self.inputs[index], self.targets[index], self.window, self.horizon, dates)


def make_windows(x: FeatureMatrix, window: int, horizon: int) -> WindowedDataset:
    """Cut ``x`` into ``T - window - horizon + 1`` input/target pairs.

    Sample ``i`` reads rows ``[i, i + window)`` and targets the closes at
    ``[i + window, i + window + horizon)``.
    """
    if window < 1 or horizon < 1:
        raise ValueError("window and horizon must be positive")
    t = len(x)
    n = t - window - horizon + 1
    if n < 1:
        raise SeriesTooShortError(
            f"series of {t} rows too short for window {window} + horizon {horizon}"
        )
    v = x.values
    inputs = np.stack([v[i:i + window] for i in range(n)])
    targets = np.stack([v[i + window:i + window + horizon, 0] for i in range(n)])
    dates = tuple(x.dates[i + window] for i in range(n))
    return WindowedDataset(inputs, targets, window, horizon, dates)


def split_train_test(x: FeatureMatrix, train_fraction: float = 0.8) -> tuple[FeatureMatrix, FeatureMatrix]:
    """Chronological split at ``floor(T * train_fraction)``; never shuffles."""
    if not 0.0 < train_fraction < 1.0:
        raise ValueError(f"train_fraction must be in (0, 1), got {train_fraction}")
    cut = math.floor(len(x) * train_fraction)
    if cut == 0 or cut == len(x):
        raise ValueError(f"split of {len(x)} rows at {train_fraction} leaves one side empty")
    return x.rows(0, cut), x.rows(cut, len(x))


@dataclass(frozen=True)
class PreparedData:
    train: WindowedDataset
    test: WindowedDataset
    scaler: ScalerState


def prepare(features: FeatureMatrix, window: int, horizon: int,
            train_fraction: float = 0.8) -> PreparedData:
    """Split, fit the scaler on the train rows, and window both partitions.

    Test windows borrow the last ``window`` train rows as look-back context,
    so every test target lies in the test partition.
    """
    train_fm, test_fm = split_train_test(features, train_fraction)
    scaler = fit_minmax(train_fm)
    train_s = transform(scaler, train_fm)
    full_s = transform(scaler, features)
    cut = len(train_fm)
    test_ctx = full_s.rows(max(0, cut - window), len(features))
    return PreparedData(
        train=make_windows(train_s, window, horizon),
        test=make_windows(test_ctx, window, horizon),
        scaler=scaler,
    )
