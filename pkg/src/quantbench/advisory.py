"""Buy/sell/hold advisories ranked by the daily returns-to-volatility ratio."""

from __future__ import annotations

import csv
import math
import statistics
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

from .data import PriceSeries

DEFAULT_THRESHOLD = 0.05

BUY, SELL, HOLD = "buy", "sell", "hold"


class DegenerateSeriesError(ValueError):
    """Returns have zero volatility, so no ratio exists."""


def simple_returns(series: PriceSeries | Sequence[float]) -> list[float]:
    closes = series.closes().tolist() if isinstance(series, PriceSeries) else list(series)
    if len(closes) < 2:
        raise ValueError("need at least 2 closes for a return")
    return [cur / prev - 1.0 for prev, cur in zip(closes, closes[1:])]


def return_volatility_ratio(returns: Sequence[float]) -> tuple[float, float, float]:
    """``(mean, sample std, mean / std)`` of daily returns, un-annualized."""
    if len(returns) < 2:
        raise ValueError("need at least 2 returns")
    mean = statistics.fmean(returns)
    vol = statistics.stdev(returns)
    if vol == 0.0:
        raise DegenerateSeriesError("returns have zero volatility")
    return mean, vol, mean / vol


@dataclass(frozen=True)
class AdvisoryEntry:
    symbol: str
    mean_return: float
    volatility: float
    ratio: float
    signal: str


@dataclass(frozen=True)
class AdvisoryReport:
    entries: tuple[AdvisoryEntry, ...]
    threshold: float

    def symbols(self) -> list[str]:
        return [e.symbol for e in self.entries]

    def __getitem__(self, symbol: str) -> AdvisoryEntry:
        for e in self.entries:
            if e.symbol == symbol:
                return e
        raise KeyError(symbol)


def classify(ratio: float, threshold: float = DEFAULT_THRESHOLD) -> str:
    if ratio >= threshold:
        return BUY
    if ratio <= -threshold:
        return SELL
    return HOLD


def advise(
    series_set: Sequence[PriceSeries],
    forecasts: Mapping[str, float] | None = None,
    threshold: float = DEFAULT_THRESHOLD,
    lookback: int | None = None,
) -> AdvisoryReport:
    """Rank symbols by returns-to-volatility ratio, best first.

    ``forecasts`` maps a symbol to its predicted next close; the implied
    next-day return is appended before the ratio is computed.  ``lookback``
    keeps only the trailing N returns.  Flat series go last as ``hold`` with
    a NaN ratio.
    """
    if not series_set:
        raise ValueError("no series to advise on")
    forecasts = forecasts or {}
    scored, degenerate = [], []
    for series in series_set:
        returns = simple_returns(series)
        if lookback is not None:
            returns = returns[-lookback:]
        if series.symbol in forecasts:
            returns.append(float(forecasts[series.symbol]) / series.bars[-1].close - 1.0)
        try:
            mean, vol, ratio = return_volatility_ratio(returns)
        except DegenerateSeriesError:
            degenerate.append(AdvisoryEntry(series.symbol, statistics.fmean(returns), 0.0,
                                            math.nan, HOLD))
            continue
        scored.append(AdvisoryEntry(series.symbol, mean, vol, ratio, classify(ratio, threshold)))
    scored.sort(key=lambda e: (-e.ratio, e.symbol))
    degenerate.sort(key=lambda e: e.symbol)
    return AdvisoryReport(tuple(scored + degenerate), threshold)


def write_advisory_csv(report: AdvisoryReport, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["symbol", "mean_return", "volatility", "ratio", "signal"])
        for e in report.entries:
            w.writerow([e.symbol, repr(e.mean_return), repr(e.volatility),
                        "" if math.isnan(e.ratio) else repr(e.ratio), e.signal])


def format_advisory(report: AdvisoryReport) -> str:
    lines = [f"{'symbol':<10}{'mean_ret':>12}{'vol':>12}{'ratio':>10}  signal"]
    for e in report.entries:
        ratio = "n/a" if math.isnan(e.ratio) else f"{e.ratio:.4f}"
        lines.append(f"{e.symbol:<10}{e.mean_return:>12.6f}{e.volatility:>12.6f}{ratio:>10}  {e.signal}")
    return "\n".join(lines)
