"""Daily OHLCV price history, news headlines and fundamentals records.

Price files use the header ``date,open,high,low,close,adj_close,volume``
with ISO dates.  A :class:`HistorySource` hands out whole series per symbol;
the only bundled implementation reads ``<cache_dir>/<SYMBOL>.csv`` files.
"""

from __future__ import annotations

import csv
import datetime as dt
import json
import math
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol, Sequence

import numpy as np

OHLCV_COLUMNS = ("date", "open", "high", "low", "close", "adj_close", "volume")
FUNDAMENTALS_COLUMNS = ("symbol", "price", "eps", "sales_per_share", "sector")
CACHE_ENV_VAR = "QUANTBENCH_CACHE_DIR"


class DataError(ValueError):
    """Malformed or inconsistent input data."""


class DuplicateDateError(DataError):
    def __init__(self, date: dt.date, where: str = ""):
        self.date = date
        super().__init__(f"duplicate date {date.isoformat()}{where}")


class UnknownSymbolError(DataError):
    def __init__(self, symbol: str):
        self.symbol = symbol
        super().__init__(f"unknown symbol {symbol!r}")


@dataclass(frozen=True)
class PriceBar:
    date: dt.date
    open: float
    high: float
    low: float
    close: float
    adj_close: float
    volume: float

    def validate(self) -> None:
        prices = (self.open, self.high, self.low, self.close, self.adj_close)
        if not all(math.isfinite(p) and p > 0 for p in prices):
            raise DataError("prices must be positive and finite")
        if not (math.isfinite(self.volume) and self.volume >= 0):
            raise DataError("volume must be non-negative")
        lo, hi = min(self.open, self.close), max(self.open, self.close)
        if not (self.low <= lo and hi <= self.high):
            raise DataError(
                f"inconsistent range: low={self.low} open={self.open} "
                f"close={self.close} high={self.high}"
            )


@dataclass(frozen=True)
class PriceSeries:
    symbol: str
    bars: tuple[PriceBar, ...]

    def __post_init__(self):
        object.__setattr__(self, "bars", tuple(self.bars))
        if len(self.bars) < 2:
            raise DataError(f"{self.symbol}: a price series needs at least 2 bars")
        for prev, cur in zip(self.bars, self.bars[1:]):
            if cur.date == prev.date:
                raise DuplicateDateError(cur.date, f" in {self.symbol}")
            if cur.date < prev.date:
                raise DataError(f"{self.symbol}: dates not increasing at {cur.date}")

    def __len__(self) -> int:
        return len(self.bars)

    @property
    def dates(self) -> list[dt.date]:
        return [b.date for b in self.bars]

    def closes(self, adjusted: bool = False) -> np.ndarray:
        attr = "adj_close" if adjusted else "close"
        return np.array([getattr(b, attr) for b in self.bars], dtype=np.float64)

    def between(self, start: dt.date, end: dt.date) -> PriceSeries:
        """Inclusive date-range slice."""
        bars = [b for b in self.bars if start <= b.date <= end]
        if not bars:
            raise DataError(f"{self.symbol}: no bars between {start} and {end}")
        return PriceSeries(self.symbol, tuple(bars))


@dataclass(frozen=True)
class NewsItem:
    date: dt.date
    symbol: str
    text: str


@dataclass(frozen=True)
class FundamentalsRecord:
    symbol: str
    price: float
    eps: float
    sales_per_share: float
    sector: str

    def __post_init__(self):
        if not self.price > 0:
            raise DataError(f"{self.symbol}: price must be positive")
        if self.sales_per_share < 0:
            raise DataError(f"{self.symbol}: sales_per_share must be non-negative")


def parse_date(text: str) -> dt.date:
    try:
        return dt.date.fromisoformat(text.strip())
    except ValueError as exc:
        raise DataError(f"bad date {text!r}") from exc


def load_ohlcv_csv(path: str | os.PathLike, symbol: str | None = None) -> PriceSeries:
    """Read a daily OHLCV file.

    Rows are re-sorted by date.  Any invalid row raises :class:`DataError`
    naming its line number; a repeated date raises :class:`DuplicateDateError`.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such price file: {path}")
    symbol = symbol or path.stem.upper()
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise DataError(f"{path}: empty file")
        header = [h.strip() for h in header]
        missing = [c for c in OHLCV_COLUMNS if c not in header]
        if missing:
            raise DataError(f"{path}: missing column(s) {', '.join(missing)}")
        idx = {c: header.index(c) for c in OHLCV_COLUMNS}
        bars: list[PriceBar] = []
        seen: set[dt.date] = set()
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            try:
                bar = PriceBar(
                    date=parse_date(row[idx["date"]]),
                    **{c: float(row[idx[c]]) for c in OHLCV_COLUMNS[1:]},
                )
                bar.validate()
            except (IndexError, ValueError) as exc:
                raise DataError(f"{path}: line {lineno}: {exc}") from exc
            if bar.date in seen:
                raise DuplicateDateError(bar.date, f" at {path}: line {lineno}")
            seen.add(bar.date)
            bars.append(bar)
    bars.sort(key=lambda b: b.date)
    return PriceSeries(symbol, tuple(bars))


def write_ohlcv_csv(series: PriceSeries, path: str | os.PathLike) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(OHLCV_COLUMNS)
        for b in series.bars:
            writer.writerow([
                b.date.isoformat(), repr(b.open), repr(b.high), repr(b.low),
                repr(b.close), repr(b.adj_close), repr(b.volume),
            ])


class HistorySource(Protocol):
    """Anything that can produce the full cached history of a symbol."""

    def load(self, symbol: str) -> PriceSeries: ...


class CsvDirectorySource:
    """Per-symbol CSV files in one directory (``<dir>/<SYMBOL>.csv``).

    Read-only and stateless, so safe to share between threads.
    """

    def __init__(self, cache_dir: str | os.PathLike | None = None):
        if cache_dir is None:
            cache_dir = os.environ.get(CACHE_ENV_VAR)
        if not cache_dir:
            raise DataError(f"no cache directory given and {CACHE_ENV_VAR} is unset")
        self.cache_dir = Path(cache_dir)

    def path_for(self, symbol: str) -> Path:
        return self.cache_dir / f"{symbol.upper()}.csv"

    def symbols(self) -> list[str]:
        return sorted(p.stem for p in self.cache_dir.glob("*.csv"))

    def load(self, symbol: str) -> PriceSeries:
        if not self.cache_dir.is_dir():
            raise OSError(f"cache directory not found: {self.cache_dir}")
        path = self.path_for(symbol)
        if not path.is_file():
            raise UnknownSymbolError(symbol)
        return load_ohlcv_csv(path, symbol=symbol.upper())


def fetch_history(
    symbol: str,
    start: dt.date,
    end: dt.date,
    source: HistorySource | None = None,
) -> PriceSeries:
    """Inclusive ``[start, end]`` slice of a symbol's history from ``source``."""
    if not start < end:
        raise DataError(f"start {start} must precede end {end}")
    source = source if source is not None else CsvDirectorySource()
    return source.load(symbol).between(start, end)


def load_news_jsonl(path: str | os.PathLike) -> list[NewsItem]:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such news file: {path}")
    items = []
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                text = str(obj["text"]).strip()
                if not text:
                    raise DataError("blank text")
                items.append(NewsItem(parse_date(str(obj["date"])), str(obj["symbol"]), text))
            except (json.JSONDecodeError, KeyError, TypeError, DataError) as exc:
                raise DataError(f"{path}: line {lineno}: {exc}") from exc
    return items


def load_fundamentals_csv(path: str | os.PathLike) -> list[FundamentalsRecord]:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such fundamentals file: {path}")
    records = []
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = [c for c in FUNDAMENTALS_COLUMNS if c not in (reader.fieldnames or [])]
        if missing:
            raise DataError(f"{path}: missing column(s) {', '.join(missing)}")
        for lineno, row in enumerate(reader, start=2):
            try:
                records.append(FundamentalsRecord(
                    symbol=row["symbol"].strip(),
                    price=float(row["price"]),
                    eps=float(row["eps"]),
                    sales_per_share=float(row["sales_per_share"]),
                    sector=row["sector"].strip(),
                ))
            except ValueError as exc:
                raise DataError(f"{path}: line {lineno}: {exc}") from exc
    return records


def business_days(start: dt.date, count: int) -> list[dt.date]:
    """``count`` consecutive weekdays starting at (or after) ``start``."""
    days, day = [], start
    while len(days) < count:
        if day.weekday() < 5:
            days.append(day)
        day += dt.timedelta(days=1)
    return days


def sine_series(n: int = 400, period: float = 50.0, start: dt.date = dt.date(2020, 1, 1),
                level: float = 100.0, amplitude: float = 20.0) -> PriceSeries:
    """Noiseless sinusoidal close prices on consecutive business days.

    Used as the synthetic benchmark task; every bar has open = high = low =
    close so the OHLC invariants hold trivially.
    """
    closes = level + amplitude * np.sin(2.0 * np.pi * np.arange(n) / period)
    bars = tuple(
        PriceBar(d, c, c, c, c, c, 0.0)
        for d, c in zip(business_days(start, n), closes.tolist())
    )
    return PriceSeries("SINE", bars)


def series_from_closes(symbol: str, closes: Sequence[float],
                       start: dt.date = dt.date(2021, 1, 4)) -> PriceSeries:
    closes = [float(c) for c in closes]
    bars = tuple(
        PriceBar(d, c, c, c, c, c, 0.0)
        for d, c in zip(business_days(start, len(closes)), closes)
    )
    return PriceSeries(symbol, bars)
