"""P/E and P/S ratios and within-sector relative valuation."""

from __future__ import annotations

import statistics
from collections import defaultdict
from dataclasses import dataclass
from typing import Sequence

from .data import FundamentalsRecord

DEFAULT_TOLERANCE = 0.2

OVERVALUED = "overvalued"
UNDERVALUED = "undervalued"
INLINE = "inline"
INDETERMINATE = "indeterminate"


class UndefinedRatioError(ValueError):
    """The denominator is zero or negative, so the ratio has no meaning."""


def pe_ratio(price: float, eps: float) -> float:
    if not price > 0:
        raise ValueError("price must be positive")
    if eps <= 0:
        raise UndefinedRatioError(f"P/E undefined for eps={eps}")
    return price / eps


def ps_ratio(price: float, sales_per_share: float) -> float:
    if not price > 0:
        raise ValueError("price must be positive")
    if sales_per_share <= 0:
        raise UndefinedRatioError(f"P/S undefined for sales_per_share={sales_per_share}")
    return price / sales_per_share


def _maybe(fn, *args) -> float | None:
    try:
        return fn(*args)
    except UndefinedRatioError:
        return None


@dataclass(frozen=True)
class ValuationResult:
    symbol: str
    sector: str
    pe: float | None
    ps: float | None
    flag: str


def _band(value: float, median: float, tolerance: float) -> str:
    if value < median * (1.0 - tolerance):
        return UNDERVALUED
    if value > median * (1.0 + tolerance):
        return OVERVALUED
    return INLINE


def relative_valuation(records: Sequence[FundamentalsRecord],
                       tolerance: float = DEFAULT_TOLERANCE) -> list[ValuationResult]:
    """Flag each firm against the median multiple of its own sector.

    P/S drives the flag.  A firm without a defined P/S falls back to P/E
    against the sector's P/E median.  Firms alone in their sector, or whose
    multiples are both undefined, are indeterminate.  Output keeps input order.
    """
    if not 0.0 <= tolerance < 1.0:
        raise ValueError("tolerance must be in [0, 1)")
    ratios = [(r, _maybe(pe_ratio, r.price, r.eps), _maybe(ps_ratio, r.price, r.sales_per_share))
              for r in records]
    by_sector: dict[str, list] = defaultdict(list)
    for entry in ratios:
        by_sector[entry[0].sector].append(entry)

    medians = {}
    for sector, group in by_sector.items():
        ps_vals = [ps for _, _, ps in group if ps is not None]
        pe_vals = [pe for _, pe, _ in group if pe is not None]
        medians[sector] = (
            statistics.median(ps_vals) if ps_vals else None,
            statistics.median(pe_vals) if pe_vals else None,
        )

    results = []
    for rec, pe, ps in ratios:
        ps_med, pe_med = medians[rec.sector]
        if len(by_sector[rec.sector]) < 2:
            flag = INDETERMINATE
        elif ps is not None:
            flag = _band(ps, ps_med, tolerance)
        elif pe is not None:
            flag = _band(pe, pe_med, tolerance)
        else:
            flag = INDETERMINATE
        results.append(ValuationResult(rec.symbol, rec.sector, pe, ps, flag))
    return results
