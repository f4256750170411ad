"""Lexicon scoring of headlines and fusion of a daily sentiment column."""

from __future__ import annotations

import bisect
import datetime as dt
import os
import re
from collections import defaultdict
from dataclasses import dataclass
from importlib import resources
from typing import Iterable, Mapping, Sequence

import numpy as np

from .data import NewsItem
from .preprocess import FeatureMatrix

NEGATION_MARKER = "#negations"
NEGATION_REACH = 2
DEFAULT_DECAY = 0.5

_TOKEN_SPLIT = re.compile(r"[^0-9a-z]+")


@dataclass(frozen=True)
class Lexicon:
    weights: Mapping[str, float]
    negations: frozenset[str] = frozenset()

    def __post_init__(self):
        cleaned = {}
        for word, w in self.weights.items():
            w = float(w)
            if w == 0.0 or not -1.0 <= w <= 1.0:
                raise ValueError(f"lexicon weight for {word!r} must be non-zero and in [-1, 1]")
            cleaned[word.lower()] = w
        object.__setattr__(self, "weights", cleaned)
        object.__setattr__(self, "negations", frozenset(n.lower() for n in self.negations))

    def weight(self, token: str) -> float | None:
        return self.weights.get(token.lower())

    def negated(self) -> Lexicon:
        """Same lexicon with every weight's sign flipped."""
        return Lexicon({w: -v for w, v in self.weights.items()}, self.negations)


def parse_lexicon(lines: Iterable[str]) -> Lexicon:
    weights: dict[str, float] = {}
    negations: set[str] = set()
    in_negations = False
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line:
            continue
        if line.lower() == NEGATION_MARKER:
            in_negations = True
            continue
        if in_negations:
            negations.add(line.lower())
            continue
        word, _, weight = line.partition(",")
        if word.strip().lower() == "word" and weight.strip().lower() == "weight":
            continue
        try:
            weights[word.strip().lower()] = float(weight)
        except ValueError as exc:
            raise ValueError(f"lexicon line {lineno}: {raw!r}") from exc
    return Lexicon(weights, frozenset(negations))


def load_lexicon(path: str | os.PathLike | None = None) -> Lexicon:
    """Load a ``word,weight`` lexicon file; ``None`` loads the bundled one."""
    if path is None:
        text = resources.files("quantbench").joinpath("resources/lexicon.csv").read_text("utf-8")
        return parse_lexicon(text.splitlines())
    with open(path, encoding="utf-8") as fh:
        return parse_lexicon(fh)


def tokenize(text: str) -> list[str]:
    return [t for t in _TOKEN_SPLIT.split(text.lower()) if t]


def score_text(text: str, lex: Lexicon) -> float:
    """Mean matched lexicon weight of ``text``, clamped to [-1, 1].

    A weight's sign flips when a negation token sits among the two tokens
    before it.  Text with no lexicon hits scores 0.
    """
    tokens = tokenize(text)
    total, matched = 0.0, 0
    for i, tok in enumerate(tokens):
        w = lex.weights.get(tok)
        if w is None:
            continue
        if any(t in lex.negations for t in tokens[max(0, i - NEGATION_REACH):i]):
            w = -w
        total += w
        matched += 1
    return min(1.0, max(-1.0, total / max(1, matched)))


@dataclass(frozen=True)
class SentimentSeries:
    dates: tuple[dt.date, ...]
    score: np.ndarray

    def as_dict(self) -> dict[dt.date, float]:
        return dict(zip(self.dates, self.score.tolist()))


def daily_sentiment(
    items: Sequence[NewsItem],
    calendar: Sequence[dt.date],
    lex: Lexicon | None = None,
    decay: float = DEFAULT_DECAY,
    symbol: str | None = None,
) -> SentimentSeries:
    """Average headline score per trading day.

    Headlines dated on a non-trading day count toward the next trading day;
    ones after the last calendar date are dropped.  Days without news carry
    the previous day's score multiplied by ``decay`` (starting from 0).
    """
    calendar = tuple(calendar)
    if any(b <= a for a, b in zip(calendar, calendar[1:])):
        raise ValueError("calendar must be strictly ascending")
    lex = lex if lex is not None else load_lexicon()
    buckets: dict[int, list[float]] = defaultdict(list)
    for item in items:
        if symbol is not None and item.symbol.upper() != symbol.upper():
            continue
        pos = bisect.bisect_left(calendar, item.date)
        if pos < len(calendar):
            buckets[pos].append(score_text(item.text, lex))
    scores = np.zeros(len(calendar))
    prev = 0.0
    for i in range(len(calendar)):
        prev = float(np.mean(buckets[i])) if i in buckets else prev * decay
        scores[i] = prev
    return SentimentSeries(calendar, scores)


def merge_features(prices: FeatureMatrix, s: SentimentSeries) -> FeatureMatrix:
    """Append the sentiment score aligned by date as a new last column."""
    lookup = s.as_dict()
    missing = [d for d in prices.dates if d not in lookup]
    if missing:
        raise ValueError(f"sentiment series does not cover {missing[0].isoformat()}")
    col = np.array([lookup[d] for d in prices.dates]).reshape(-1, 1)
    return FeatureMatrix(prices.dates, np.hstack([prices.values, col]),
                         prices.columns + ("sentiment",))
