"""JSON run configuration shared by the CLI subcommands.

Top-level keys are the :class:`ModelSpec` fields plus the run settings
below; training settings nest under ``"train"``.  Relative paths resolve
against the config file's directory.
"""

from __future__ import annotations

import datetime as dt
import json
import os
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any

from .models import ModelSpec
from .train import TrainConfig

_SPEC_KEYS = {f.name for f in fields(ModelSpec)}
_TRAIN_KEYS = {f.name for f in fields(TrainConfig)}
_PATH_KEYS = ("prices", "news", "lexicon", "cache_dir", "output_dir", "fundamentals")
_RUN_KEYS = {
    "symbol", "symbols", "prices", "news", "lexicon", "cache_dir", "output_dir", "fundamentals",
    "start", "end", "adjusted", "train_fraction", "metric_space", "sentiment_decay",
    "advisory", "sweep", "train",
}
_ADVISORY_KEYS = {"threshold", "lookback"}
_SWEEP_KEYS = {"architecture", "windows", "horizons"}


class ConfigError(ValueError):
    def __init__(self, key: str, message: str):
        self.key = key
        super().__init__(f"{key}: {message}")


@dataclass
class RunConfig:
    spec: ModelSpec
    train: TrainConfig
    output_dir: Path
    symbol: str | None = None
    symbols: list[str] = field(default_factory=list)
    prices: Path | None = None
    news: Path | None = None
    lexicon: Path | None = None
    cache_dir: Path | None = None
    fundamentals: Path | None = None
    start: dt.date | None = None
    end: dt.date | None = None
    adjusted: bool = False
    train_fraction: float = 0.8
    metric_space: str = "scaled"
    sentiment_decay: float = 0.5
    advisory_threshold: float = 0.05
    advisory_lookback: int | None = None
    sweep_architecture: str = "two_path"
    sweep_windows: list[int] = field(default_factory=lambda: [30, 60])
    sweep_horizons: list[int] = field(default_factory=lambda: [1, 5, 10])


def set_dotted(raw: dict, dotted: str, value: Any) -> None:
    keys = dotted.split(".")
    node = raw
    for k in keys[:-1]:
        node = node.setdefault(k, {})
        if not isinstance(node, dict):
            raise ConfigError(dotted, "cannot override inside a non-object value")
    node[keys[-1]] = value


def parse_override(text: str) -> tuple[str, Any]:
    """``key=value`` with the value parsed as JSON when possible."""
    key, sep, value = text.partition("=")
    if not sep or not key:
        raise ConfigError(text, "override must look like key=value")
    try:
        return key.strip(), json.loads(value)
    except json.JSONDecodeError:
        return key.strip(), value


def read_config(path: str | os.PathLike) -> dict:
    path = Path(path)
    if not path.is_file():
        raise ConfigError("config", f"no such config file: {path}")
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError("config", f"invalid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config", "top level must be a JSON object")
    return raw


def _check_keys(obj: Any, allowed: set[str], prefix: str = "") -> None:
    if not isinstance(obj, dict):
        raise ConfigError(prefix.rstrip(".") or "config", "expected a JSON object")
    for key in obj:
        if key not in allowed:
            raise ConfigError(prefix + key, "unknown key")


def _date(raw: dict, key: str) -> dt.date | None:
    value = raw.get(key)
    if value is None:
        return None
    try:
        return dt.date.fromisoformat(str(value))
    except ValueError as exc:
        raise ConfigError(key, f"not an ISO date: {value!r}") from exc


def _build(cls, values: dict, prefix: str):
    try:
        return cls(**values)
    except (TypeError, ValueError) as exc:
        # Name the offending field when the message mentions one.
        names = [f.name for f in fields(cls) if f.name in str(exc)]
        raise ConfigError(prefix + (names[0] if names else "?"), str(exc)) from exc


def _typed(name: str, value, types, prefix: str = ""):
    if isinstance(value, bool) and bool not in types:
        raise ConfigError(prefix + name, f"expected {types[0].__name__}, got {value!r}")
    if not isinstance(value, types):
        raise ConfigError(prefix + name, f"expected {types[0].__name__}, got {value!r}")
    return value


def build_run_config(raw: dict, base_dir: str | os.PathLike = ".") -> RunConfig:
    base_dir = Path(base_dir)
    _check_keys(raw, _SPEC_KEYS | _RUN_KEYS)

    spec_values = {k: raw[k] for k in _SPEC_KEYS if k in raw}
    for k in ("layers", "units", "window", "horizon", "features", "seed"):
        if k in spec_values:
            _typed(k, spec_values[k], (int,))
    if "dropout_rate" in spec_values:
        _typed("dropout_rate", spec_values["dropout_rate"], (float, int))
    spec = _build(ModelSpec, spec_values, "")

    train_raw = raw.get("train", {})
    _check_keys(train_raw, _TRAIN_KEYS, "train.")
    for k in ("epochs", "batch_size", "seed"):
        if k in train_raw:
            _typed(k, train_raw[k], (int,), "train.")
    for k in ("learning_rate", "beta1", "beta2", "eps"):
        if k in train_raw:
            _typed(k, train_raw[k], (float, int), "train.")
    train_values = dict(train_raw)
    train_values.setdefault("seed", spec.seed)
    train = _build(TrainConfig, train_values, "train.")

    paths = {}
    for key in _PATH_KEYS:
        if raw.get(key) is not None:
            paths[key] = base_dir / _typed(key, raw[key], (str,))
    if "cache_dir" not in paths and os.environ.get("QUANTBENCH_CACHE_DIR"):
        paths["cache_dir"] = Path(os.environ["QUANTBENCH_CACHE_DIR"])

    metric_space = raw.get("metric_space", "scaled")
    if metric_space not in ("scaled", "price"):
        raise ConfigError("metric_space", f"must be 'scaled' or 'price', got {metric_space!r}")
    train_fraction = _typed("train_fraction", raw.get("train_fraction", 0.8), (float, int))
    if not 0 < train_fraction < 1:
        raise ConfigError("train_fraction", "must be in (0, 1)")

    advisory = raw.get("advisory", {})
    _check_keys(advisory, _ADVISORY_KEYS, "advisory.")
    sweep = raw.get("sweep", {})
    _check_keys(sweep, _SWEEP_KEYS, "sweep.")
    symbols = raw.get("symbols", [])
    if not isinstance(symbols, list) or not all(isinstance(s, str) for s in symbols):
        raise ConfigError("symbols", "expected a list of ticker strings")
    lookback = advisory.get("lookback")
    if lookback is not None and (not isinstance(lookback, int) or lookback < 2):
        raise ConfigError("advisory.lookback", "expected an integer >= 2")
    sweep_arch = sweep.get("architecture", "two_path")
    try:
        ModelSpec(architecture=sweep_arch)
    except ValueError as exc:
        raise ConfigError("sweep.architecture", str(exc)) from exc

    cfg = RunConfig(
        spec=spec,
        train=train,
        output_dir=paths.get("output_dir", base_dir / "out"),
        symbol=raw.get("symbol"),
        symbols=symbols,
        prices=paths.get("prices"),
        news=paths.get("news"),
        lexicon=paths.get("lexicon"),
        cache_dir=paths.get("cache_dir"),
        fundamentals=paths.get("fundamentals"),
        start=_date(raw, "start"),
        end=_date(raw, "end"),
        adjusted=bool(raw.get("adjusted", False)),
        train_fraction=float(train_fraction),
        metric_space=metric_space,
        sentiment_decay=float(_typed("sentiment_decay", raw.get("sentiment_decay", 0.5), (float, int))),
        advisory_threshold=float(_typed("advisory.threshold", advisory.get("threshold", 0.05), (float, int))),
        advisory_lookback=lookback,
        sweep_architecture=sweep_arch,
        sweep_windows=[int(w) for w in sweep.get("windows", [30, 60])],
        sweep_horizons=[int(h) for h in sweep.get("horizons", [1, 5, 10])],
    )
    if cfg.start and cfg.end and not cfg.start < cfg.end:
        raise ConfigError("start", "start must precede end")
    return cfg


def config_to_dict(spec: ModelSpec, train: TrainConfig) -> dict:
    """Model and training settings in config-file layout."""
    out = spec.to_dict()
    out["train"] = train.to_dict()
    return out
