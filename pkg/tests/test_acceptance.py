"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

The lines are also collected into an "acceptance criteria" section at the
end of the pytest run.
"""

import csv
import math
import shutil
import time

import numpy as np
import pytest

from quantbench import linalg as la
from quantbench.cli import GRADCHECK_SPEC, main, run_gradcheck
from quantbench.data import sine_series
from quantbench.evaluation import evaluate_spec, metrics, significance_test
from quantbench.models import (
    ARCHITECTURES,
    LstmCellParams,
    ModelSpec,
    init_params,
    lstm_cell_step,
    predict,
)
from quantbench.preprocess import (
    FeatureMatrix,
    WindowedDataset,
    fit_minmax,
    from_price_series,
    inverse_transform,
    transform,
)
from quantbench.train import AdamState, TrainConfig, adam_step, train

import oracles

LINEUP = ["vanilla", "vanilla+sentiment", "bidirectional", "seq2seq", "two_path"]
SINE_CFG = TrainConfig(epochs=200, learning_rate=1e-3, seed=42)


def sine_spec(arch, horizon=1):
    return ModelSpec(arch, layers=2, units=16, window=30, horizon=horizon, features=1, seed=42)


@pytest.fixture(scope="module")
def sine_features():
    return from_price_series(sine_series(n=400, period=50))


@pytest.fixture(scope="module")
def sine_runs(sine_features):
    """Lazily trained sine-task runs keyed by (architecture, horizon)."""
    cache = {}

    def get(arch, horizon=1):
        key = (arch, horizon)
        if key not in cache:
            start = time.perf_counter()
            run = evaluate_spec(sine_spec(arch, horizon), sine_features, SINE_CFG)
            cache[key] = (run, time.perf_counter() - start)
        return cache[key]

    return get


@pytest.fixture(scope="module")
def benchmark_dirs(tmp_path_factory, request):
    fixtures = request.config.rootpath / "tests" / "fixtures"
    work = tmp_path_factory.mktemp("bench")
    shutil.copytree(fixtures, work / "fx", ignore=shutil.ignore_patterns("*.py", "__pycache__"))
    config = str(work / "fx" / "config.json")
    timings, codes = [], []
    for name in ("first", "second"):
        start = time.perf_counter()
        codes.append(main(["benchmark", config, "--output-dir", str(work / name)]))
        timings.append(time.perf_counter() - start)
    return work / "first", work / "second", codes, timings


def test_01_benchmark_table_form(criterion, benchmark_dirs):
    first, _, codes, timings = benchmark_dirs
    rows = list(csv.reader((first / "benchmark.csv").open()))
    header, body = rows[0], rows[1:]
    mses = [float(r[1]) for r in body]
    ok = (codes[0] == 0 and header == ["model", "mse", "rmse", "mae", "p_value"]
          and sorted(r[0] for r in body) == sorted(LINEUP) and mses == sorted(mses)
          and timings[0] < 600)
    criterion(1, "five-row benchmark table ranked by mse", ok,
              f"order={[r[0] for r in body]} runtime={timings[0]:.1f}s")
    assert ok


def test_02_gradient_certification(criterion):
    assert GRADCHECK_SPEC["features"] <= 2 and GRADCHECK_SPEC["units"] <= 4
    assert GRADCHECK_SPEC["layers"] <= 2 and GRADCHECK_SPEC["window"] <= 5
    assert GRADCHECK_SPEC["horizon"] <= 2
    start = time.perf_counter()
    errors = run_gradcheck(eps=1e-5)
    elapsed = time.perf_counter() - start
    ok = set(errors) == set(ARCHITECTURES) and max(errors.values()) < 1e-4 and elapsed < 60
    detail = " ".join(f"{a}={e:.1e}" for a, e in errors.items())
    criterion(2, "gradient check < 1e-4 for every architecture", ok, f"{detail} runtime={elapsed:.1f}s")
    assert ok


def test_03_metric_identities(criterion):
    rng = np.random.default_rng(3)
    worst_gap, order_ok = 0.0, True
    for _ in range(1000):
        shape = (int(rng.integers(1, 20)), int(rng.integers(1, 4)))
        pred, actual = rng.normal(size=shape), rng.normal(size=shape)
        m = metrics(pred, actual)
        worst_gap = max(worst_gap, abs(m.rmse - math.sqrt(m.mse)))
        order_ok &= m.rmse >= m.mae
    ok = worst_gap <= 1e-12 and order_ok
    criterion(3, "rmse = sqrt(mse) and rmse >= mae on 1000 random pairs", ok,
              f"max|rmse-sqrt(mse)|={worst_gap:.1e}")
    assert ok


# Reference (mse, rmse) pairs; the rmse must equal sqrt(mse) rounded to
# 3 decimals, except the row checked within 0.001.
REFERENCE_ROWS = [
    pytest.param(0.00035, 0.019, 0.0, id="0.00035"),
    pytest.param(0.00049, 0.022, 0.0, id="0.00049"),
    pytest.param(0.00056, 0.023, 0.001, id="0.00056"),
    pytest.param(0.00081, 0.029, 0.0, id="0.00081", marks=pytest.mark.xfail(
        strict=True, reason="sqrt(0.00081) = 0.02846 rounds to 0.028, not 0.029")),
    pytest.param(0.00208, 0.046, 0.0, id="0.00208"),
]


@pytest.mark.parametrize("mse,rmse,tolerance", REFERENCE_ROWS)
def test_03_reference_rounding(criterion, mse, rmse, tolerance):
    root = math.sqrt(mse)
    if tolerance:
        ok = abs(root - rmse) <= tolerance
        rule = f"within {tolerance}"
    else:
        ok = round(root, 3) == rmse
        rule = "3-decimal rounding"
    criterion(3, f"sqrt({mse}) matches {rmse} ({rule})", ok, f"sqrt={root:.5f}")
    assert ok


def test_04_scaler_round_trip(criterion):
    rng = np.random.default_rng(4)
    worst = 0.0
    for _ in range(1000):
        rows, cols = int(rng.integers(2, 30)), int(rng.integers(1, 5))
        values = rng.uniform(-1.0, 1.0, (rows, cols)) * rng.uniform(0.01, 500.0, cols) + rng.uniform(-500, 500, cols)
        if np.any(np.ptp(values, axis=0) == 0):
            continue
        fm = FeatureMatrix(tuple(range(rows)), values, tuple(f"c{i}" for i in range(cols)))
        state = fit_minmax(fm)
        back = inverse_transform(state, transform(state, fm)).values
        worst = max(worst, float(np.max(np.abs(back - values))))
    const = FeatureMatrix((0, 1, 2), np.array([[5.0, 1.0], [5.0, 2.0], [5.0, 3.0]]), ("close", "x"))
    state = fit_minmax(const)
    scaled = transform(state, const)
    degenerate_ok = (np.all(scaled.values[:, 0] == 0.0)
                     and np.all(inverse_transform(state, scaled).values[:, 0] == 5.0))
    ok = worst <= 1e-12 and degenerate_ok
    criterion(4, "inverse_transform(transform(x)) = x on 1000 matrices", ok, f"max abs error={worst:.1e}")
    assert ok


@pytest.mark.parametrize("arch", ARCHITECTURES)
def test_05_sine_convergence(criterion, sine_runs, arch):
    run, elapsed = sine_runs(arch)
    ok = run.metrics.rmse < 0.05 and elapsed < 300
    criterion(5, f"sine task test rmse < 0.05 ({arch})", ok,
              f"rmse={run.metrics.rmse:.4f} runtime={elapsed:.1f}s")
    assert ok


def test_06_overfit_single_sample(criterion):
    series = 0.5 + 0.4 * np.sin(2 * np.pi * np.arange(12) / 50)
    results = {}
    for arch in ARCHITECTURES:
        for horizon in (1, 2):
            x = series[:10].reshape(1, 10, 1)
            y = series[10:10 + horizon].reshape(1, horizon)
            spec = ModelSpec(arch, layers=2, units=8, dropout_rate=0.0, window=10, horizon=horizon, seed=42)
            params, history = train(spec, WindowedDataset(x, y, 10, horizon), TrainConfig(epochs=300, seed=42))
            mse = float(np.mean((predict(spec, params, x) - y) ** 2))
            first = next((i + 1 for i, v in enumerate(history) if v < 1e-4), None)
            results[(arch, horizon)] = (mse, first)
    ok = all(mse < 1e-4 and first is not None for mse, first in results.values())
    worst = max(results.values(), key=lambda r: r[1] or 10**9)
    criterion(6, "single-sample overfit to mse < 1e-4 within 300 epochs", ok,
              f"slowest reached it at epoch {worst[1]}")
    assert ok


def test_07_sweep_direction(criterion, sine_runs):
    short, _ = sine_runs("two_path", 1)
    long, _ = sine_runs("two_path", 10)
    ok = long.metrics.rmse >= short.metrics.rmse
    criterion(7, "two_path rmse(W=30,H=10) >= rmse(W=30,H=1)", ok,
              f"H=1 {short.metrics.rmse:.4f}, H=10 {long.metrics.rmse:.4f}")
    assert ok


def test_08_significance_oracle(criterion):
    n, t = 10, 2.262
    z = np.linspace(-1.0, 1.0, n)
    z = (z - z.mean()) / z.std(ddof=1)
    base = np.full(n, 0.01)
    p = significance_test(base + z + t / math.sqrt(n), base)
    same = np.random.default_rng(8).uniform(0, 1, 12)
    p_same = significance_test(same, same.copy())
    ok = abs(p - 0.05) < 1e-3 and p_same == 1.0
    criterion(8, "t-test p(n=10, t=2.262) = 0.05, identical inputs p = 1", ok,
              f"p={p:.5f} p_identical={p_same}")
    assert ok


def test_09_benchmark_determinism(criterion, benchmark_dirs):
    first, second, codes, _ = benchmark_dirs
    names = sorted(p.name for p in first.glob("*.csv"))
    same = names == sorted(p.name for p in second.glob("*.csv")) and all(
        (first / n).read_bytes() == (second / n).read_bytes() for n in names)
    ok = codes == [0, 0] and "benchmark.csv" in names and same
    criterion(9, "repeated benchmark runs give bytewise-identical CSVs", ok, f"{len(names)} files compared")
    assert ok


def test_10_oracle_equivalence(criterion):
    rng = np.random.default_rng(10)
    worst = {"lstm_cell_step": 0.0, "matmul": 0.0, "adam_step": 0.0}
    for _ in range(100):
        m, k, n = (int(v) for v in rng.integers(1, 6, 3))
        a, b = rng.uniform(-1, 1, (m, k)), rng.uniform(-1, 1, (k, n))
        worst["matmul"] = max(worst["matmul"], float(np.max(np.abs(la.matmul(a, b) - np.array(oracles.matmul(a.tolist(), b.tolist()))))))

        f_in, u, rows = int(rng.integers(1, 4)), int(rng.integers(1, 5)), int(rng.integers(1, 4))
        p = LstmCellParams(rng.uniform(-1, 1, (f_in, 4 * u)), rng.uniform(-1, 1, (u, 4 * u)),
                           rng.uniform(-1, 1, (1, 4 * u)))
        x, h0, c0 = rng.uniform(-1, 1, (rows, f_in)), rng.uniform(-1, 1, (rows, u)), rng.uniform(-1, 1, (rows, u))
        h, c, _ = lstm_cell_step(x, h0, c0, p)
        h_ref, c_ref = oracles.lstm_cell(x.tolist(), h0.tolist(), c0.tolist(), p.W.tolist(), p.R.tolist(),
                                         p.b.tolist(), u)
        worst["lstm_cell_step"] = max(worst["lstm_cell_step"], float(np.max(np.abs(h - h_ref))),
                                      float(np.max(np.abs(c - c_ref))))

        spec = ModelSpec("vanilla", layers=1, units=int(rng.integers(1, 4)), window=2, features=1,
                         seed=int(rng.integers(1 << 30)))
        params = init_params(spec)
        flat0 = np.concatenate([arr.reshape(-1) for arr in params.arrays()]).tolist()
        cfg = TrainConfig(learning_rate=float(rng.uniform(1e-4, 1e-1)), beta1=float(rng.uniform(0.5, 0.95)),
                          beta2=float(rng.uniform(0.9, 0.9999)))
        state, steps = AdamState.fresh(params), []
        for _ in range(int(rng.integers(1, 4))):
            g = params.zeros_like()
            for arr in g.arrays():
                arr[...] = rng.normal(size=arr.shape)
            steps.append(np.concatenate([arr.reshape(-1) for arr in g.arrays()]).tolist())
            adam_step(params, g, state, cfg)
        ref = oracles.adam(flat0, steps, cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.eps)
        got = np.concatenate([arr.reshape(-1) for arr in params.arrays()])
        worst["adam_step"] = max(worst["adam_step"], float(np.max(np.abs(got - ref))))
    ok = all(v <= 1e-12 for v in worst.values())
    criterion(10, "cell, matmul and adam match scalar references on 100 cases", ok,
              " ".join(f"{k}={v:.1e}" for k, v in worst.items()))
    assert ok
