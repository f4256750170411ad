import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from quantbench.advisory import (
    DegenerateSeriesError,
    advise,
    classify,
    format_advisory,
    return_volatility_ratio,
    simple_returns,
    write_advisory_csv,
)
from quantbench.data import series_from_closes

returns_lists = st.lists(st.floats(-0.2, 0.2), min_size=2, max_size=30)


def closes_from_returns(returns, start=100.0):
    out = [start]
    for r in returns:
        out.append(out[-1] * (1 + r))
    return out


class TestReturns:
    def test_examples(self):
        assert simple_returns([100.0, 110.0]) == pytest.approx([0.10])
        assert simple_returns([5.0, 5.0, 5.0]) == [0.0, 0.0]
        assert simple_returns([100.0, 90.0, 99.0]) == pytest.approx([-0.10, 0.10])

    def test_accepts_series(self):
        assert simple_returns(series_from_closes("X", [100.0, 110.0])) == pytest.approx([0.10])

    def test_too_short(self):
        with pytest.raises(ValueError):
            simple_returns([100.0])


class TestRatio:
    def test_hand_computed(self):
        mean, vol, ratio = return_volatility_ratio([0.02, 0.00, 0.01, 0.03])
        assert mean == pytest.approx(0.015, abs=1e-15)
        assert vol == pytest.approx(math.sqrt(5e-4 / 3), rel=1e-12)
        assert vol == pytest.approx(0.012909944, abs=1e-9)
        assert ratio == pytest.approx(1.161895, abs=1e-6)

    def test_symmetric_returns(self):
        mean, _, ratio = return_volatility_ratio([0.01, -0.01])
        assert mean == 0.0 and ratio == 0.0

    def test_degenerate(self):
        with pytest.raises(DegenerateSeriesError):
            return_volatility_ratio([0.01, 0.01, 0.01])

    def test_too_short(self):
        with pytest.raises(ValueError):
            return_volatility_ratio([0.01])

    @given(returns_lists)
    def test_antisymmetry(self, returns):
        try:
            mean, vol, ratio = return_volatility_ratio(returns)
        except DegenerateSeriesError:
            return
        n_mean, n_vol, n_ratio = return_volatility_ratio([-r for r in returns])
        assert n_mean == pytest.approx(-mean, abs=1e-15)
        assert n_vol == pytest.approx(vol, rel=1e-12)
        assert n_ratio == pytest.approx(-ratio, rel=1e-9, abs=1e-12)


class TestClassify:
    @pytest.mark.parametrize("ratio,signal", [(0.05, "buy"), (0.2, "buy"), (-0.05, "sell"),
                                              (-1.0, "sell"), (0.0, "hold"), (0.049, "hold")])
    def test_bands(self, ratio, signal):
        assert classify(ratio) == signal

    def test_custom_threshold(self):
        assert classify(0.3, threshold=0.5) == "hold"


class TestAdvise:
    def test_up_trend_is_buy(self):
        closes = closes_from_returns([0.01, 0.02, 0.005, 0.015, 0.01])
        report = advise([series_from_closes("UP", closes)])
        (entry,) = report.entries
        assert entry.signal == "buy" and entry.ratio > 0.05

    def test_mirrored_pair(self):
        rets = [0.01, -0.005, 0.02, 0.003, -0.001]
        up = series_from_closes("AAA", closes_from_returns(rets))
        down = series_from_closes("BBB", closes_from_returns([-r for r in rets]))
        report = advise([down, up])
        assert report.symbols() == ["AAA", "BBB"]
        assert report["BBB"].ratio == pytest.approx(-report["AAA"].ratio)
        assert (report["AAA"].signal, report["BBB"].signal) == ("buy", "sell")

    def test_degenerate_listed_last(self):
        flat = series_from_closes("FLAT", [10.0] * 6)
        up = series_from_closes("UP", closes_from_returns([0.01, 0.02, 0.0, 0.01]))
        down = series_from_closes("DN", closes_from_returns([-0.01, -0.02, 0.0, -0.01]))
        report = advise([flat, down, up])
        assert report.symbols() == ["UP", "DN", "FLAT"]
        assert report["FLAT"].signal == "hold" and math.isnan(report["FLAT"].ratio)

    def test_forecast_raises_mean(self):
        s = series_from_closes("X", closes_from_returns([0.01, -0.02, 0.005, 0.0]))
        plain = advise([s])["X"]
        boosted = advise([s], forecasts={"X": s.bars[-1].close * 1.5})["X"]
        assert boosted.mean_return > plain.mean_return

    def test_lookback(self):
        s = series_from_closes("X", closes_from_returns([-0.05, -0.04, 0.01, 0.02, 0.015]))
        assert advise([s])["X"].ratio < 0
        assert advise([s], lookback=3)["X"].signal == "buy"

    def test_empty(self):
        with pytest.raises(ValueError):
            advise([])

    def test_unknown_symbol_lookup(self):
        report = advise([series_from_closes("X", [1.0, 2.0, 3.0])])
        with pytest.raises(KeyError):
            report["Y"]

    @given(st.lists(returns_lists, min_size=1, max_size=6), st.randoms())
    def test_permutation_and_order_independence(self, return_sets, random):
        series = [series_from_closes(f"S{i}", closes_from_returns(r)) for i, r in enumerate(return_sets)]
        report = advise(series)
        assert sorted(report.symbols()) == sorted(s.symbol for s in series)
        shuffled = list(series)
        random.shuffle(shuffled)
        assert advise(shuffled) == report
        ratios = [e.ratio for e in report.entries if not math.isnan(e.ratio)]
        assert ratios == sorted(ratios, reverse=True)

    def test_deterministic_output(self, tmp_path):
        series = [series_from_closes("A", [1.0, 1.1, 1.05, 1.2]), series_from_closes("B", [3.0, 2.9, 2.7, 2.8])]
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        write_advisory_csv(advise(series), a)
        write_advisory_csv(advise(series), b)
        assert a.read_bytes() == b.read_bytes()
        assert a.read_text().splitlines()[0] == "symbol,mean_return,volatility,ratio,signal"

    def test_csv_leaves_degenerate_ratio_blank(self, tmp_path):
        path = tmp_path / "adv.csv"
        write_advisory_csv(advise([series_from_closes("F", [2.0, 2.0, 2.0])]), path)
        assert path.read_text().splitlines()[1] == "F,0.0,0.0,,hold"
        assert "n/a" in format_advisory(advise([series_from_closes("F", [2.0, 2.0, 2.0])]))
