import io
import math
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dyvol.market_data import (DJIA1982_TRIM_BOUNDS, BIN_COUNT_GRID, DataError, PathSet, PriceSeries, ReturnSeries,
                               TrimBounds, build_histogram, choose_bin_count, load_price_csv, overlapping_returns,
                               path_shape_variation, split_paths, trim_returns, write_price_csv)

CSV3 = "Date,Close\n2001-01-02,100\n2001-01-03,105\n2001-01-04,106\n"


def test_load_three_rows():
    p = load_price_csv(CSV3.encode())
    assert len(p) == 3
    assert p.dates[0].isoformat() == "2001-01-02"
    np.testing.assert_array_equal(p.closes, [100, 105, 106])


def test_load_reverse_order_is_identical():
    lines = CSV3.strip().split("\n")
    rev = "\n".join([lines[0]] + lines[1:][::-1]) + "\n"
    a, b = load_price_csv(CSV3.encode()), load_price_csv(io.BytesIO(rev.encode()))
    assert a.dates == b.dates
    np.testing.assert_array_equal(a.closes, b.closes)


def test_negative_close_reports_line():
    with pytest.raises(DataError, match="line 5"):
        load_price_csv((CSV3 + "2001-01-05,-3\n").encode())


@pytest.mark.parametrize("body,msg", [
    ("Date,Close\n2001-01-02,100\n2001-01-02,101\n", "duplicate"),
    ("Date,Close\n2001-01-02,100\n", "fewer than 2"),
    ("Date,Close\n2001-01-02,100\n2001-01-03,abc\n", "line 3"),
    ('Date,Close\n2001-01-02,100\n2001-01-03,"1,000.5"\n', "thousands"),
    ("Day,Px\n2001-01-02,100\n", "header"),
])
def test_load_errors(body, msg):
    with pytest.raises(DataError, match=msg):
        load_price_csv(body.encode())


def test_load_custom_columns_and_format(tmp_path):
    f = tmp_path / "p.csv"
    f.write_text("when;px\n02/01/2001;10\n03/01/2001;11\n")
    p = load_price_csv(str(f), "when", "px", "%d/%m/%Y", ";")
    assert p.dates[1].isoformat() == "2001-01-03"


def test_write_roundtrip(prices_small):
    buf = io.StringIO()
    write_price_csv(prices_small, buf)
    back = load_price_csv(buf.getvalue().encode())
    assert back.dates == prices_small.dates
    np.testing.assert_array_equal(back.closes, prices_small.closes)


def test_overlapping_examples():
    r = overlapping_returns(PriceSeries.from_closes([105, 106]), 1)
    assert r.values[0] == pytest.approx(9.48e-3, abs=5e-6)
    assert r.offset == 0
    assert np.all(overlapping_returns(PriceSeries.from_closes([7.0] * 10), 3).values == 0)
    assert len(overlapping_returns(PriceSeries.from_closes(np.ones(5050)), 5)) == 5045
    with pytest.raises(ValueError):
        overlapping_returns(PriceSeries.from_closes([1, 2]), 2)


def test_split_paths_examples():
    ps = split_paths(np.linspace(1, 2, 1000), 5)
    assert len(ps) == 5 and {len(p) for p in ps} == {199}
    c = np.arange(1.0, 12.0)
    ps = split_paths(c, 5)
    assert [len(p) for p in ps] == [2, 1, 1, 1, 1]
    assert sum(len(p) for p in ps) == 6 == len(overlapping_returns(c, 5))
    one = split_paths(c, 1)
    np.testing.assert_array_equal(one.paths[0].values, overlapping_returns(c, 1).values)
    with pytest.raises(ValueError):
        split_paths(c, 6)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(0.5, 2.0), min_size=4, max_size=80), st.integers(1, 10), st.floats(0.1, 50))
def test_union_and_scale_properties(closes, tau, scale):
    c = np.array(closes)
    if c.shape[0] // tau < 2:
        return
    over = overlapping_returns(c, tau).values
    ps = split_paths(c, tau)
    assert Counter(over.tolist()) == Counter(ps.pooled().tolist())
    lens = [len(p) for p in ps]
    assert max(lens) - min(lens) <= 1
    assert [p.offset for p in ps] == list(range(1, tau + 1))
    # pooled moments equal overlapping moments (same multiset)
    assert ps.pooled().mean() == pytest.approx(over.mean(), abs=1e-15)
    np.testing.assert_allclose(overlapping_returns(c * scale, tau).values, over, atol=1e-14)


def test_trim_examples():
    s = ReturnSeries(1, [-0.05, 0.01, 0.05])
    t = trim_returns(s, TrimBounds())
    np.testing.assert_array_equal(t.values, [0.01])
    assert t.n_trimmed == 2
    s2 = ReturnSeries(1, [0.0, 0.01])
    assert trim_returns(s2, TrimBounds()).values.tolist() == s2.values.tolist()
    r = trim_returns(ReturnSeries(250, [0.43, 0.45]), TrimBounds())
    assert r.values.tolist() == [0.43]
    assert trim_returns(t, TrimBounds()).values.tolist() == t.values.tolist()  # idempotent


def test_trim_bounds_validation():
    assert DJIA1982_TRIM_BOUNDS[250] == (-0.22, 0.44)
    with pytest.raises(ValueError):
        TrimBounds({1: (0.01, 0.04)})
    with pytest.raises(KeyError):
        TrimBounds().for_lag(3)


def test_histogram_uniform_no_filter():
    v = np.repeat(np.arange(10) + 0.5, 10) / 10.0
    h = build_histogram(v, 9)  # 10 bins of width 0.09
    assert h.counts.shape[0] == 10 and h.n_kept == 100
    assert np.sum(h.densities * h.width) == pytest.approx(1.0, abs=1e-12)
    assert np.isclose(h.center_shift, v.mean())


def test_histogram_sparse_bin_dropped():
    v = np.concatenate([np.repeat(np.arange(9.0), [11, 11, 11, 11, 11, 10, 10, 10, 10]), [9.5] * 4])
    assert v.shape[0] == 99
    h = build_histogram(v, 9)
    assert h.n_kept == 95
    assert np.sum(h.densities * h.width) == pytest.approx(95 / 99, abs=1e-12)
    assert np.all(h.counts >= 5)


def test_histogram_csv_and_errors():
    h = build_histogram(np.random.default_rng(0).standard_normal(500), 10)
    buf = io.StringIO()
    h.to_csv(buf)
    lines = buf.getvalue().splitlines()
    assert lines[0] == "bin_center,count,density" and len(lines) == h.counts.shape[0] + 1
    with pytest.raises(DataError):
        build_histogram(np.ones(20), 5)
    with pytest.raises(DataError):
        build_histogram(np.arange(8.0), 5)


def test_choose_bin_count():
    x = np.random.default_rng(1).standard_normal(5000)
    nb = choose_bin_count(x)
    assert nb in BIN_COUNT_GRID
    assert build_histogram(x, nb).kept_fraction > 0.99
    assert choose_bin_count(x) == nb
    tight = np.concatenate([np.zeros(49), [1.0]])
    assert choose_bin_count(tight) == 10


def test_path_shape_variation():
    p = ReturnSeries(1, [0.1, 0.3, 0.2])
    assert path_shape_variation(PathSet(2, (p, p))) == (0.0, 0.0)
    base = np.array([-1.0, 1.0]) / math.sqrt(2)
    paths = PathSet(3, tuple(ReturnSeries(3, 5 + s * base) for s in (1, 1, 2)))
    sig = np.array([1.0, 1.0, 2.0])
    assert path_shape_variation(paths)[1] == pytest.approx(100 * sig.std(ddof=1) / sig.mean(), rel=1e-12)
    with pytest.raises(ZeroDivisionError):
        path_shape_variation(PathSet(2, (ReturnSeries(1, [-1.0, 1.0]), ReturnSeries(1, [-2.0, 2.0]))))
