import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from windval import cleaning as cl
from windval.errors import AlignmentError, FormatError
from windval.synthetic import attrition_corpus, hourly_axis


def series(values, cap=None, start="2020-01-01", step="h", name="s"):
    values = np.asarray(values, float)
    ts = np.datetime64(start, "ns") + np.arange(len(values)) * np.timedelta64(1, step)
    return cl.ObservedSeries.from_values(name, ts, values, cap)


def background(n, rng=None):
    rng = rng or np.random.default_rng(0)
    return rng.uniform(1.0, 9.0, n)


def masked_by(s, rule):
    return s.reason == cl.RULES.index(rule)


def test_edge_zeros_examples():
    s = cl.trim_edge_zeros(series([0, 0, 5, 3, 0]))
    np.testing.assert_array_equal(s.mask, [True, True, False, False, True])
    assert s.log == {"edge_zeros": 3}
    same = series([1, 0, 2])
    assert cl.trim_edge_zeros(same) is same
    empty = cl.trim_edge_zeros(series([0, 0, 0]))
    assert empty.empty


def test_edge_zeros_pass_over_missing():
    s = cl.trim_edge_zeros(series([np.nan, 0, 4, 0, np.nan]))
    assert s.log == {"missing": 2, "edge_zeros": 2}


@pytest.mark.parametrize("n,masked", [(24, False), (25, True)])
def test_constant_run_boundary(n, masked):
    v = background(100)
    v[30 : 30 + n] = 3.3
    out = cl.remove_constant_runs(series(v))
    assert out.mask.any() == masked
    if masked:
        assert out.log == {"constant_run": n}


def test_constant_run_rounding_and_alternation():
    v = background(100)
    v[10:40] = 3.3 + np.tile([1e-5, -1e-5], 15)
    assert cl.remove_constant_runs(series(v)).log == {"constant_run": 30}
    alt = np.tile([2.0, 3.0], 50)
    assert not cl.remove_constant_runs(series(alt)).mask.any()


def test_zero_runs_are_not_constant_runs():
    v = background(100)
    v[10:60] = 0.0
    assert not cl.remove_constant_runs(series(v)).mask.any()


@pytest.mark.parametrize("n,masked", [(180, False), (181, True)])
def test_zero_run_boundary(n, masked):
    v = background(400)
    v[100 : 100 + n] = 0.0
    out = cl.remove_zero_runs(series(v))
    assert out.mask.sum() == (n if masked else 0)


def test_interleaved_zeros_kept():
    v = np.tile([0.0, 0.0, 5.0], 200)
    assert not cl.remove_zero_runs(series(v)).mask.any()


def test_masked_step_breaks_run():
    v = background(300)
    v[10:200] = 0.0
    v[100] = np.nan
    assert not cl.remove_zero_runs(series(v)).log.get("zero_run")


@pytest.mark.parametrize("cf,masked", [(1.0, False), (1.001, True), (0.5, False)])
def test_cf_boundary(cf, masked):
    v = np.full(10, 0.3 * 2000)
    v[4] = cf * 2000
    out = cl.remove_cf_above_one(series(v, cap=2000.0))
    assert out.mask[4] == masked and out.mask.sum() == int(masked)


def test_zero_capacity_logged_separately():
    cap = np.array([0.0, 0.0, 100.0])
    out = cl.remove_cf_above_one(series([5.0, 0.0, 50.0], cap=cap))
    assert out.log == {"zero_capacity": 1}
    assert out.mask.tolist() == [True, False, False]


@pytest.mark.parametrize("n,keep", [(17519, False), (17520, True)])
def test_min_length_boundary(n, keep):
    v = np.full(n + 50, 5.0)
    v[:50] = np.nan
    assert cl.enforce_min_length(series(v)) == keep


def test_min_length_counts_non_consecutive():
    v = np.full(3 * 8760, 5.0)
    v[8760 : 2 * 8760] = np.nan
    assert cl.enforce_min_length(series(v))


def test_interpolate_short_gaps():
    s = cl.ObservedSeries.from_values("g", np.datetime64("2020-01-01") + np.arange(3) * np.timedelta64(5, "m"),
                                      [10.0, np.nan, 12.0])
    out = cl.interpolate_short_gaps(s)
    assert out.values[1] == 11.0 and not out.mask.any() and out.filled == 1


@pytest.mark.parametrize("gap,filled", [(12, True), (13, False)])
def test_interpolation_gap_limit(gap, filled):
    v = np.arange(40.0)
    v[5 : 5 + gap] = np.nan
    ts = np.datetime64("2020-01-01") + np.arange(40) * np.timedelta64(5, "m")
    out = cl.interpolate_short_gaps(cl.ObservedSeries.from_values("g", ts, v))
    if filled:
        np.testing.assert_allclose(out.values, np.arange(40.0))
    else:
        assert out.mask.sum() == gap and out.filled == 0


def test_no_gaps_unchanged():
    s = series(np.arange(10.0))
    assert cl.interpolate_short_gaps(s) is s


def test_resample_hourly_keeps_fill_count():
    ts = np.datetime64("2020-01-01") + np.arange(24) * np.timedelta64(5, "m")
    v = np.ones(24)
    v[3] = np.nan
    filled = cl.interpolate_short_gaps(cl.ObservedSeries.from_values("g", ts, v, 10.0))
    hourly = cl.resample_hourly(filled)
    assert len(hourly.values) == 2 and hourly.filled == 1
    np.testing.assert_array_equal(hourly.values, [1.0, 1.0])


def test_align_and_mask_union():
    a = series([1.0, np.nan, 3.0, 4.0], name="a")
    b = series([1.0, 2.0, 3.0, np.nan], name="b")
    sims = [series([1.0] * 4, name="sa"), series([2.0] * 4, name="sb")]
    s2, o2 = cl.align_and_mask(sims, [a, b])
    for m in s2 + o2:
        np.testing.assert_array_equal(m.mask, [False, True, False, True])
    assert o2[0].log == {"missing": 1, "group_missing": 1}


def test_align_identity_and_degenerate(caplog):
    a = series([1.0, 2.0])
    s2, o2 = cl.align_and_mask([series([1.0, 1.0])], [a])
    assert o2[0] is a
    dead = series([np.nan, np.nan])
    with caplog.at_level("WARNING"):
        _, o3 = cl.align_and_mask([series([1.0, 1.0])], [dead])
    assert cl.group_is_empty(o3)
    assert "empty" in caplog.text


def test_align_rejects_different_axes():
    with pytest.raises(AlignmentError):
        cl.align_and_mask([series([1.0, 2.0], start="2021-01-01")], [series([1.0, 2.0])])


value_arrays = arrays(
    float, st.integers(1, 400),
    elements=st.one_of(st.just(0.0), st.just(3.3), st.just(np.nan), st.floats(0, 1.3)),
)


@settings(max_examples=300)
@given(value_arrays)
def test_clean_is_idempotent_and_log_exhaustive(v):
    th = cl.Thresholds(constant_run_hours=3, zero_run_hours=5, min_years=0)
    first = cl.clean_series(series(v, cap=1.0), thresholds=th).series
    assert sum(first.log.values()) == int(first.mask.sum())
    again = cl.clean_series(first, thresholds=th).series
    np.testing.assert_array_equal(again.reason, first.reason)


def test_attrition_corpus_counts():
    results = [cl.clean_series(s) for s in attrition_corpus(seed=0)]
    table = {r["rule"]: (r["applies_to"], r["remaining"]) for r in cl.attrition_table(results)}
    assert table["total"] == ("", 70)
    assert table["constant_run"][0] == 50
    assert table["zero_run"][0] == 28
    assert table["cf_above_one"][0] == 59
    assert table["short_series"] == (17, 53)


def test_exclusions(tmp_path):
    p = tmp_path / "ex.csv"
    p.write_text("region,start,end\nTX,2020-01-01T02:00,2020-01-01T03:00\nOK,,\n")
    ex = cl.load_exclusions(p)
    out = cl.apply_exclusions(series(np.ones(5)), "TX", ex)
    assert out.log == {"excluded": 2}
    assert cl.apply_exclusions(series(np.ones(5)), "OK", ex).empty
    assert not cl.apply_exclusions(series(np.ones(5)), "CA", ex).mask.any()


def test_observed_round_trip(tmp_path):
    s = cl.clean_series(series([0, 5, 5.5, np.nan, 7, 2500, 0], cap=2000.0), thresholds=cl.Thresholds(min_years=0))
    cl.write_observed(s.series, tmp_path / "o.csv")
    back = cl.load_observed(tmp_path / "o.csv")
    np.testing.assert_array_equal(back.reason, s.series.reason)
    np.testing.assert_array_equal(back.timestamps, s.series.timestamps)
    np.testing.assert_array_equal(back.capacity_kw, 2000.0)


def test_load_observed_errors(tmp_path):
    p = tmp_path / "o.csv"
    p.write_text("timestamp,foo\n2020-01-01T00:00Z,1\n")
    with pytest.raises(FormatError):
        cl.load_observed(p)
    p.write_text("timestamp,generation_kw\n2020-01-01T00:00Z,1\n2020-01-01T01:00Z,1\n2020-01-01T03:00Z,1\n")
    with pytest.raises(FormatError, match="uniform"):
        cl.load_observed(p)
    p.write_text("timestamp,capacity_factor\n2020-01-01T00:00+03:00,0.5\n2020-01-01T01:00+03:00,0.6\n")
    cf = cl.load_observed(p)
    assert cf.unit == "cf" and cf.timestamps[0] == np.datetime64("2019-12-31T21:00")


def test_cleaning_report(tmp_path):
    v = background(100)
    v[:3] = 0
    v[40:70] = 4.0
    res = cl.clean_series(series(v, cap=100.0), thresholds=cl.Thresholds(min_years=0))
    cl.write_cleaning_report(res.series, tmp_path / "r.csv")
    df = pd.read_csv(tmp_path / "r.csv")
    assert dict(zip(df.rule, df.steps_masked)) == {"edge_zeros": 3, "constant_run": 30}
    assert df.loc[df.rule == "constant_run", "intervals"].item() == "2020-01-02T16:00:00/2020-01-03T21:00:00"
    assert df.loc[df.rule == "edge_zeros", "intervals"].item() == "2020-01-01T00:00:00/2020-01-01T02:00:00"
