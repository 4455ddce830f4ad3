import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from windval.errors import DataError
from windval.reanalysis import Grid
from windval.validation import (
    CapacityFactorSeries,
    aggregate_spatial,
    aggregate_temporal,
    boxplot_stats,
    correlation_gain_example,
    correlation_loss_example,
    evaluate,
    mbe,
    medians_differ,
    notch_interval,
    pearson,
    rmse,
    system_size,
    system_size_band,
    to_capacity_factor,
)

HOURS = np.datetime64("2021-01-01T00:00", "ns") + np.arange(48) * np.timedelta64(1, "h")


def cfs(values, mask=None, ts=None):
    values = np.asarray(values, float)
    ts = HOURS[: len(values)] if ts is None else ts
    return CapacityFactorSeries(ts, values, np.zeros(len(values), bool) if mask is None else mask)


def naive(sim, obs, mask):
    """Direct summation over jointly unmasked pairs."""
    pairs = [(s, o) for s, o, m in zip(sim, obs, mask) if not m and math.isfinite(s) and math.isfinite(o)]
    n = len(pairs)
    ms = sum(s for s, _ in pairs) / n
    mo = sum(o for _, o in pairs) / n
    cov = sum((s - ms) * (o - mo) for s, o in pairs)
    vs = sum((s - ms) ** 2 for s, _ in pairs)
    vo = sum((o - mo) ** 2 for _, o in pairs)
    r = cov / math.sqrt(vs * vo)
    e = math.sqrt(sum((s - o) ** 2 for s, o in pairs) / n)
    b = sum(s - o for s, o in pairs) / n
    return r, e, b, n


def test_to_capacity_factor_examples():
    np.testing.assert_array_equal(to_capacity_factor([5, 7], [5, 7], timestamps=HOURS[:2]).values, [1, 1])
    np.testing.assert_array_equal(to_capacity_factor([0, 0], 3, timestamps=HOURS[:2]).values, [0, 0])
    assert to_capacity_factor([500.0], [2000.0], timestamps=HOURS[:1]).values[0] == 0.25
    out = to_capacity_factor([1.0, 0.0], [0.0, 2.0], timestamps=HOURS[:2])
    assert out.mask.tolist() == [True, False]
    with pytest.raises(DataError):
        to_capacity_factor([-1.0], [2.0], timestamps=HOURS[:1])


def test_aggregate_spatial_examples():
    a, b = cfs([0.2]), cfs([0.4])
    assert aggregate_spatial([a, b], [1.0, 1.0]).values[0] == pytest.approx(0.3)
    assert aggregate_spatial([a], [5.0]).values[0] == 0.2
    assert aggregate_spatial([cfs([0.4]), cfs([0.0])], [1000.0, 3000.0]).values[0] == pytest.approx(0.1)
    with pytest.raises(DataError):
        aggregate_spatial([], [])


def test_aggregate_spatial_skips_masked_members():
    a = cfs([0.2, 0.2], mask=np.array([False, True]))
    b = cfs([0.6, 0.6])
    out = aggregate_spatial([a, b], [1.0, 1.0])
    np.testing.assert_allclose(out.values, [0.4, 0.6])


def test_aggregate_temporal_examples():
    assert aggregate_temporal(cfs([0.5] * 48), "daily").values.tolist() == [0.5, 0.5]
    m = np.zeros(24, bool)
    m[5] = True
    v = np.full(24, 0.5)
    v[5] = 99
    assert aggregate_temporal(cfs(v, m), "daily").values.tolist() == [0.5]
    ramp = cfs(np.arange(24) / 46)
    assert aggregate_temporal(ramp, "daily").values[0] == pytest.approx(0.25, rel=1e-15)
    dead = cfs([0.1] * 24, np.ones(24, bool))
    assert aggregate_temporal(dead, "daily").mask.tolist() == [True]


def test_aggregate_monthly_buckets_utc():
    ts = np.datetime64("2021-01-31T22:00", "ns") + np.arange(4) * np.timedelta64(1, "h")
    out = aggregate_temporal(cfs([0.2, 0.4, 0.6, 0.8], ts=ts), "monthly")
    np.testing.assert_allclose(out.values, [0.3, 0.7])
    assert out.timestamps[1] == np.datetime64("2021-02-01")


@given(arrays(float, (3, 48), elements=st.floats(0, 1)), arrays(float, 3, elements=st.floats(1, 100)))
def test_spatial_and_temporal_aggregation_commute(values, caps):
    members = [cfs(v) for v in values]
    a = aggregate_temporal(aggregate_spatial(members, list(caps)), "daily")
    b = aggregate_spatial([aggregate_temporal(m, "daily") for m in members], list(caps))
    np.testing.assert_allclose(a.values, b.values, rtol=1e-12, atol=1e-15)


def test_metric_examples():
    a = np.array([0.1, 0.4, 0.3, 0.8])
    assert (pearson(a, a), rmse(a, a), mbe(a, a)) == (1.0, 0.0, 0.0)
    b = a + 0.05
    assert mbe(a, b) == pytest.approx(-0.05)
    assert rmse(a, b) == pytest.approx(0.05)
    assert pearson(a, b) == pytest.approx(1.0, abs=1e-12)


def test_tiny_variance_does_not_underflow():
    a = np.zeros(10)
    a[0] = 1e-160
    assert pearson(a, a) == pytest.approx(1.0)


def test_zero_variance_gives_nan():
    assert math.isnan(pearson([0.3, 0.3, 0.3], [0.1, 0.2, 0.3]))
    assert math.isnan(pearson([0.3], [0.1]))
    assert not evaluate([0.3, 0.3], [0.1, 0.2]).r_defined


def test_statistics_oracle(rng):
    for _ in range(1000):
        n = int(rng.integers(3, 60))
        sim = rng.uniform(0, 1, n)
        obs = rng.uniform(0, 1, n)
        mask = rng.random(n) < 0.3
        obs[rng.random(n) < 0.05] = np.nan
        if (~mask & np.isfinite(obs)).sum() < 3:
            continue
        r, e, b, k = naive(sim, obs, mask)
        got = evaluate(sim, obs, mask)
        assert got.n == k
        assert got.pearson_r == pytest.approx(r, abs=1e-12)
        assert got.rmse == pytest.approx(e, abs=1e-12)
        assert got.mbe == pytest.approx(b, abs=1e-12)
        err = (sim - obs)[~mask & np.isfinite(obs)]
        assert got.rmse**2 == pytest.approx(got.mbe**2 + err.var(), rel=1e-9)


grid01 = st.integers(0, 1000).map(lambda k: k / 1000)


@given(arrays(float, 30, elements=grid01), arrays(float, 30, elements=grid01),
       st.floats(0.01, 100), st.floats(-10, 10))
def test_pearson_affine_invariance(a, b, s, c):
    r0, r1 = pearson(a, b), pearson(s * a + c, b)
    if math.isnan(r0):
        assert math.isnan(r1)
        return
    assert r1 == pytest.approx(r0, abs=1e-12)


@given(arrays(float, 25, elements=st.floats(-1, 1)), arrays(float, 25, elements=st.floats(-1, 1)))
def test_metric_invariants(a, b):
    m = evaluate(a, b)
    assert m.rmse >= abs(m.mbe) - 1e-15
    if m.r_defined:
        assert -1 <= m.pearson_r <= 1


def test_notch_examples():
    n = notch_interval([1, 2, 3, 4, 5])
    assert (n.median, n.iqr) == (3.0, 2.0)
    assert n.lo == pytest.approx(3 - 1.57 * 2 / math.sqrt(5), rel=1e-15)
    assert (round(n.lo, 3), round(n.hi, 3)) == (1.596, 4.404)
    flat = notch_interval([1, 1, 1, 1])
    assert flat.lo == flat.median == flat.hi == 1


def test_notch_width_shrinks_with_sqrt_n():
    base = np.array([0.0, 1.0, 2.0, 3.0])
    w4 = notch_interval(base).hi - notch_interval(base).lo
    w16 = notch_interval(np.repeat(base, 4))
    assert (w16.hi - w16.lo) == pytest.approx(w4 / 2 * (w16.iqr / notch_interval(base).iqr), rel=1e-12)


@given(arrays(float, st.integers(1, 40), elements=st.floats(-5, 5)))
def test_notch_contains_median(x):
    n = notch_interval(x)
    assert n.lo <= n.median <= n.hi


def test_medians_differ_examples(rng):
    a = rng.normal(size=30)
    assert not medians_differ(a, a)
    assert medians_differ(rng.uniform(0, 1, 20), rng.uniform(2, 3, 20))
    # medians 0.82 vs 0.77 with wide spread: not significant
    r_a = 0.82 + rng.normal(scale=0.15, size=25)
    r_b = 0.77 + rng.normal(scale=0.15, size=25)
    r_a += 0.82 - np.median(r_a)
    r_b += 0.77 - np.median(r_b)
    assert not medians_differ(r_a, r_b)


@given(arrays(float, st.integers(1, 30), elements=st.floats(-5, 5)), arrays(float, st.integers(1, 30), elements=st.floats(-5, 5)))
def test_medians_differ_symmetric(a, b):
    assert medians_differ(a, b) == medians_differ(b, a)


def test_boxplot_stats():
    st_ = boxplot_stats([1, 2, 3, 4, 5, 100])
    assert st_["outliers"] == 1
    assert st_["whisker_hi"] == 5 and st_["whisker_lo"] == 1


def test_system_size():
    g = Grid(0.0, 1.0, 0.0, 1.0, 5, 5)
    assert system_size([(0.1, 0.1)], g) == 1
    assert system_size([(0.1, 0.1), (0.2, -0.1)], g) == 1
    assert system_size([(0, 0), (1, 1), (2, 2), (4, 0)], g) == 4
    assert [system_size_band(k) for k in (1, 4, 5, 24, 25, 300)] == [1, 1, 2, 2, 3, 3]


def test_correlation_gain_construction():
    ex = correlation_gain_example(1000, seed=0)
    assert abs(pearson(ex.x1, ex.y1)) < 0.1
    assert pearson(ex.x, ex.y) == pytest.approx(1.0, abs=1e-9)
    assert np.var(ex.x) < 0.01 * np.var(ex.x1)


@settings(max_examples=20)
@given(st.integers(0, 2**31))
def test_correlation_loss_construction(seed):
    ex = correlation_loss_example(1000, seed=seed)
    # y1 = 3 x1 is rounded per element, so exactness holds only to a few ulps
    assert pearson(ex.x1, ex.y1) == pytest.approx(1.0, abs=1e-15)
    np.testing.assert_allclose(ex.y, ex.x1, rtol=1e-12, atol=1e-15)
    assert abs(pearson(ex.x, ex.y)) < 0.15
