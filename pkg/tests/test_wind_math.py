import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from windval.errors import DomainError
from windval.wind_math import (
    HeightPair,
    effective_speed,
    extrapolate_to_hub,
    hellmann_exponent,
)

speeds = st.floats(0.5, 30.0)
components = st.floats(-50, 50, allow_nan=False)


def test_effective_speed_examples():
    assert effective_speed(3, 4) == 5.0
    assert effective_speed(0, 0) == 0.0
    assert effective_speed(1, 1) == pytest.approx(math.sqrt(2), rel=1e-15)


def test_effective_speed_array_and_scalar():
    out = effective_speed(np.array([3.0, 0.0]), np.array([4.0, 2.0]))
    np.testing.assert_array_equal(out, [5.0, 2.0])
    assert isinstance(effective_speed(3.0, 4.0), float)


@pytest.mark.parametrize("bad", [math.nan, math.inf, -math.inf])
def test_effective_speed_rejects_non_finite(bad):
    with pytest.raises(DomainError):
        effective_speed(bad, 1.0)


@given(components, components)
def test_effective_speed_symmetries(u, v):
    s = effective_speed(u, v)
    assert s == effective_speed(v, u) == effective_speed(-u, v)
    assert s >= 0


def test_height_pair_invariant():
    with pytest.raises(DomainError):
        HeightPair(100, 10)
    with pytest.raises(DomainError):
        HeightPair(0, 10)


def test_hellmann_examples():
    h = HeightPair(10, 100)
    assert hellmann_exponent(5, 5, h).alpha[0] == 0.0
    # ln 2 / ln 10
    assert hellmann_exponent(5, 10, h).alpha[0] == pytest.approx(0.301029995663981, rel=1e-12)
    assert hellmann_exponent(5, 5 * 10**0.14, h).alpha[0] == pytest.approx(0.14, rel=1e-12)


def test_hellmann_fallback_below_eps():
    h = HeightPair(10, 100)
    res = hellmann_exponent([0.05, 0.1, 0.11, 6.0], [5.0, 5.0, 5.0, 0.0], h)
    np.testing.assert_array_equal(res.fallback, [True, True, False, True])
    assert res.alpha[0] == pytest.approx(1 / 7)
    assert res.alpha[3] == pytest.approx(1 / 7)
    assert not res.clamped.any()


def test_hellmann_clamped_and_flagged():
    h = HeightPair(10, 100)
    res = hellmann_exponent([0.2, 20.0], [30.0, 0.15], h)
    np.testing.assert_array_equal(res.alpha, [2.0, -1.0])
    np.testing.assert_array_equal(res.clamped, [True, True])
    np.testing.assert_array_equal(res.fallback, [False, False])


def test_extrapolate_examples():
    assert extrapolate_to_hub(8, 100, 0.2, 100) == 8
    # 8 * 1.2 ** (1/7), 30-digit decimal oracle
    assert extrapolate_to_hub(8, 100, 1 / 7, 120) == pytest.approx(8.21110477005631692, rel=1e-14)
    assert extrapolate_to_hub(6.5, 100, 0.0, 40) == 6.5


def test_extrapolate_rejects_bad_input():
    with pytest.raises(DomainError):
        extrapolate_to_hub(-1, 100, 0.1, 120)
    with pytest.raises(DomainError):
        extrapolate_to_hub(5, 0, 0.1, 120)


@given(speeds, speeds, st.floats(1.0, 50.0), st.floats(2.0, 20.0))
def test_round_trip_when_not_clamped(v_lo, v_hi, h_lo, ratio):
    h = HeightPair(h_lo, h_lo * ratio)
    res = hellmann_exponent(v_lo, v_hi, h)
    if res.clamped[0]:
        return
    back = extrapolate_to_hub(v_lo, h.h_lo, res.alpha[0], h.h_hi)
    assert back == pytest.approx(v_hi, rel=1e-9)


@given(st.floats(0.01, 1.0), st.floats(0, 30), st.floats(10, 200), st.floats(0, 100), st.floats(0, 100))
def test_extrapolation_monotone_in_height(alpha, v, h_ref, d1, d2):
    hub1 = h_ref + min(d1, d2)
    hub2 = h_ref + max(d1, d2)
    assert extrapolate_to_hub(v, h_ref, alpha, hub2) >= extrapolate_to_hub(v, h_ref, alpha, hub1)
