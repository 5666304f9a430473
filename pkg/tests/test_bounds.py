import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from artifact.bounds import (
    BIN_NAMES,
    BoundSet,
    classify_rates,
    rate_cap_general,
    rate_cap_general_bisect,
    rate_cap_width2,
    uniform_rate_floor,
)
from artifact.model import ConfigError


def test_cap_general_known_value_width3():
    # (3, 2, 1): (W-1) g_1 = 6 > 5 = g_1 + g_2, so the cap is the average
    # (3 + 3 + 2) / 3 = 8/3
    assert abs(rate_cap_general([3.0, 2.0, 1.0]) - 8.0 / 3.0) <= 1e-12


def test_cap_general_degenerates_to_top_exponent_at_small_width():
    assert rate_cap_general([0.7]) == 0.7
    assert rate_cap_general([1.0, 0.4]) == 1.0
    # equal exponents keep the cap at the top for any width
    assert rate_cap_general([0.5, 0.5, 0.5, 0.5]) == 0.5


def test_cap_width2_closed_form():
    assert rate_cap_width2(1.0, 0.4) == pytest.approx(0.8, abs=1e-15)
    assert rate_cap_width2(1.0, 1.0) == 1.0
    assert rate_cap_width2(3.0, 0.3) < 3.0


gamma_lists = st.lists(
    st.floats(min_value=1e-3, max_value=10.0, allow_nan=False),
    min_size=1,
    max_size=8,
).map(lambda xs: sorted(xs, reverse=True))


@settings(max_examples=200, deadline=None)
@given(gamma_lists)
def test_cap_general_closed_form_equals_bisection(gammas):
    closed = rate_cap_general(gammas)
    root = rate_cap_general_bisect(gammas)
    assert abs(closed - root) <= 1e-12
    assert 0 < closed <= gammas[0] + 1e-15


@settings(max_examples=100, deadline=None)
@given(gamma_lists)
def test_bound_chain_ordering(gammas):
    b = BoundSet.from_gammas(gammas)
    assert b.floor <= b.cap_general + 1e-15
    assert b.cap_general <= b.gamma1 + 1e-15
    assert b.cap == (b.cap_width2 if b.width == 2 else b.cap_general)


def test_uniform_rate_floor_is_bottom_exponent():
    assert uniform_rate_floor([2.0, 1.5, 0.25]) == 0.25
    assert uniform_rate_floor([0.9]) == 0.9


def test_gamma_validation_lists_problems():
    with pytest.raises(ConfigError):
        rate_cap_general([])
    with pytest.raises(ConfigError):
        rate_cap_general([1.0, 2.0])  # increasing
    with pytest.raises(ConfigError):
        rate_cap_general([1.0, -0.5])
    with pytest.raises(ConfigError):
        rate_cap_general([np.inf, 1.0])
    with pytest.raises(ConfigError):
        rate_cap_width2(0.4, 1.0)


def test_boundset_fields_and_dict():
    b = BoundSet.from_gammas([1.0, 0.4])
    assert b.width == 2
    assert b.cap_width2 == pytest.approx(0.8, abs=1e-15)
    assert b.cap == b.cap_width2
    d = b.as_dict()
    assert d["gamma1"] == 1.0 and d["gamma_w"] == 0.4
    assert d["cap_width2"] == b.cap_width2
    b3 = BoundSet.from_gammas([3.0, 2.0, 1.0])
    assert b3.cap_width2 is None
    assert b3.cap == b3.cap_general


def test_classify_rates_binning():
    gammas = [1.0, 0.4]  # floor 0.4, cap 0.8, top 1.0, default delta 0.1
    rates = [0.25, 0.35, 0.5, 0.89, 0.95, 1.2]
    c = classify_rates(gammas, rates)
    assert c.delta == pytest.approx(0.1)
    assert tuple(c.counts) == BIN_NAMES
    assert c.counts["below_floor"] == 1  # 0.25 < 0.3
    assert c.counts["consistent"] == 3  # 0.35, 0.5, 0.89 in [0.3, 0.9]
    assert c.counts["between_cap_and_top"] == 1  # 0.95 in (0.9, 1.1]
    assert c.counts["above_top"] == 1  # 1.2 > 1.1
    assert c.total == 6
    assert c.fractions["consistent"] == pytest.approx(0.5)


def test_classify_rates_empty_and_validation():
    c = classify_rates([1.0, 0.4], [])
    assert c.total == 0
    assert all(np.isnan(v) for v in c.fractions.values())
    with pytest.raises(ConfigError):
        classify_rates([1.0, 0.4], [0.5], delta=-0.1)
