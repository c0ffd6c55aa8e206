import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from src.core.errors import DomainError
from src.core.term_structure import (
    IDENTITY_RTOL,
    equivalence_identity_residual,
    forward_rate_from_log_prices,
    forward_rate_from_prices,
    forward_rate_from_yields,
    price_from_yield,
    yield_from_log_price,
    yield_from_price,
)

prices = st.floats(min_value=1e-8, max_value=1e8)
gaps = st.floats(min_value=0.01, max_value=100.0)


def test_yield_from_price_examples():
    assert yield_from_price(1.0, 0, 5) == 0.0
    assert yield_from_price(math.exp(1 - 2), 0, 2) == pytest.approx(0.5, rel=1e-12)
    assert yield_from_price(math.exp(-0.1), 0, 2) == pytest.approx(0.05, rel=1e-12)


def test_yield_rejects_bad_inputs():
    with pytest.raises(DomainError):
        yield_from_price(0.0, 0, 1)
    with pytest.raises(DomainError):
        yield_from_price(-1.0, 0, 1)
    with pytest.raises(DomainError):
        yield_from_price(1.0, 2, 2)
    with pytest.raises(DomainError):
        price_from_yield(0.1, 3, 1)


def test_price_from_yield_examples():
    assert price_from_yield(0.0, 0, 5) == 1.0
    assert price_from_yield(0.5, 0, 2) == pytest.approx(math.exp(-1), rel=1e-12)
    for p in (0.01, 1.0, 37.0):
        assert price_from_yield(yield_from_price(p, 0, 3), 0, 3) == pytest.approx(p, rel=1e-12)


def test_log_price_primitive_survives_huge_prices():
    # P_1^100 = exp(100^2 - 1) overflows, its yield does not
    assert yield_from_log_price(100.0 ** 2 - 1.0, 1, 100) == pytest.approx(-101.0, rel=1e-12)


def test_functions_broadcast_over_scenarios():
    out = yield_from_price(np.array([1.0, math.exp(-1.0)]), 0, 1)
    assert isinstance(out, np.ndarray)
    np.testing.assert_allclose(out, [0.0, 1.0])


def test_forward_rate_examples():
    r = 0.03
    flat = lambda t, T: math.exp(-r * (T - t))
    assert forward_rate_from_prices(flat(0, 1), flat(0, 3), 0, 1, 3) == pytest.approx(0.03, rel=1e-12)

    exploding_up = lambda t, T: t * t - T * T
    f = forward_rate_from_log_prices(exploding_up(0, 1), exploding_up(0, 3), 0, 1, 3)
    assert f == pytest.approx(4.0, rel=1e-12)

    assert forward_rate_from_prices(1.0, 1.0, 0, 2, 7) == 0.0


def test_forward_rate_from_yields_examples():
    assert forward_rate_from_yields(0.04, 0.04, 0, 1, 3) == pytest.approx(0.04, rel=1e-12)
    t, t_prime, T = 1.0, 2.0, 5.0
    assert forward_rate_from_yields(T + t, t_prime + t, t, t_prime, T) == pytest.approx(7.0, rel=1e-12)


@pytest.mark.parametrize("t, t_prime, T", [(0, 0, 1), (0, 1, 1), (1, 0.5, 2), (2, 3, 1)])
def test_forward_rate_ordering_violations(t, t_prime, T):
    with pytest.raises(DomainError):
        forward_rate_from_prices(0.9, 0.8, t, t_prime, T)
    with pytest.raises(DomainError):
        forward_rate_from_yields(0.1, 0.1, t, t_prime, T)


@settings(max_examples=200, deadline=None)
@given(price=prices, t=st.floats(min_value=0, max_value=900), gap=gaps)
def test_round_trip(price, t, gap):
    T = t + gap
    assert price_from_yield(yield_from_price(price, t, T), t, T) == pytest.approx(price, rel=1e-12)


@settings(max_examples=200, deadline=None)
@given(p_short=st.floats(1e-4, 1e4), p_long=st.floats(1e-4, 1e4),
       t=st.floats(0, 100), gap1=gaps, gap2=gaps)
def test_forward_expressions_agree(p_short, p_long, t, gap1, gap2):
    t_prime, T = t + gap1, t + gap1 + gap2
    from_prices = forward_rate_from_prices(p_short, p_long, t, t_prime, T)
    from_yields = forward_rate_from_yields(yield_from_price(p_long, t, T),
                                           yield_from_price(p_short, t, t_prime), t, t_prime, T)
    scale = max(1.0, (abs(math.log(p_short)) + abs(math.log(p_long))) / (T - t_prime))
    assert abs(from_prices - from_yields) <= IDENTITY_RTOL * scale


@settings(max_examples=200, deadline=None)
@given(p_short=st.floats(1e-4, 1e4), p_long=st.floats(1e-4, 1e4),
       t=st.floats(0, 100), gap1=gaps, gap2=gaps)
def test_equivalence_identity_and_telescoping(p_short, p_long, t, gap1, gap2):
    t_prime, T = t + gap1, t + gap1 + gap2
    log_short, log_long = math.log(p_short), math.log(p_long)
    assert equivalence_identity_residual(log_short, log_long, t, t_prime, T) <= IDENTITY_RTOL

    r_long = yield_from_log_price(log_long, t, T)
    r_short = yield_from_log_price(log_short, t, t_prime)
    forward = forward_rate_from_log_prices(log_short, log_long, t, t_prime, T)
    lhs = math.exp(-(T - t) * r_long)
    rhs = math.exp(-(t_prime - t) * r_short) * math.exp(-(T - t_prime) * forward)
    assert math.isclose(lhs, rhs, rel_tol=IDENTITY_RTOL)


def test_identity_residual_vectorised():
    log_short = np.array([-0.1, 3.0, 50.0])
    log_long = np.array([-0.5, 9.0, 2500.0])
    residual = equivalence_identity_residual(log_short, log_long, 0.0, 1.0, 50.0)
    assert residual.shape == (3,)
    assert np.all(residual <= IDENTITY_RTOL)
