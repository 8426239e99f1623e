
import pytest
from hypothesis import given, strategies as st

from satqnet import channel
from satqnet.netmodel import Gsl, Satellite


def test_fiber_loss_hand_values():
    assert channel.fiber_loss(channel.FiberParams(0.2, 0.0)) == 0.0
    assert channel.fiber_loss(channel.FiberParams(0.2, 50.0)) == pytest.approx(0.9, abs=1e-12)
    assert channel.fiber_loss(channel.FiberParams(0.2, 15.0)) == pytest.approx(1 - 10 ** -0.3, abs=1e-12)
    assert channel.fiber_loss(channel.FiberParams(0.2, 15.0)) == pytest.approx(0.498813, abs=1e-6)


def test_link_success_hand_values():
    assert channel.link_success(channel.GenerationParams(1.0, 1), 0.0) == 1.0
    assert channel.link_success(channel.GenerationParams(0.5, 2), 0.5) == pytest.approx(0.4375, abs=1e-12)


@given(p_gen=st.floats(0.01, 1.0), q_chan=st.floats(0.0, 0.99), n=st.integers(1, 20))
def test_link_success_increases_with_attempts(p_gen, q_chan, n):
    a = channel.link_success(channel.GenerationParams(p_gen, n), q_chan)
    b = channel.link_success(channel.GenerationParams(p_gen, n + 1), q_chan)
    assert b >= a
    if a < 1.0 - 1e-12:
        assert b > a


@given(length=st.floats(0, 2000), gamma=st.floats(0.01, 1.0))
def test_fiber_loss_is_probability_and_monotone(length, gamma):
    loss = channel.fiber_loss(channel.FiberParams(gamma, length))
    assert 0.0 <= loss <= 1.0
    assert channel.fiber_loss(channel.FiberParams(gamma, length + 1.0)) >= loss


def test_fiber_success_matches_composition():
    gen = channel.GenerationParams(0.8, 3)
    expected = 1 - (1 - 0.8 * 10 ** (-100 * 0.2 / 10)) ** 3
    assert channel.fiber_success(100.0, 0.2, gen) == pytest.approx(expected, rel=1e-12)


def test_lightpath_success_product():
    sats = [Satellite(i, 0, i, 4, 0.97) for i in range(3)]
    up, down = Gsl("A", 0, 0.2), Gsl("B", 2, 0.5)
    q = channel.lightpath_success(up, sats, down)
    assert q == pytest.approx(0.1 * 0.97 ** 3, rel=1e-12)
    assert q == pytest.approx(0.0912673, abs=1e-7)
    assert channel.lightpath_success(1.0, [1.0, 1.0], 1.0) == 1.0
    assert channel.lightpath_success(up, sats + [Satellite(9, 0, 9, 4, 0.95)], down) == pytest.approx(q * 0.95)


@pytest.mark.parametrize("bad", [
    lambda: channel.GenerationParams(1.5, 1),
    lambda: channel.GenerationParams(0.5, 0),
    lambda: channel.FiberParams(0.2, -1.0),
    lambda: channel.link_success(channel.GenerationParams(), 1.5),
    lambda: channel.lightpath_success(0.1, [], 0.5),
])
def test_invalid_parameters_raise(bad):
    with pytest.raises(ValueError):
        bad()


def test_long_fiber_underflows_gracefully():
    q = channel.fiber_success(20000.0, 0.2, channel.GenerationParams())
    assert 0.0 <= q < 1e-300
