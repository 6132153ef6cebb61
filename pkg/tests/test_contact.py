import numpy as np
import pytest
from hypothesis import given, strategies as st

from bearnet.contact import (contact_constant, contact_deflection,
                             contact_force)

LAW = contact_constant(12.0)


def test_palmgren_deflection_at_ten_kn():
    # oracle: 3.84e-5 * 10000**0.9 / 12**0.8, evaluated independently
    assert contact_deflection(LAW, 10000.0) == pytest.approx(
        0.020940460478119597, rel=1e-12)


def test_force_at_known_deflections():
    # oracle: (delta * 12**0.8 / 3.84e-5)**(1/0.9)
    assert contact_force(LAW, 0.01) == pytest.approx(4398.946053922825, rel=1e-12)
    assert contact_force(LAW, 0.020940460478119597) == pytest.approx(
        10000.0, rel=1e-10)


def test_zero_and_negative_deflection_carry_no_load():
    assert contact_force(LAW, 0.0) == 0.0
    assert contact_force(LAW, -0.01) == 0.0
    assert contact_deflection(LAW, 0.0) == 0.0


def test_round_trip_across_decades():
    for q in (1e2, 1e3, 1e4, 1e5):
        back = contact_force(LAW, contact_deflection(LAW, q))
        assert abs(back - q) / q < 1e-10


def test_pure_power_law_doubling_ratio():
    for delta in (1e-4, 1e-3, 1e-2, 5e-2):
        ratio = contact_force(LAW, 2 * delta) / contact_force(LAW, delta)
        assert ratio == pytest.approx(2.0 ** (10.0 / 9.0), abs=1e-12)


@given(d1=st.floats(1e-6, 0.2), d2=st.floats(1e-6, 0.2))
def test_monotonicity(d1, d2):
    lo, hi = sorted((d1, d2))
    q_lo, q_hi = contact_force(LAW, lo), contact_force(LAW, hi)
    assert q_lo <= q_hi
    if hi > lo:
        assert q_hi > q_lo


def test_vectorized_matches_scalar():
    deltas = np.array([-0.01, 0.0, 0.01, 0.02])
    forces = contact_force(LAW, deltas)
    assert forces.shape == (4,)
    for d, q in zip(deltas, forces):
        assert q == contact_force(LAW, float(d))


def test_rejects_bad_roller_length():
    with pytest.raises(ValueError):
        contact_constant(0.0)
    with pytest.raises(ValueError):
        contact_constant(-3.0)
