import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dispfock.fock import count_ppd_zeros
from dispfock.semiclassics import (ClassicallyForbidden, PhaseSpaceBand, enclosed_area_phase,
                                   exact_minima, intersecting_range, minima_table, phase_offset,
                                   predict_minima)


def test_calibration_pins_the_single_quantum_zero():
    (a,) = predict_minima(1, 1)
    assert a == pytest.approx(1.0, abs=1e-10)
    assert phase_offset() == pytest.approx(-0.80884, abs=1e-5)


@pytest.mark.parametrize("n,k", [(1, 1), (2, 2), (1, 2), (2, 3)])
def test_minima_close_to_exact_zeros(n, k):
    rows = minima_table([(n, k)])
    assert len(rows) == len(exact_minima(n, k)) == min(n, k)
    for _, _, a_sc, a_ex, rel in rows:
        assert rel < 0.15
        assert rel == pytest.approx(abs(a_sc - a_ex) / a_ex)


def test_frozen_two_quantum_minima():
    np.testing.assert_allclose(predict_minima(2, 2), [0.759885, 1.859520], atol=1e-5)
    np.testing.assert_allclose(exact_minima(2, 2),
                               [math.sqrt(2 - math.sqrt(2)), math.sqrt(2 + math.sqrt(2))], atol=1e-12)


@pytest.mark.parametrize("k", range(6))
def test_coherent_state_has_no_minima(k):
    assert predict_minima(0, k) == []
    assert count_ppd_zeros(0, k) == 0


@pytest.mark.parametrize("n", range(4))
def test_minima_count_bounded_by_n(n):
    assert len(predict_minima(n, n)) <= n


@pytest.mark.parametrize("offset", [0, 1, 2])
def test_error_shrinks_with_quantum_number(offset):
    # n = 1 is the calibration point, so the trend is checked from n = 2 upward
    start = 2 if offset == 0 else 1
    errs = [np.mean([r[4] for r in minima_table([(n, n + offset)])]) for n in range(start, 7)]
    assert np.all(np.diff(errs) < 0)


def test_area_vanishes_for_coincident_orbits():
    assert enclosed_area_phase(2, 2, 1e-7) < 1e-5
    assert enclosed_area_phase(0, 0, 1e-9) < 1e-7


@pytest.mark.parametrize("n,k", [(0, 2), (1, 3), (3, 1), (2, 0), (1, 2)])
def test_area_increases_across_intersecting_range(n, k):
    lo, hi = intersecting_range(n, k)
    a = np.linspace(lo, hi, 502)[1:-1]
    b = enclosed_area_phase(n, k, a)
    assert np.all(b >= 0)
    assert np.all(np.diff(b) > 0)


@given(st.integers(0, 6), st.integers(0, 6), st.floats(1e-6, 1 - 1e-6))
@settings(max_examples=60, deadline=None)
def test_area_nonnegative_and_bounded(n, k, frac):
    lo, hi = intersecting_range(n, k)
    b = enclosed_area_phase(n, k, lo + frac * (hi - lo))
    assert 0.0 <= b <= math.pi * (2 * n + 1) + 1e-12


def test_forbidden_regime():
    lo, hi = intersecting_range(0, 3)
    with pytest.raises(ClassicallyForbidden):
        enclosed_area_phase(0, 3, 0.5 * lo)
    with pytest.raises(ClassicallyForbidden):
        enclosed_area_phase(0, 3, hi + 0.1)
    assert predict_minima(2, 2, alpha_range=(5.0, 6.0)) == []


def test_range_restriction():
    assert len(predict_minima(2, 2, alpha_range=(0.0, 1.2))) == 1


def test_band_geometry():
    band = PhaseSpaceBand(2, 1.5, "prepared")
    assert band.center_energy_quanta == 2.5
    assert band.radius == pytest.approx(math.sqrt(5))
    assert band.center == pytest.approx(1.5 * math.sqrt(2))
    with pytest.raises(ValueError):
        PhaseSpaceBand(1, kind="other")
