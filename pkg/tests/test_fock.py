import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dispfock.fock import (DiagonalDensity, DnsParams, PhononDistribution, convolve_preparation,
                           count_ppd_zeros, displacement_operator_oracle, dns_ppd, inner_polynomial,
                           mixed_dns_ppd, ppd_zero_locations)


def oracle_ppd(n, alpha, k_max, dim=80):
    D = displacement_operator_oracle(alpha, dim, check_columns=range(n + 1))
    return np.abs(D[: k_max + 1, n]) ** 2


# dns_ppd ------------------------------------------------------------------

@pytest.mark.parametrize("alpha", [0.0, 0.3, 1.0, 2.2, 3.0])
def test_coherent_state_is_poisson(alpha):
    k = np.arange(31)
    x = alpha**2
    poisson = np.exp(-x + k * np.log(x) - [math.lgamma(j + 1) for j in k]) if x > 0 else (k == 0) * 1.0
    np.testing.assert_allclose(dns_ppd(DnsParams(0, alpha), 30).probs, poisson, atol=1e-14)


def test_one_quantum_at_unit_displacement():
    p = dns_ppd(DnsParams(1, 1.0), 6).probs
    assert p[1] == 0.0
    assert p[0] == pytest.approx(math.exp(-1.0), abs=1e-15)
    # frozen reference, cross-checked against the operator exponential below
    np.testing.assert_allclose(p, [0.36787944117144233, 0.0, 0.18393972058572114,
                                   0.2452529607809615, 0.1379547904392909,
                                   0.04905059215619227, 0.012773591707341754], rtol=1e-13)
    np.testing.assert_allclose(p, oracle_ppd(1, 1.0, 6), atol=1e-13)


@pytest.mark.parametrize("n", [0, 1, 2, 3])
def test_matches_operator_exponential(n):
    for alpha in np.linspace(0.0, 3.0, 13):
        np.testing.assert_allclose(dns_ppd(DnsParams(n, alpha), 20).probs,
                                   oracle_ppd(n, alpha, 20), atol=1e-12)


def test_rows_below_preparation_number():
    # k < n needs the reciprocal factorials of negative integers to vanish
    p = dns_ppd(DnsParams(5, 0.7), 3).probs
    np.testing.assert_allclose(p, oracle_ppd(5, 0.7, 3), atol=1e-13)


def test_zero_displacement_is_fock_state():
    p = dns_ppd(DnsParams(3, 0.0), 8).probs
    np.testing.assert_array_equal(p, np.eye(9)[3])


def test_normalization_tail_with_40_levels():
    for n in range(4):
        for alpha in (0.5, 1.5, 3.0):
            ppd = dns_ppd(DnsParams(n, alpha), 40)
            assert ppd.truncated
            assert ppd.tail_mass < 1e-8


def test_large_cutoff_does_not_overflow():
    p = dns_ppd(DnsParams(4, 5.0), 150).probs
    assert np.all(np.isfinite(p))
    assert p.sum() == pytest.approx(1.0, abs=1e-10)
    # factorials up to 200! stay finite in the log domain
    p = dns_ppd(DnsParams(10, 6.0), 200).probs
    assert np.all(np.isfinite(p)) and p.sum() == pytest.approx(1.0, abs=1e-6)


@given(st.integers(0, 4), st.floats(0.0, 3.0), st.floats(0.0, 2 * math.pi))
@settings(max_examples=40, deadline=None)
def test_depends_only_on_modulus(n, r, phi):
    base = dns_ppd(DnsParams(n, r), 25).probs
    for a in (r * np.exp(1j * phi), -r, 1j * r):
        np.testing.assert_allclose(dns_ppd(DnsParams(n, a), 25).probs, base, atol=1e-14)


@pytest.mark.parametrize("bad", [dict(n=-1, alpha=1.0), dict(n=1, alpha=float("nan")),
                                 dict(n=1.5, alpha=1.0), dict(n=0, alpha=complex("inf"))])
def test_params_rejected(bad):
    with pytest.raises(ValueError):
        DnsParams(**bad)


# distributions ------------------------------------------------------------

def test_distribution_validation():
    with pytest.raises(ValueError):
        PhononDistribution([0.5, 0.4])
    with pytest.raises(ValueError):
        PhononDistribution([1.2, -0.2])
    PhononDistribution([0.5, 0.4], truncated=True)
    p = PhononDistribution([0.25, 0.75])
    assert p.k_max == 1 and p.tail_mass == 0.0
    assert p.padded(3).probs.tolist() == [0.25, 0.75, 0.0, 0.0]
    assert p.padded(0).truncated
    assert p.total_variation(PhononDistribution.fock(1, 4)) == pytest.approx(0.25)


# oracle -------------------------------------------------------------------

def test_oracle_identity_and_inverse():
    np.testing.assert_allclose(displacement_operator_oracle(0.0, 10), np.eye(10), atol=1e-15)
    a = 0.8 - 0.4j
    prod = displacement_operator_oracle(a, 60) @ displacement_operator_oracle(-a, 60)
    np.testing.assert_allclose(prod[:30, :30], np.eye(30), atol=1e-10)


def test_oracle_guards():
    with pytest.raises(ValueError):
        displacement_operator_oracle(1.0, 1)
    with pytest.warns(RuntimeWarning):
        displacement_operator_oracle(3.0, 12)


# preparation convolution ---------------------------------------------------

def test_pure_preparation_reproduces_pure_distribution():
    rho0 = DiagonalDensity(PhononDistribution.fock(2, 2))
    np.testing.assert_array_equal(mixed_dns_ppd(1.3, rho0, 20).probs,
                                  dns_ppd(DnsParams(2, 1.3), 20).probs)


def test_zero_kick_returns_preparation_weights():
    rho0 = DiagonalDensity.imperfect_fock(0, 0.92)
    np.testing.assert_allclose(mixed_dns_ppd(0.0, rho0, 5).probs, [0.92, 0.08, 0, 0, 0, 0])


def test_imperfect_preparation_fills_the_zero():
    rho0 = DiagonalDensity.imperfect_fock(1, 0.77)
    p = mixed_dns_ppd(1.0, rho0, 10).probs
    assert p[1] > dns_ppd(DnsParams(1, 1.0), 10).probs[1] == 0.0
    assert p[1] == pytest.approx(0.23 * math.exp(-1.0), rel=1e-12)


def test_convolution_rejects_bad_inputs():
    rho0 = DiagonalDensity.from_weights([0.5, 0.5])
    with pytest.raises(ValueError):
        convolve_preparation({0: dns_ppd(DnsParams(0, 1.0), 5)}, rho0)
    with pytest.raises(ValueError):
        convolve_preparation({0: dns_ppd(DnsParams(0, 1.0), 5),
                              1: dns_ppd(DnsParams(1, 1.0), 6)}, rho0)


@given(st.lists(st.floats(0.0, 1.0), min_size=4, max_size=4),
       st.lists(st.floats(0.0, 1.0), min_size=4, max_size=4),
       st.floats(0.0, 1.0), st.floats(0.0, 3.0))
@settings(max_examples=40, deadline=None)
def test_convolution_is_linear_in_preparation(w1, w2, lam, alpha):
    w1, w2 = np.array(w1) + 1e-3, np.array(w2) + 1e-3
    r1 = DiagonalDensity.from_weights(w1 / w1.sum())
    r2 = DiagonalDensity.from_weights(w2 / w2.sum())
    mix = DiagonalDensity.from_weights(lam * r1.diag.probs + (1 - lam) * r2.diag.probs)
    pure = {m: dns_ppd(DnsParams(m, alpha), 20) for m in range(4)}
    lhs = convolve_preparation(pure, mix).probs
    rhs = lam * convolve_preparation(pure, r1).probs + (1 - lam) * convolve_preparation(pure, r2).probs
    np.testing.assert_allclose(lhs, rhs, atol=1e-14)


def test_imperfect_fock_layout():
    assert DiagonalDensity.imperfect_fock(2, 0.72).diag.probs.tolist() == pytest.approx([0, 0.28, 0.72])
    assert DiagonalDensity.imperfect_fock(0, 0.92).diag.probs.tolist() == pytest.approx([0.92, 0.08])
    with pytest.raises(ValueError):
        DiagonalDensity.imperfect_fock(1, 1.1)


# zeros --------------------------------------------------------------------

def test_zero_locations():
    assert count_ppd_zeros(0, 0) == 0
    np.testing.assert_allclose(ppd_zero_locations(1, 1), [1.0], atol=1e-14)
    np.testing.assert_allclose(ppd_zero_locations(2, 2), [2 - math.sqrt(2), 2 + math.sqrt(2)],
                               atol=1e-13)


def test_zero_count_equals_preparation_number():
    for n in range(5):
        for k in range(n, n + 8):
            assert count_ppd_zeros(n, k) == n


def test_zero_count_below_preparation_number():
    # for k < n the roles swap and at most k zeros remain
    assert count_ppd_zeros(3, 1) == 1
    assert count_ppd_zeros(4, 0) == 0


@pytest.mark.parametrize("n,k", [(1, 1), (2, 2), (2, 5), (3, 4), (4, 4)])
def test_zeros_are_zeros_of_the_distribution(n, k):
    for x in ppd_zero_locations(n, k):
        assert dns_ppd(DnsParams(n, math.sqrt(x)), k).probs[k] < 1e-20


def test_inner_polynomial_is_laguerre():
    from scipy.special import eval_genlaguerre
    xs = np.linspace(0, 6, 7)
    np.testing.assert_allclose(inner_polynomial(2, 5)(xs), eval_genlaguerre(2, 3, xs), rtol=1e-12)
