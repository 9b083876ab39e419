import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dispfock.fock import DiagonalDensity, DnsParams, PhononDistribution, dns_ppd, mixed_dns_ppd
from dispfock.sideband import (BRANCHES, Branch, CouplingConfig, RabiDataset, default_theta_grid,
                               synthesize_dataset)
from dispfock.tomography import (DegenerateFitWarning, IdentifiabilityWarning, LikelihoodModel,
                                 ReconstructionConfig, bootstrap_errors, extract_alpha,
                                 fitted_probabilities, log_likelihood, reconstruct)

GRIDS = {dn: default_theta_grid(dn) for dn in BRANCHES}


def truth(n, alpha, k_max=6):
    return dns_ppd(DnsParams(n, alpha), 40).renormalized(k_max)


def synth(ppd, seed=0, shots=200, f=1.0, noiseless=False, grids=GRIDS):
    return synthesize_dataset(ppd, CouplingConfig(readout_fidelity=f), grids, shots, seed,
                              noiseless=noiseless)


# likelihood -------------------------------------------------------------------

def test_likelihood_never_positive():
    data = synth(truth(1, 1.0), seed=3)
    for ppd in (truth(1, 1.0), truth(0, 0.0), PhononDistribution(np.full(7, 1 / 7))):
        assert log_likelihood(data, ppd) <= 0.0


def test_certain_point_contributes_zero():
    ppd = PhononDistribution.fock(0, 6)
    data = RabiDataset({-1: Branch([1.0, 2.0], [200, 200], [200, 200])}, {"eta": 0.21})
    assert log_likelihood(data, ppd) == 0.0


def test_likelihood_matches_binomial_pmf():
    from scipy.stats import binom
    ppd = truth(1, 0.8)
    data = synth(ppd, seed=9, f=0.97)
    model = LikelihoodModel(data, 6, 0.21, False, False, 0.97, 1.0)
    P = model.probabilities(ppd.probs, 0.97, 1.0)
    ref = binom.logpmf(model.ups, model.shots, P).sum()
    assert log_likelihood(data, ppd, 0.97) == pytest.approx(ref, rel=1e-12)


@pytest.mark.parametrize("seed", range(10))
def test_gradient_matches_finite_differences(seed):
    rng = np.random.default_rng(seed)
    data = synth(truth(1, 1.2), seed=seed, f=0.95)
    model = LikelihoodModel(data, 6, 0.21, True, True)
    x = np.concatenate([rng.normal(0, 1, 7), [rng.normal(2, 1)], [rng.normal(0, 0.1)]])
    _, g = model.value_and_grad(x)
    h = 1e-6
    fd = np.array([(model.value_and_grad(x + h * e)[0] - model.value_and_grad(x - h * e)[0]) / (2 * h)
                   for e in np.eye(x.size)])
    assert np.max(np.abs(g - fd)) / max(np.max(np.abs(g)), 1.0) < 1e-5


def test_truth_is_stationary_with_huge_shots():
    # integer counts round shots * P by up to half a shot per point, which keeps the raw
    # gradient of order one; the per-shot (mean log-likelihood) gradient is the scale-free check
    ppd = truth(1, 1.0)
    shots = 10**9
    data = synth(ppd, shots=shots, f=0.95, noiseless=True)
    model = LikelihoodModel(data, 6, 0.21, True, True)
    _, g = model.value_and_grad(model.pack(ppd.probs, 0.95, 1.0))
    assert np.linalg.norm(g) / shots < 1e-4
    noisy = synth(ppd, shots=200, f=0.95, seed=1)
    _, g200 = LikelihoodModel(noisy, 6, 0.21, True, True).value_and_grad(model.pack(ppd.probs, 0.95, 1.0))
    assert np.linalg.norm(g200) / 200 > 100 * np.linalg.norm(g) / shots


@given(st.lists(st.floats(-20, 20), min_size=7, max_size=7))
@settings(max_examples=50, deadline=None)
def test_parameterization_stays_on_simplex(z):
    data = synth(truth(0, 0.5), seed=1)
    model = LikelihoodModel(data, 6)
    p, f, scale = model.unpack(np.concatenate([z, [0.0, 0.0]]))
    assert np.all(p >= 0) and p.sum() == pytest.approx(1.0, abs=1e-12)
    assert 0.5 < f <= 1.0 and scale == 1.0


# reconstruction ---------------------------------------------------------------

def test_round_trip_single_quantum():
    ppd = truth(1, 1.0)
    tv = [reconstruct(synth(ppd, seed=s)).ppd.total_variation(ppd) for s in range(20)]
    assert np.median(tv) <= 0.05


def test_noiseless_ground_state():
    res = reconstruct(synth(PhononDistribution.fock(0, 6), noiseless=True))
    assert res.converged and res.ppd.probs[0] >= 0.99


@pytest.mark.parametrize("n,fidelity", [(0, 0.92), (1, 0.77), (2, 0.72)])
def test_preparation_fidelity_recovered(n, fidelity):
    ppd = DiagonalDensity.imperfect_fock(n, fidelity).diag.padded(6)
    res = reconstruct(synth(ppd.renormalized(), seed=n + 1))
    assert res.ppd.probs[n] == pytest.approx(fidelity, abs=0.05)


def test_readout_fidelity_and_scale_fitted():
    ppd = truth(0, 1.0)
    data = synth(ppd, seed=4, shots=2000, f=0.9)
    res = reconstruct(data)
    assert res.readout_fidelity == pytest.approx(0.9, abs=0.02)
    assert res.rabi_scale == pytest.approx(1.0, abs=0.01)
    fixed = reconstruct(data, ReconstructionConfig(fit_readout_fidelity=False, fit_bare_rabi=False,
                                                   readout_fidelity=0.9))
    assert fixed.readout_fidelity == 0.9 and fixed.rabi_scale == 1.0
    assert fixed.ppd.total_variation(ppd) < 0.05


def test_result_invariants_and_json():
    res = reconstruct(synth(truth(2, 0.8), seed=2))
    assert res.converged
    assert res.ppd.probs.sum() == pytest.approx(1.0, abs=1e-9)
    assert res.log_likelihood <= 0
    assert res.restart_spread >= 0
    doc = json.loads(res.to_json())
    assert set(doc) >= {"ppd", "readout_fidelity", "rabi_scale", "log_likelihood", "converged",
                        "restart_spread"}
    assert len(doc["ppd"]) == 7


def test_ascent_history_is_nondecreasing():
    res = reconstruct(synth(truth(1, 1.3), seed=6))
    h = np.array(res.history)
    assert h.size > 2
    assert np.all(np.diff(h) >= -1e-9 * np.abs(h[:-1]))


def test_point_order_does_not_matter():
    data = synth(truth(1, 0.9), seed=8)
    ppd = truth(1, 0.9)
    model_a = LikelihoodModel(data, 6)
    model_b = LikelihoodModel(data, 6)
    perm = np.random.default_rng(1).permutation(model_a.theta.size)
    for attr in ("theta", "shots", "ups", "freqs", "env"):
        setattr(model_b, attr, getattr(model_a, attr)[perm])
    x = model_a.pack(ppd.probs, 0.98, 1.01)
    va, ga = model_a.value_and_grad(x)
    vb, gb = model_b.value_and_grad(x)
    assert va == pytest.approx(vb, rel=1e-12)
    np.testing.assert_allclose(ga, gb, rtol=1e-9, atol=1e-9)
    # branch insertion order is irrelevant too
    flipped = RabiDataset({dn: data.branches[dn] for dn in reversed(BRANCHES)}, data.meta)
    assert reconstruct(flipped).to_json() == reconstruct(data).to_json()


def test_carrier_only_data_warns():
    data = synth(truth(1, 1.0), seed=1)
    carrier = RabiDataset({0: data.branches[0]}, data.meta)
    with pytest.warns(IdentifiabilityWarning):
        reconstruct(carrier)
    short = RabiDataset({dn: Branch(b.theta[:5], b.shots[:5], b.up_counts[:5])
                         for dn, b in data.branches.items()}, data.meta)
    with pytest.warns(IdentifiabilityWarning):
        reconstruct(short)


def test_reconstruction_is_deterministic():
    data = synth(truth(1, 1.0), seed=5)
    a = reconstruct(data, ReconstructionConfig(seed=3)).to_json()
    b = reconstruct(data, ReconstructionConfig(seed=3)).to_json()
    assert a == b


def test_config_validation():
    with pytest.raises(ValueError):
        ReconstructionConfig(k_max=0)
    with pytest.raises(ValueError):
        ReconstructionConfig(tolerance=0.0)
    with pytest.raises(ValueError):
        ReconstructionConfig(restarts=0)


def test_fitted_probabilities_follow_the_data():
    data = synth(truth(1, 1.0), seed=5, shots=5000)
    res = reconstruct(data)
    for dn, P in fitted_probabilities(data, res).items():
        b = data.branches[dn]
        assert np.max(np.abs(P - b.up_counts / b.shots)) < 0.05


# bootstrap --------------------------------------------------------------------

@pytest.mark.slow
def test_bootstrap_scales_with_shots():
    ppd = truth(1, 1.0)
    cfg = ReconstructionConfig(restarts=2)
    e200 = bootstrap_errors(synth(ppd, seed=1, shots=200), cfg, 50)
    e800 = bootstrap_errors(synth(ppd, seed=1, shots=800), cfg, 50)
    assert np.all(e200.std >= 0) and np.all(e800.std >= 0)
    ratio = np.mean(e200.std[:5]) / np.mean(e800.std[:5])
    assert ratio == pytest.approx(2.0, rel=0.3)
    assert e200.samples.shape == (50, 7)


def test_bootstrap_vanishes_without_noise():
    ppd = PhononDistribution.fock(0, 6)
    data = synth(ppd, shots=10**9, noiseless=True)
    cfg = ReconstructionConfig(restarts=1, fit_readout_fidelity=False, fit_bare_rabi=False)
    res = bootstrap_errors(data, cfg, 50)
    assert np.all(res.std >= 0) and np.max(res.std) < 1e-3


def test_bootstrap_needs_enough_resamples():
    with pytest.raises(ValueError):
        bootstrap_errors(synth(truth(0, 0.0)), ReconstructionConfig(), 10)


# displacement extraction ------------------------------------------------------

@pytest.mark.parametrize("n", [0, 1, 2])
def test_extract_alpha_self_fit(n):
    rho0 = DiagonalDensity.imperfect_fock(n, 0.8)
    ppd = mixed_dns_ppd(1.5, rho0, 40).renormalized(6)
    a, resid = extract_alpha(ppd, n, rho0)
    assert a == pytest.approx(1.5, abs=1e-3)
    assert resid < 1e-12


def test_extract_alpha_zero_kick():
    rho0 = DiagonalDensity.imperfect_fock(1, 0.77)
    a, resid = extract_alpha(rho0.diag.padded(6), 1, rho0)
    assert a == pytest.approx(0.0, abs=1e-6) and resid < 1e-12


def test_extract_alpha_without_preparation_model():
    a, _ = extract_alpha(dns_ppd(DnsParams(2, 0.9), 40).renormalized(6), 2)
    assert a == pytest.approx(0.9, abs=1e-4)


def test_extract_alpha_degenerate_warning():
    # a flat distribution has no informative minimum; every |alpha| fits about as badly
    flat = PhononDistribution(np.full(2, 0.5))
    with pytest.warns(DegenerateFitWarning):
        extract_alpha(flat, 1, alpha_max=8.0)
