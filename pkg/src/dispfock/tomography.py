"""Maximum-likelihood reconstruction of phonon distributions from Rabi data.

Every (branch, theta) point is an independent binomial draw. The phonon
populations live on the simplex through a softmax of free logits; the
readout fidelity f in (1/2, 1) and a shared pulse-area scale are optional
nuisance parameters.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import minimize, minimize_scalar
from scipy.special import expit, gammaln, logit, softmax, xlogy

from .fock import DiagonalDensity, PhononDistribution, mixed_dns_ppd
from .sideband import BRANCHES, Branch, CouplingConfig, RabiDataset, matrix_element

PROB_FLOOR = 1e-9


class IdentifiabilityWarning(UserWarning):
    """Too little data to separate the Fock-state frequencies."""


class DegenerateFitWarning(UserWarning):
    """Several displacement values fit the distribution almost equally well."""


@dataclass(frozen=True)
class ReconstructionConfig:
    k_max: int = 6
    fit_readout_fidelity: bool = True
    fit_bare_rabi: bool = True
    restarts: int = 4
    tolerance: float = 1e-10
    max_iterations: int = 3000
    seed: int = 0
    readout_fidelity: float = 0.99   # starting value, or the fixed value when not fitted
    rabi_scale: float = 1.0

    def __post_init__(self):
        if self.k_max < 1:
            raise ValueError("k_max must be at least 1")
        if self.tolerance <= 0:
            raise ValueError("tolerance must be positive")
        if self.restarts < 1 or self.max_iterations < 1:
            raise ValueError("restarts and max_iterations must be positive")
        if not 0.5 < self.readout_fidelity <= 1.0:
            raise ValueError("readout_fidelity must lie in (0.5, 1]")


@dataclass
class ReconstructionResult:
    ppd: PhononDistribution
    readout_fidelity: float
    rabi_scale: float
    log_likelihood: float
    converged: bool
    restart_spread: float
    iterations: int = 0
    history: list = field(default_factory=list, repr=False)
    bootstrap_errors: np.ndarray | None = None

    def to_dict(self):
        d = {
            "ppd": self.ppd.probs.tolist(),
            "readout_fidelity": self.readout_fidelity,
            "rabi_scale": self.rabi_scale,
            "log_likelihood": self.log_likelihood,
            "converged": self.converged,
            "restart_spread": self.restart_spread,
            "iterations": self.iterations,
        }
        if self.bootstrap_errors is not None:
            d["bootstrap_errors"] = self.bootstrap_errors.tolist()
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n"


class LikelihoodModel:
    """Binomial log-likelihood of a dataset as a function of the free parameters.

    The parameter vector is [z_0..z_K, (u), (s)] with p = softmax(z),
    f = 1/2 + expit(u)/2 and rabi_scale = exp(s); u and s are present only
    when the corresponding nuisance is fitted.
    """

    def __init__(self, data: RabiDataset, k_max: int, eta: float = 0.21,
                 fit_fidelity: bool = True, fit_scale: bool = True,
                 readout_fidelity: float = 1.0, rabi_scale: float = 1.0,
                 contrast_decay: float = 0.0):
        self.k_max = k_max
        self.fit_fidelity = fit_fidelity
        self.fit_scale = fit_scale
        self.fixed_fidelity = readout_fidelity
        self.fixed_scale = rabi_scale
        theta, shots, ups, freqs = [], [], [], []
        for dn, b in data.branches.items():
            theta.append(b.theta)
            shots.append(b.shots)
            ups.append(b.up_counts)
            freqs.append(np.broadcast_to(matrix_element(np.arange(k_max + 1), dn, eta),
                                         (len(b), k_max + 1)))
        self.theta = np.concatenate(theta)
        self.shots = np.concatenate(shots).astype(float)
        self.ups = np.concatenate(ups).astype(float)
        self.freqs = np.concatenate(freqs)
        self.env = np.exp(-contrast_decay * self.theta)
        self.const = float(np.sum(gammaln(self.shots + 1) - gammaln(self.ups + 1)
                                  - gammaln(self.shots - self.ups + 1)))

    @property
    def size(self):
        return self.k_max + 1 + int(self.fit_fidelity) + int(self.fit_scale)

    def bounds(self):
        """Box for L-BFGS-B: logits within +-40, f up to 1 - 1e-13, scale within a factor 2."""
        b = [(-40.0, 40.0)] * (self.k_max + 1)
        if self.fit_fidelity:
            b.append((-30.0, 30.0))
        if self.fit_scale:
            b.append((-math.log(2.0), math.log(2.0)))
        return b

    def unpack(self, params):
        params = np.asarray(params, dtype=float)
        k1 = self.k_max + 1
        p = softmax(params[:k1])
        i = k1
        if self.fit_fidelity:
            f = 0.5 + 0.5 * expit(params[i])
            i += 1
        else:
            f = self.fixed_fidelity
        scale = math.exp(params[i]) if self.fit_scale else self.fixed_scale
        return p, f, scale

    def pack(self, p, f, scale):
        z = np.log(np.maximum(np.asarray(p, dtype=float), 1e-12))
        parts = [z - z.mean()]
        if self.fit_fidelity:
            g = np.clip(2.0 * f - 1.0, 1e-6, 1 - 1e-6)
            parts.append([logit(g)])
        if self.fit_scale:
            parts.append([math.log(scale)])
        return np.concatenate(parts)

    def probabilities(self, p, f, scale):
        """Observed spin-up probability at every data point."""
        arg = scale * self.theta[:, None] * self.freqs
        basis = 0.5 * (1.0 + self.env[:, None] * np.cos(arg))
        s = basis @ p
        return np.clip((1.0 - f) + (2.0 * f - 1.0) * s, 0.0, 1.0)

    def value(self, p, f, scale):
        P = self.probabilities(p, f, scale)
        return self.const + float(np.sum(xlogy(self.ups, np.maximum(P, PROB_FLOOR))
                                         + xlogy(self.shots - self.ups, np.maximum(1 - P, PROB_FLOOR))))

    def value_and_grad(self, params):
        p, f, scale = self.unpack(params)
        arg = scale * self.theta[:, None] * self.freqs
        cos = np.cos(arg)
        basis = 0.5 * (1.0 + self.env[:, None] * cos)
        s = basis @ p
        P = np.clip((1.0 - f) + (2.0 * f - 1.0) * s, 0.0, 1.0)
        Pu = np.maximum(P, PROB_FLOOR)
        Pd = np.maximum(1.0 - P, PROB_FLOOR)
        ll = self.const + float(np.sum(xlogy(self.ups, Pu) + xlogy(self.shots - self.ups, Pd)))
        dP = np.where(P > PROB_FLOOR, self.ups / Pu, 0.0) - np.where(1 - P > PROB_FLOOR, (self.shots - self.ups) / Pd, 0.0)

        gp = basis.T @ (dP * (2.0 * f - 1.0))
        grad = [p * (gp - p @ gp)]
        if self.fit_fidelity:
            sig = 2.0 * f - 1.0
            grad.append([np.sum(dP * (2.0 * s - 1.0)) * 0.5 * sig * (1.0 - sig)])
        if self.fit_scale:
            ds = -0.5 * (self.env[:, None] * np.sin(arg) * self.theta[:, None] * self.freqs) @ p * scale
            grad.append([np.sum(dP * (2.0 * f - 1.0) * ds)])
        return ll, np.concatenate(grad)


def log_likelihood(data: RabiDataset, ppd: PhononDistribution, readout_fidelity: float = 1.0,
                   rabi_scale: float = 1.0, eta: float | None = None,
                   contrast_decay: float = 0.0) -> float:
    """Binomial log-likelihood of ``data`` under a distribution and nuisance values.

    Model probabilities are floored at 1e-9 away from 0 and 1, so the value
    is finite and never positive.
    """
    eta = data.meta.get("eta", 0.21) if eta is None else eta
    model = LikelihoodModel(data, ppd.k_max, eta, False, False, readout_fidelity, rabi_scale,
                            contrast_decay)
    return model.value(ppd.probs, readout_fidelity, rabi_scale)


def _check_identifiable(data: RabiDataset, min_points=10):
    missing = [dn for dn in BRANCHES if dn not in data.branches]
    short = [dn for dn, b in data.branches.items() if len(b) < min_points]
    if missing or short:
        warnings.warn(f"reconstruction may be unidentifiable: missing branches {missing}, "
                      f"branches with < {min_points} points {short}", IdentifiabilityWarning,
                      stacklevel=3)


def _fit_once(model: LikelihoodModel, x0, config: ReconstructionConfig):
    history = []

    def objective(x):
        ll, g = model.value_and_grad(x)
        return -ll, -g

    def callback(xk):
        history.append(model.value_and_grad(xk)[0])

    history.append(model.value_and_grad(x0)[0])
    res = minimize(objective, x0, jac=True, method="L-BFGS-B", callback=callback,
                   bounds=model.bounds(),
                   options={"maxiter": config.max_iterations, "ftol": config.tolerance,
                            "gtol": 1e-8, "maxcor": 20})
    # a line-search stop at the optimum is fine; a stop far from it is not
    ok = bool(res.success) or (res.nit < config.max_iterations
                               and np.max(np.abs(res.jac)) < 1e-3 * max(1.0, abs(res.fun)))
    # f -> 1/2 flattens every signal, so the gradient vanishes there without a fit
    if model.fit_fidelity and model.unpack(res.x)[1] < 0.5 + 1e-6:
        ok = False
    return res.x, -float(res.fun), ok, int(res.nit), history


def reconstruct(data: RabiDataset, config: ReconstructionConfig = ReconstructionConfig(),
                eta: float | None = None, contrast_decay: float = 0.0) -> ReconstructionResult:
    """Maximum-likelihood phonon distribution with multi-start L-BFGS.

    Restart 0 starts from the uniform distribution; the others from logits
    drawn with per-restart seeds spawned from ``config.seed``.
    """
    _check_identifiable(data)
    eta = data.meta.get("eta", 0.21) if eta is None else eta
    model = LikelihoodModel(data, config.k_max, eta, config.fit_readout_fidelity,
                            config.fit_bare_rabi, config.readout_fidelity, config.rabi_scale,
                            contrast_decay)
    k1 = config.k_max + 1
    base = model.pack(np.full(k1, 1.0 / k1), config.readout_fidelity, config.rabi_scale)
    seeds = np.random.SeedSequence(config.seed).spawn(config.restarts)
    fits = []
    for i, ss in enumerate(seeds):
        x0 = base.copy()
        if i > 0:
            rng = np.random.default_rng(ss)
            x0[:k1] = rng.normal(0.0, 1.5, k1)
            x0[k1:] += rng.normal(0.0, 0.02, x0.size - k1)
        fits.append(_fit_once(model, x0, config))
    lls = np.array([f[1] for f in fits])
    best = int(np.argmax(lls))
    x, ll, ok, nit, history = fits[best]
    good = np.array([f[1] for f in fits if f[2]]) if ok else lls
    p, f, scale = model.unpack(x)
    p = p / p.sum()
    return ReconstructionResult(ppd=PhononDistribution(p), readout_fidelity=float(f),
                                rabi_scale=float(scale), log_likelihood=ll, converged=ok,
                                restart_spread=float(good.max() - good.min()), iterations=nit,
                                history=history)


def fitted_probabilities(data: RabiDataset, result: ReconstructionResult,
                         eta: float | None = None) -> dict[int, np.ndarray]:
    """Model spin-up probabilities per branch at the fitted parameters."""
    eta = data.meta.get("eta", 0.21) if eta is None else eta
    out = {}
    for dn, b in data.branches.items():
        arg = result.rabi_scale * np.outer(b.theta, matrix_element(np.arange(result.ppd.k_max + 1), dn, eta))
        s = 0.5 * (1.0 + np.cos(arg)) @ result.ppd.probs
        f = result.readout_fidelity
        out[dn] = np.clip((1 - f) + (2 * f - 1) * s, 0.0, 1.0)
    return out


@dataclass
class BootstrapResult:
    std: np.ndarray           # per-k standard deviation of the refits
    samples: np.ndarray       # refitted distributions, one row per resample
    failed: int               # refits that did not converge

    def __iter__(self):
        return iter(self.std)


def bootstrap_errors(data: RabiDataset, config: ReconstructionConfig = ReconstructionConfig(),
                     resamples: int = 50, fit: ReconstructionResult | None = None,
                     eta: float | None = None) -> BootstrapResult:
    """Parametric bootstrap: redraw counts from the fitted model and refit.

    Resample i uses the i-th seed spawned from ``config.seed``, so results do
    not depend on execution order.
    """
    if resamples < 50:
        raise ValueError("use at least 50 resamples")
    fit = reconstruct(data, config, eta) if fit is None else fit
    probs = fitted_probabilities(data, fit, eta)
    refit_cfg = replace(config, restarts=max(1, config.restarts // 2))
    rows, failed = [], 0
    for ss in np.random.SeedSequence([config.seed, 0xB007]).spawn(resamples):
        rng = np.random.default_rng(ss)
        branches = {dn: Branch(b.theta, b.shots, rng.binomial(b.shots, probs[dn]))
                    for dn, b in data.branches.items()}
        res = reconstruct(RabiDataset(branches, data.meta), refit_cfg, eta)
        failed += not res.converged
        rows.append(res.ppd.probs)
    samples = np.array(rows)
    return BootstrapResult(samples.std(axis=0, ddof=1), samples, failed)


def extract_alpha(ppd: PhononDistribution, n: int = 0, rho0: DiagonalDensity | None = None,
                  alpha_max: float = 4.0, grid: int = 401, model_k_max: int = 40):
    """Least-squares |alpha| matching ``ppd`` to the displaced preparation.

    The model is the displaced mixture over ``rho0`` (pure |n> when None),
    cut to the support of ``ppd`` and renormalized there. Returns
    (alpha_abs, residual sum of squares).
    """
    if rho0 is None:
        rho0 = DiagonalDensity(PhononDistribution.fock(n, n))
    k = ppd.k_max
    target = ppd.probs

    def residual(a):
        model = mixed_dns_ppd(a, rho0, max(model_k_max, k)).probs[: k + 1]
        return float(np.sum((target - model / model.sum()) ** 2))

    alphas = np.linspace(0.0, alpha_max, grid)
    res = np.array([residual(a) for a in alphas])
    step = alphas[1] - alphas[0]
    # local minima of the scan, refined with a bounded Brent search
    idx = [i for i in range(grid) if (i == 0 or res[i] <= res[i - 1]) and (i == grid - 1 or res[i] <= res[i + 1])]
    refined = []
    for i in idx:
        lo, hi = max(0.0, alphas[i] - step), min(alpha_max, alphas[i] + step)
        r = minimize_scalar(residual, bounds=(lo, hi), method="bounded",
                            options={"xatol": 1e-10})
        a, v = (float(r.x), float(r.fun)) if r.fun <= res[i] else (float(alphas[i]), float(res[i]))
        refined.append((v, a))
    refined.sort()
    best_v, best_a = refined[0]
    if len(refined) > 1 and refined[1][0] - best_v < 1e-3 and abs(refined[1][1] - best_a) > 2 * step:
        warnings.warn(f"near-degenerate displacement fits at |alpha| = {best_a:.4f} and "
                      f"{refined[1][1]:.4f}", DegenerateFitWarning, stacklevel=2)
    return best_a, best_v
