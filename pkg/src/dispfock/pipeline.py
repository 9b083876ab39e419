"""End-to-end synthetic experiment: prepare, kick, measure, reconstruct, fit |alpha|.

For every preparation n and kick voltage the pipeline simulates the kick,
forms the true phonon distribution of the displaced imperfect Fock state,
draws a three-branch Rabi dataset, reconstructs it, and fits |alpha| using the
zero-kick reconstruction as the preparation weights.
"""

from __future__ import annotations

import csv
import io
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import Settings
from .fock import DiagonalDensity, PhononDistribution, mixed_dns_ppd
from .kick import fit_quartic_through_origin, integrate_eom
from .sideband import BRANCHES, RabiDataset, default_theta_grid, synthesize_dataset
from .tomography import ReconstructionConfig, ReconstructionResult, extract_alpha, reconstruct

log = logging.getLogger(__name__)

DEFAULT_VOLTAGES = tuple(round(0.2 * i, 1) for i in range(11))


class StageError(RuntimeError):
    """A pipeline stage failed; ``stage`` names it."""

    def __init__(self, stage, message):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage


class ConvergenceError(StageError):
    pass


@dataclass(frozen=True)
class ExperimentPlan:
    preparation_n: tuple = (1,)
    v_k_list: tuple = DEFAULT_VOLTAGES
    settings: Settings = Settings()
    output_dir: Path | None = None
    fidelities: dict | None = None      # overrides settings.fidelities per n

    def __post_init__(self):
        if isinstance(self.preparation_n, int):
            object.__setattr__(self, "preparation_n", (self.preparation_n,))
        if 0.0 not in [float(v) for v in self.v_k_list]:
            raise ValueError("v_k_list must include 0 V: the zero-kick run fixes the preparation weights")
        if any(n < 0 for n in self.preparation_n):
            raise ValueError("preparation numbers must be nonnegative")

    @property
    def seed(self):
        return self.settings.seed

    def fidelity(self, n):
        if self.fidelities and n in self.fidelities:
            return float(self.fidelities[n])
        return self.settings.fidelity(n)


@dataclass
class PointResult:
    n: int
    v_k: float
    alpha_sim: float
    alpha_sim_integral: float
    truth: PhononDistribution         # on 0..k_max_truth, flagged truncated
    dataset: RabiDataset
    fit: ReconstructionResult
    alpha_fit: float = float("nan")
    alpha_residual: float = float("nan")


@dataclass
class ExperimentReport:
    plan: ExperimentPlan
    points: list[PointResult] = field(default_factory=list)
    quartic: dict = field(default_factory=dict)     # n -> (coeffs, rms)
    files: dict = field(default_factory=dict)       # relative path -> role

    def by_n(self, n):
        return [p for p in self.points if p.n == n]

    def max_alpha_error(self):
        return max(abs(p.alpha_fit - p.alpha_sim) for p in self.points)


def _seed_for(seed, n, index):
    return int(np.random.SeedSequence([seed, n, index]).generate_state(1)[0])


def run_pipeline(plan: ExperimentPlan) -> ExperimentReport:
    s = plan.settings
    trap = s.trap()
    template = s.kick_template()
    coupling = s.coupling()
    grids = {dn: default_theta_grid(dn, s.eta, s.theta_points, s.theta_periods) for dn in BRANCHES}
    voltages = sorted(float(v) for v in plan.v_k_list)
    report = ExperimentReport(plan)

    kicks = {}
    for v in voltages:
        try:
            r = integrate_eom(trap, template.waveform(v), steps_per_period=template.steps_per_period)
        except Exception as exc:  # noqa: BLE001 - re-raised with the stage tag
            raise StageError("kick", f"V_k = {v} V: {exc}") from exc
        kicks[v] = (r.alpha_energy, abs(r.alpha))
        log.info("kick V_k=%.2f V -> |alpha|=%.4f", v, r.alpha_energy)

    for n in plan.preparation_n:
        rho0_true = DiagonalDensity.imperfect_fock(n, plan.fidelity(n))
        rcfg = ReconstructionConfig(k_max=max(s.k_max_fit, n + 1), restarts=s.restarts,
                                    seed=_seed_for(s.seed, n, 10_000))
        rows = []
        for i, v in enumerate(voltages):
            a_sim, a_int = kicks[v]
            truth = mixed_dns_ppd(a_sim, rho0_true, s.k_max_truth)
            data = synthesize_dataset(truth.renormalized(), coupling, grids, s.shots,
                                      _seed_for(s.seed, n, i))
            fit = reconstruct(data, rcfg, eta=s.eta)
            if not fit.converged:
                raise ConvergenceError("reconstruct", f"n={n}, V_k={v} V did not converge")
            rows.append(PointResult(n, v, a_sim, a_int, truth, data, fit))

        rho0_fit = DiagonalDensity(rows[voltages.index(0.0)].fit.ppd)
        for p in rows:
            p.alpha_fit, p.alpha_residual = extract_alpha(p.fit.ppd, n, rho0_fit)
        report.points.extend(rows)
        report.quartic[n] = fit_quartic_through_origin([p.v_k for p in rows],
                                                       [p.alpha_fit for p in rows])

    if plan.output_dir is not None:
        write_report(report, Path(plan.output_dir))
    return report


# output -------------------------------------------------------------------

def _fmt(x):
    return repr(float(x))


def _csv(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def fig2_table(report: ExperimentReport) -> str:
    """Reconstructed distribution per kick voltage (long format)."""
    rows = []
    for p in report.points:
        for k, pk in enumerate(p.fit.ppd.probs):
            true_k = p.truth.probs[k] if k < len(p.truth) else 0.0
            rows.append([p.n, _fmt(p.v_k), k, _fmt(pk), _fmt(true_k)])
    return _csv(["n", "v_k", "k", "p_reconstructed", "p_true"], rows)


def fig3_table(report: ExperimentReport) -> str:
    """Fitted and simulated |alpha| against kick voltage, with the quartic fit."""
    rows = []
    for p in report.points:
        coef, _ = report.quartic[p.n]
        quart = sum(c * p.v_k ** (j + 1) for j, c in enumerate(coef))
        rows.append([p.n, _fmt(p.v_k), _fmt(p.alpha_fit), _fmt(quart), _fmt(p.alpha_sim),
                     _fmt(p.alpha_sim_integral), _fmt(p.alpha_residual)])
    return _csv(["n", "v_k", "alpha_fit", "alpha_fit_quartic", "alpha_sim",
                 "alpha_sim_integral", "fit_residual"], rows)


def fig4_table(report: ExperimentReport) -> str:
    """Reconstructed distribution against fitted |alpha| with the theory overlay.

    ``p_theory`` is the displaced mixture at the fitted |alpha| using the
    zero-kick reconstruction as preparation weights; ``truth_tail_mass`` is
    the true population above the reconstruction cutoff.
    """
    rows = []
    for n in report.plan.preparation_n:
        pts = report.by_n(n)
        zero = next(p for p in pts if p.v_k == 0.0)
        rho0 = DiagonalDensity(zero.fit.ppd)
        for p in sorted(pts, key=lambda q: q.alpha_fit):
            kf = p.fit.ppd.k_max
            theory = mixed_dns_ppd(p.alpha_fit, rho0, max(kf, report.plan.settings.k_max_truth))
            tail = float(p.truth.probs[kf + 1:].sum() + p.truth.tail_mass)
            for k in range(kf + 1):
                rows.append([n, _fmt(p.alpha_fit), k, _fmt(p.fit.ppd.probs[k]),
                             _fmt(theory.probs[k]), _fmt(tail)])
    return _csv(["n", "alpha_fit", "k", "p_reconstructed", "p_theory", "truth_tail_mass"], rows)


def write_report(report: ExperimentReport, out: Path, plots: bool = True) -> dict:
    out.mkdir(parents=True, exist_ok=True)
    (out / "raw").mkdir(exist_ok=True)
    files = {}

    def emit(name, text, role):
        (out / name).write_text(text)
        files[name] = role

    emit("fig2_ppd_vs_vk.csv", fig2_table(report), "fig2")
    emit("fig3_alpha_vs_vk.csv", fig3_table(report), "fig3")
    quart = {str(n): {"coefficients": c.tolist(), "rms_residual": rms}
             for n, (c, rms) in report.quartic.items()}
    emit("fig3_quartic_fit.json", json.dumps(quart, indent=1, sort_keys=True) + "\n", "fig3")
    emit("fig4_ppd_vs_alpha.csv", fig4_table(report), "fig4")
    for p in report.points:
        stem = f"raw/n{p.n}_v{p.v_k:.2f}"
        emit(f"{stem}_dataset.csv", p.dataset.to_csv(), "raw")
        emit(f"{stem}_fit.json", p.fit.to_json(), "raw")
    if plots:
        from .plotting import render_report
        for name, role in render_report(report, out).items():
            files[name] = role
    manifest = {"seed": report.plan.seed, "settings": report.plan.settings.to_dict(),
                "preparation_n": list(report.plan.preparation_n),
                "files": [{"path": k, "role": v} for k, v in sorted(files.items())]}
    (out / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")
    report.files = files
    return files
