"""
Figures for the pipeline report, written next to the CSV tables.
"""

from __future__ import annotations

import math

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .fock import DiagonalDensity, mixed_dns_ppd  # noqa: E402

COLORS = {0: "black", 1: "tab:blue", 2: "tab:red"}
# no software/date stamps, so reruns give byte-identical files
PNG_META = {"Software": None}


def get_publication_quality_plot(width=8, height=None, ncols=1):
    golden_ratio = (math.sqrt(5) - 1.0) / 2.0
    if not height:
        height = width * golden_ratio
    fig, axes = plt.subplots(1, ncols, figsize=(width, height), facecolor="w", squeeze=False)
    for ax in axes.ravel():
        ax.tick_params(labelsize=width * 1.5)
    return fig, axes.ravel()


def _save(fig, path):
    fig.savefig(path, dpi=100, metadata=PNG_META)
    plt.close(fig)


def plot_ppd_vs_vk(report, path):
    ns = list(report.plan.preparation_n)
    fig, axes = get_publication_quality_plot(4 * len(ns) + 1, 4, ncols=len(ns))
    for ax, n in zip(axes, ns):
        pts = report.by_n(n)
        v = np.array([p.v_k for p in pts])
        grid = np.array([p.fit.ppd.probs for p in pts])
        mesh = ax.pcolormesh(np.arange(grid.shape[1] + 1) - 0.5, _edges(v), grid,
                             cmap="viridis", vmin=0.0, vmax=1.0, shading="flat")
        ax.set_xlabel("phonon number k")
        ax.set_ylabel("kick voltage $V_k$ (V)")
        ax.set_title(f"n = {n}")
    fig.colorbar(mesh, ax=list(axes), label="$p_k$")
    _save(fig, path)


def _edges(v):
    if v.size == 1:
        return np.array([v[0] - 0.1, v[0] + 0.1])
    mid = 0.5 * (v[1:] + v[:-1])
    return np.concatenate([[2 * v[0] - mid[0]], mid, [2 * v[-1] - mid[-1]]])


def plot_alpha_vs_vk(report, path):
    fig, (ax,) = get_publication_quality_plot(7, 5)
    vfine = np.linspace(0.0, max(p.v_k for p in report.points) or 1.0, 200)
    for n in report.plan.preparation_n:
        pts = report.by_n(n)
        c = COLORS.get(n, None)
        ax.plot([p.v_k for p in pts], [p.alpha_fit for p in pts], "o", color=c, label=f"n = {n}")
        coef, _ = report.quartic[n]
        ax.plot(vfine, sum(cj * vfine ** (j + 1) for j, cj in enumerate(coef)), "-", color=c)
    first = report.by_n(report.plan.preparation_n[0])
    ax.plot([p.v_k for p in first], [p.alpha_sim for p in first], "s", color="tab:green",
            mfc="none", label="simulation")
    ax.set_xlabel("kick voltage $V_k$ (V)")
    ax.set_ylabel(r"$|\alpha|$")
    ax.legend(frameon=False)
    fig.tight_layout()
    _save(fig, path)


def plot_ppd_vs_alpha(report, path):
    ns = list(report.plan.preparation_n)
    fig, axes = get_publication_quality_plot(4 * len(ns) + 1, 4, ncols=len(ns))
    for ax, n in zip(axes, ns):
        pts = sorted(report.by_n(n), key=lambda p: p.alpha_fit)
        rho0 = DiagonalDensity(next(p for p in pts if p.v_k == 0.0).fit.ppd)
        kf = pts[0].fit.ppd.k_max
        a = np.array([p.alpha_fit for p in pts])
        afine = np.linspace(0.0, max(a.max(), 0.1), 120)
        theory = np.array([mixed_dns_ppd(x, rho0, 40).probs[: kf + 1] for x in afine])
        cmap = plt.get_cmap("tab10")
        for k in range(min(kf + 1, 5)):
            ax.plot(a, [p.fit.ppd.probs[k] for p in pts], "o", color=cmap(k), ms=4, label=f"k = {k}")
            ax.plot(afine, theory[:, k], "-", color=cmap(k), lw=1)
        ax.set_xlabel(r"$|\alpha|$")
        ax.set_ylabel("$p_k$")
        ax.set_title(f"n = {n}")
    axes[0].legend(frameon=False, fontsize=8)
    fig.tight_layout()
    _save(fig, path)


def render_report(report, out):
    """Write the three report figures into ``out``; returns {filename: role}."""
    files = {"fig2_ppd_vs_vk.png": "fig2", "fig3_alpha_vs_vk.png": "fig3",
             "fig4_ppd_vs_alpha.png": "fig4"}
    plot_ppd_vs_vk(report, out / "fig2_ppd_vs_vk.png")
    plot_alpha_vs_vk(report, out / "fig3_alpha_vs_vk.png")
    plot_ppd_vs_alpha(report, out / "fig4_ppd_vs_alpha.png")
    return files
