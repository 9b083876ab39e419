"""Rabi-oscillation measurement model on the carrier and first sidebands.

The spin-up probability after an analysis pulse of area theta is an
incoherent sum of Rabi oscillations, one per Fock state, each at a frequency
scaled by the Lamb-Dicke coupling of that state.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import eval_genlaguerre, gammaln

from .fock import PhononDistribution

BRANCHES = (-1, 0, 1)
DEFAULT_SHOTS = 200


@dataclass(frozen=True)
class CouplingConfig:
    """Lamb-Dicke factor, readout fidelity and bare Rabi frequency.

    ``contrast_decay`` multiplies every cosine by exp(-contrast_decay * theta);
    it is zero by default so the plain incoherent-sum model applies.
    """

    eta: float = 0.21
    readout_fidelity: float = 1.0
    bare_rabi: float = 1.0
    contrast_decay: float = 0.0

    def __post_init__(self):
        if not 0.0 < self.eta < 1.0:
            raise ValueError("eta must lie in (0, 1)")
        if not 0.5 < self.readout_fidelity <= 1.0:
            raise ValueError("readout_fidelity must lie in (0.5, 1]")
        if self.bare_rabi <= 0:
            raise ValueError("bare_rabi must be positive")
        if self.contrast_decay < 0:
            raise ValueError("contrast_decay must be nonnegative")


def _check_branch(delta_n):
    if delta_n not in BRANCHES:
        raise ValueError(f"delta_n must be one of {BRANCHES}, got {delta_n!r}")


def matrix_element(k, delta_n: int, eta: float):
    """Relative Rabi frequency M_{k, delta_n} of the transition k -> k + delta_n.

    e^{-eta^2/2} eta^{|dn|} sqrt(n_<!/n_>!) L_{n_<}^{|dn|}(eta^2); zero for a
    red-sideband drive out of k = 0. ``k`` may be an integer array.
    """
    _check_branch(delta_n)
    k = np.asarray(k)
    if np.any(k < 0):
        raise ValueError("k must be nonnegative")
    target = k + delta_n
    lo = np.minimum(k, target)
    hi = np.maximum(k, target)
    valid = lo >= 0
    lo_c = np.where(valid, lo, 0)
    hi_c = np.where(valid, hi, 0)
    dn = abs(delta_n)
    x = eta * eta
    ratio = np.exp(0.5 * (gammaln(lo_c + 1.0) - gammaln(hi_c + 1.0)))
    m = np.exp(-0.5 * x) * eta**dn * ratio * eval_genlaguerre(lo_c, dn, x)
    m = np.where(valid, m, 0.0)
    return float(m) if m.ndim == 0 else m


def _branch_frequencies(k_max, delta_n, eta):
    return matrix_element(np.arange(k_max + 1), delta_n, eta)


def apply_readout(p_up, fidelity):
    """Map true spin-up probability to the observed one for a symmetric readout error."""
    return fidelity * p_up + (1.0 - fidelity) * (1.0 - p_up)


def oscillation_basis(k_max, delta_n, theta, config: CouplingConfig, rabi_scale=1.0):
    """Matrix C[i, k] = (1 + cos(M_k s theta_i) e^{-g theta_i}) / 2 so that P = C @ p."""
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    freqs = _branch_frequencies(k_max, delta_n, config.eta)
    arg = np.outer(rabi_scale * theta, freqs)
    env = np.exp(-config.contrast_decay * theta)[:, None]
    return 0.5 * (1.0 + env * np.cos(arg))


def rabi_signal(ppd: PhononDistribution, delta_n: int, theta, config: CouplingConfig,
                rabi_scale: float = 1.0):
    """Observed spin-up probability after a pulse of area ``theta`` on branch ``delta_n``.

    ``theta`` may be a scalar or an array; the return value matches.
    """
    _check_branch(delta_n)
    if abs(ppd.probs.sum() - 1.0) > 1e-6:
        raise ValueError("rabi_signal needs a normalized phonon distribution")
    theta_arr = np.asarray(theta, dtype=float)
    if np.any(theta_arr < 0):
        raise ValueError("theta must be nonnegative")
    basis = oscillation_basis(ppd.k_max, delta_n, theta_arr.ravel(), config, rabi_scale)
    p = np.clip(basis @ ppd.probs, 0.0, 1.0)
    p = apply_readout(p, config.readout_fidelity)
    return float(p[0]) if theta_arr.ndim == 0 else p.reshape(theta_arr.shape)


@dataclass
class Branch:
    theta: np.ndarray
    shots: np.ndarray
    up_counts: np.ndarray

    def __post_init__(self):
        self.theta = np.asarray(self.theta, dtype=float)
        self.shots = np.asarray(self.shots, dtype=np.int64)
        self.up_counts = np.asarray(self.up_counts, dtype=np.int64)
        if not (self.theta.shape == self.shots.shape == self.up_counts.shape) or self.theta.ndim != 1:
            raise ValueError("theta, shots and up_counts must be equal-length vectors")
        if np.any(np.diff(self.theta) <= 0):
            raise ValueError("theta grid must be strictly increasing")
        if np.any(self.shots <= 0):
            raise ValueError("shots must be positive")
        if np.any(self.up_counts < 0) or np.any(self.up_counts > self.shots):
            raise ValueError("up_counts must lie in [0, shots]")

    def __len__(self):
        return self.theta.size

    def __eq__(self, other):
        return (isinstance(other, Branch)
                and np.array_equal(self.theta, other.theta)
                and np.array_equal(self.shots, other.shots)
                and np.array_equal(self.up_counts, other.up_counts))


@dataclass
class RabiDataset:
    """Shot counts per detuning branch (-1 red, 0 carrier, +1 blue)."""

    branches: dict[int, Branch]
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        for dn in self.branches:
            _check_branch(dn)
        self.branches = {dn: self.branches[dn] for dn in sorted(self.branches)}

    def __eq__(self, other):
        return isinstance(other, RabiDataset) and self.branches == other.branches

    @property
    def n_points(self):
        return sum(len(b) for b in self.branches.values())

    # serialization ---------------------------------------------------------
    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["branch", "theta_rad", "shots", "up_counts"])
        for dn, b in self.branches.items():
            for th, n, u in zip(b.theta, b.shots, b.up_counts):
                w.writerow([dn, repr(float(th)), int(n), int(u)])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, meta=None) -> "RabiDataset":
        rows = list(csv.DictReader(io.StringIO(text)))
        if rows and set(rows[0]) != {"branch", "theta_rad", "shots", "up_counts"}:
            raise ValueError(f"unexpected dataset columns {sorted(rows[0])}")
        grouped: dict[int, list] = {}
        for r in rows:
            grouped.setdefault(int(r["branch"]), []).append(
                (float(r["theta_rad"]), int(r["shots"]), int(r["up_counts"])))
        branches = {dn: Branch(*map(np.array, zip(*pts))) for dn, pts in grouped.items()}
        return cls(branches, dict(meta or {}))

    def to_json(self) -> str:
        doc = {
            "meta": self.meta,
            "branches": {
                str(dn): {"theta_rad": b.theta.tolist(), "shots": b.shots.tolist(),
                          "up_counts": b.up_counts.tolist()}
                for dn, b in self.branches.items()
            },
        }
        return json.dumps(doc, indent=1, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "RabiDataset":
        doc = json.loads(text)
        branches = {int(dn): Branch(b["theta_rad"], b["shots"], b["up_counts"])
                    for dn, b in doc["branches"].items()}
        return cls(branches, doc.get("meta", {}))

    def save(self, path):
        path = Path(path)
        path.write_text(self.to_json() if path.suffix == ".json" else self.to_csv())

    @classmethod
    def load(cls, path):
        path = Path(path)
        text = path.read_text()
        return cls.from_json(text) if path.suffix == ".json" else cls.from_csv(text)


def default_theta_grid(delta_n: int, eta: float = 0.21, points: int = 40, periods: float = 2.0):
    """Pulse-area grid covering ``periods`` oscillations of the slowest k=0 line of a branch.

    Carrier: 2 periods of M_{0,0}. Sidebands: 2 periods of M_{0,+1}, which is
    also the red-sideband frequency out of k = 1. Both exceed two carrier periods.
    """
    _check_branch(delta_n)
    freq = abs(matrix_element(0, 0 if delta_n == 0 else 1, eta))
    span = periods * 2.0 * np.pi / freq
    return np.linspace(span / points, span, points)


def synthesize_dataset(ppd: PhononDistribution, config: CouplingConfig, theta_grid,
                       shots: int = DEFAULT_SHOTS, seed: int = 0,
                       branches=BRANCHES, noiseless: bool = False) -> RabiDataset:
    """Draw binomial spin-up counts from the forward model.

    ``theta_grid`` is either one vector shared by all branches or a mapping
    branch -> vector. With ``noiseless`` the counts are round(shots * P).
    """
    if shots <= 0:
        raise ValueError("shots must be positive")
    rng = np.random.default_rng(seed)
    out = {}
    for dn in branches:
        grid = theta_grid[dn] if isinstance(theta_grid, dict) else theta_grid
        grid = np.asarray(grid, dtype=float)
        if grid.size == 0:
            raise ValueError("theta grid must be nonempty")
        p = rabi_signal(ppd, dn, grid, config)
        counts = np.rint(shots * p) if noiseless else rng.binomial(shots, p)
        out[dn] = Branch(grid, np.full(grid.size, shots), counts.astype(np.int64))
    meta = {"eta": config.eta, "readout_fidelity": config.readout_fidelity,
            "shots": int(shots), "seed": int(seed)}
    return RabiDataset(out, meta)
