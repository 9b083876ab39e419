"""Coherent displacement of the ion by a fast voltage kick on a neighbouring segment.

Units are SI throughout (meters, seconds, volts, kg). Displacements are
reported in harmonic-oscillator units, |alpha|^2 = E / (hbar omega).
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np
from scipy import constants
from scipy.optimize import brentq

CA40_MASS_AMU = 39.962590863
E_CHARGE = constants.e
HBAR = constants.hbar
AMU = constants.atomic_mass


class CalibrationError(RuntimeError):
    """No Gaussian-well parameters satisfy the trap anchors."""


class WellLostError(RuntimeError):
    """The kicked potential no longer has a bracketed local minimum."""


class UnsettledError(RuntimeError):
    """The waveform is still moving at the evaluation time."""


@dataclass(frozen=True)
class GaussianSegment:
    """Normalized potential of one electrode: depth * exp(-(x - center)^2 / 2 width^2) per volt."""

    center: float
    depth: float
    width: float

    def value(self, x):
        u = (x - self.center) / self.width
        return self.depth * np.exp(-0.5 * u * u)

    def slope(self, x):
        u = (x - self.center) / self.width
        return -self.depth * u / self.width * np.exp(-0.5 * u * u)

    def curvature(self, x):
        u = (x - self.center) / self.width
        return self.depth * (u * u - 1.0) / self.width**2 * np.exp(-0.5 * u * u)


@dataclass(frozen=True)
class TrapModel:
    """Axial trap: a holding segment A at x = 0 and a kick segment B at ``segment_offset``.

    ``holding_voltage`` is U_A; with positive normalized potentials it is
    negative so that a positive ion sits in a well at segment A.
    """

    mass: float
    omega_ax: float
    segments: tuple[GaussianSegment, GaussianSegment]
    segment_offset: float
    holding_voltage: float
    charge: float = E_CHARGE

    def __post_init__(self):
        if self.mass <= 0 or self.omega_ax <= 0:
            raise ValueError("mass and omega_ax must be positive")

    @property
    def length_scale(self) -> float:
        """sqrt(m omega / 2 hbar): converts a position shift in meters to alpha."""
        return math.sqrt(self.mass * self.omega_ax / (2.0 * HBAR))

    @property
    def period(self) -> float:
        return 2.0 * math.pi / self.omega_ax

    def potential_energy(self, x, u_b=0.0, u_a=None):
        u_a = self.holding_voltage if u_a is None else u_a
        seg_a, seg_b = self.segments
        return self.charge * (u_a * seg_a.value(x) + u_b * seg_b.value(x))

    def force(self, x, u_b=0.0, u_a=None):
        u_a = self.holding_voltage if u_a is None else u_a
        seg_a, seg_b = self.segments
        return -self.charge * (u_a * seg_a.slope(x) + u_b * seg_b.slope(x))

    def stiffness(self, x, u_b=0.0, u_a=None):
        u_a = self.holding_voltage if u_a is None else u_a
        seg_a, seg_b = self.segments
        return self.charge * (u_a * seg_a.curvature(x) + u_b * seg_b.curvature(x))

    def kick_field(self, x=0.0, u_b=1.0) -> float:
        """Axial electric field (V/m) from segment B alone at ``x``."""
        return float(-u_b * self.segments[1].slope(x))

    def secular_frequency(self, x=0.0, u_b=0.0, u_a=None) -> float:
        k = self.stiffness(x, u_b, u_a)
        return math.sqrt(k / self.mass) if k > 0 else float("nan")

    def minimum(self, u_b=0.0, u_a=None, guess=0.0) -> float:
        return _find_minimum(self, u_b, u_a, guess)


def gaussian_segment_model(depth_scale: float, width: float, centers, *,
                           omega_ax: float, holding_voltage: float,
                           mass: float = CA40_MASS_AMU * AMU, charge: float = E_CHARGE) -> TrapModel:
    """Two identical Gaussian segments at ``centers`` = (x_A, x_B)."""
    if width <= 0:
        raise ValueError("width must be positive")
    if len(centers) != 2:
        raise ValueError("need exactly two segment centers (holding, kick)")
    c_a, c_b = (float(c) for c in centers)
    segs = (GaussianSegment(c_a, depth_scale, width), GaussianSegment(c_b, depth_scale, width))
    return TrapModel(mass=mass, omega_ax=omega_ax, segments=segs,
                     segment_offset=c_b - c_a, holding_voltage=holding_voltage, charge=charge)


def calibrate_trap(omega_ax: float = 2 * math.pi * 1.35e6, field_per_volt: float = 600.0,
                   segment_offset: float = 280e-6, holding_voltage: float = -5.0,
                   mass: float = CA40_MASS_AMU * AMU, charge: float = E_CHARGE,
                   rtol: float = 0.01) -> TrapModel:
    """Gaussian-well trap matching a secular frequency and a kick field per volt.

    With U_A fixed, the well curvature fixes depth / width^2 and the field
    of segment B at distance d fixes width through
    d * (depth / width^2) * exp(-d^2 / 2 width^2) = field_per_volt.
    """
    if holding_voltage >= 0:
        raise CalibrationError("holding voltage must be negative to trap a positive ion")
    kappa = mass * omega_ax**2 / (charge * abs(holding_voltage))  # depth / width^2
    ratio = segment_offset * kappa / field_per_volt
    if ratio <= 1.0:
        raise CalibrationError(
            f"|U_A| = {abs(holding_voltage)} V is too deep: no width gives "
            f"{field_per_volt} V/m at {segment_offset * 1e6:.0f} um")
    width = segment_offset / math.sqrt(2.0 * math.log(ratio))
    depth = kappa * width**2
    trap = gaussian_segment_model(depth, width, (0.0, segment_offset), omega_ax=omega_ax,
                                  holding_voltage=holding_voltage, mass=mass, charge=charge)
    got_w = trap.secular_frequency(0.0)
    got_e = abs(trap.kick_field(0.0, 1.0))
    if abs(got_w / omega_ax - 1) > rtol or abs(got_e / field_per_volt - 1) > rtol:
        raise CalibrationError(f"calibration missed anchors: omega {got_w:.6g}, field {got_e:.6g}")
    return trap


# waveforms -----------------------------------------------------------------

@dataclass(frozen=True)
class VoltageWaveform:
    """Uniformly sampled series starting at ``t0``; also used for x_0(t) in meters."""

    dt: float
    samples: np.ndarray
    t0: float = 0.0

    def __post_init__(self):
        s = np.array(self.samples, dtype=float)
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if s.ndim != 1 or s.size == 0 or not np.all(np.isfinite(s)):
            raise ValueError("samples must be a nonempty finite vector")
        s.setflags(write=False)
        object.__setattr__(self, "samples", s)

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.samples.size)

    @property
    def t_end(self) -> float:
        return self.t0 + self.dt * (self.samples.size - 1)

    def __len__(self):
        return self.samples.size

    def at(self, t):
        """Linear interpolation; held constant outside the sampled span."""
        return np.interp(t, self.times, self.samples)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t_s", "volts"])
        for t, v in zip(self.times, self.samples):
            w.writerow([repr(float(t)), repr(float(v))])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, rtol: float = 1e-6) -> "VoltageWaveform":
        rows = list(csv.DictReader(io.StringIO(text)))
        if not rows or set(rows[0]) != {"t_s", "volts"}:
            raise ValueError("waveform CSV needs header t_s,volts and at least one row")
        t = np.array([float(r["t_s"]) for r in rows])
        v = np.array([float(r["volts"]) for r in rows])
        if t.size < 2:
            raise ValueError("waveform needs at least two samples")
        steps = np.diff(t)
        dt = (t[-1] - t[0]) / (t.size - 1)
        if np.any(np.abs(steps - dt) > rtol * dt):
            raise ValueError("waveform samples are not uniformly spaced")
        return cls(dt, v, t[0])

    def save(self, path):
        Path(path).write_text(self.to_csv())

    @classmethod
    def load(cls, path):
        return cls.from_csv(Path(path).read_text())


def square_kick(amplitude: float, duration: float = 400e-9, dt: float = 5e-9,
                t_total: float = 20e-6, t_on: float = 100e-9) -> VoltageWaveform:
    """Ideal rectangular kick: ``amplitude`` volts on [t_on, t_on + duration)."""
    n = int(round(t_total / dt)) + 1
    t = dt * np.arange(n)
    on = (t >= t_on - 1e-3 * dt) & (t < t_on + duration - 1e-3 * dt)
    return VoltageWaveform(dt, np.where(on, float(amplitude), 0.0), 0.0)


def filter_waveform(ideal: VoltageWaveform, cutoff_hz: float, order: int = 2,
                    min_oversampling: float = 20.0) -> VoltageWaveform:
    """Causal low-pass made of ``order`` cascaded first-order stages at ``cutoff_hz``.

    Each stage is discretized exactly for piecewise-linear input. The state
    starts in equilibrium with the first sample, so DC passes unchanged.
    """
    if cutoff_hz <= 0:
        raise ValueError("cutoff_hz must be positive")
    if order < 1:
        raise ValueError("filter order must be at least 1")
    if 1.0 / ideal.dt < min_oversampling * cutoff_hz:
        raise ValueError(f"sample rate {1 / ideal.dt:.3g} Hz is below {min_oversampling:g}x "
                         f"the {cutoff_hz:.3g} Hz cutoff")
    h = ideal.dt * 2.0 * math.pi * cutoff_hz
    p = math.exp(-h)
    b0 = 1.0 - (1.0 - p) / h
    b1 = (1.0 - p) / h - p
    c = 1.0 - b0
    y = ideal.samples.copy()
    for _ in range(order):
        x = y
        y = np.empty_like(x)
        y[0] = x[0]
        # y_i = p y_{i-1} + b0 x_i + b1 x_{i-1}, arranged so a constant passes bit-exactly
        for i in range(1, x.size):
            y[i] = x[i] + p * (y[i - 1] - x[i - 1]) - c * (x[i] - x[i - 1])
    return VoltageWaveform(ideal.dt, y, ideal.t0)


def step_response(t, cutoff_hz: float, order: int = 2):
    """Analytic unit-step response of ``order`` cascaded one-pole stages."""
    s = 2.0 * math.pi * cutoff_hz * np.asarray(t, dtype=float)
    s = np.maximum(s, 0.0)
    acc = np.zeros_like(s)
    term = np.ones_like(s)
    for j in range(order):
        acc += term
        term = term * s / (j + 1)
    return 1.0 - np.exp(-s) * acc


# minimum tracking and the displacement integral ---------------------------

def _find_minimum(trap: TrapModel, u_b, u_a, guess, span=None):
    def f(x):
        return trap.force(x, u_b, u_a)

    width = trap.segments[0].width
    step = span or 1e-3 * width
    for _ in range(40):
        lo, hi = guess - step, guess + step
        flo, fhi = f(lo), f(hi)
        # restoring force: positive on the left, negative on the right
        if flo > 0 > fhi:
            return brentq(f, lo, hi, xtol=1e-18, rtol=4 * np.finfo(float).eps, maxiter=200)
        step *= 2.0
        if step > 2.0 * width:
            break
    raise WellLostError(f"no potential minimum bracketed near x = {guess:.3e} m (U_B = {u_b:.4g} V)")


def track_minimum(trap: TrapModel, u_b: VoltageWaveform, u_a: float | None = None) -> VoltageWaveform:
    """Position x_0(t) of the axial potential minimum, relative to the unkicked well."""
    base = _find_minimum(trap, 0.0, u_a, 0.0)
    xs = np.empty(len(u_b))
    guess = base
    for i, v in enumerate(u_b.samples):
        guess = _find_minimum(trap, float(v), u_a, guess)
        xs[i] = guess
    return VoltageWaveform(u_b.dt, xs - base, u_b.t0)


def displace_alpha_integral(x0: VoltageWaveform, trap: TrapModel, t_end: float | None = None,
                            settle_tol: float = 1e-6) -> complex:
    """alpha(t_end) = -sqrt(m w / 2 hbar) e^{-i w t} int_0^t dx_0/dtau e^{i w tau} dtau.

    Time is measured from the start of the series. The derivative uses central
    differences with second-order one-sided ends, the integral the trapezoid rule.
    """
    t = x0.times - x0.t0
    stop = t[-1] if t_end is None else float(t_end) - x0.t0
    n = int(np.searchsorted(t, stop + 1e-9 * x0.dt, side="right"))
    if n < 2:
        raise ValueError("t_end leaves fewer than two samples")
    t = t[:n]
    xdot = np.gradient(x0.samples[:n], x0.dt, edge_order=2) if n > 2 else np.diff(x0.samples[:n]) / x0.dt * np.ones(2)
    w = trap.omega_ax
    scale = trap.length_scale
    if abs(xdot[-1]) * scale / w > settle_tol:
        raise UnsettledError(f"x_0 still moving at t_end (|dx0/dt| = {abs(xdot[-1]):.3e} m/s)")
    integral = np.trapezoid(xdot * np.exp(1j * w * t), t)
    return complex(-scale * np.exp(-1j * w * t[-1]) * integral)


# equation of motion -------------------------------------------------------

@dataclass
class KickResult:
    alpha: complex                   # from the displacement integral on x_0(t)
    final_energy_quanta: float       # E_f / (hbar omega) about the final minimum
    trajectory: tuple[np.ndarray, np.ndarray, np.ndarray] = field(repr=False)
    steps_per_period: int = 64
    energy_drift: float = 0.0

    @property
    def alpha_energy(self) -> float:
        return math.sqrt(max(self.final_energy_quanta, 0.0))

    @property
    def alpha_abs(self) -> float:
        return abs(self.alpha)


def _rk4(trap: TrapModel, u_a: float, ub_at, x, v, t0, h, steps, record=False):
    m = trap.mass
    q = trap.charge
    (ca, da, wa), (cb, db, wb) = ((s.center, s.depth, s.width) for s in trap.segments)

    def acc(x, ub):
        ua_ = (x - ca) / wa
        ub_ = (x - cb) / wb
        # force = -q (U_A dV_A/dx + U_B dV_B/dx)
        return q * (u_a * da * ua_ / wa * math.exp(-0.5 * ua_ * ua_)
                    + ub * db * ub_ / wb * math.exp(-0.5 * ub_ * ub_)) / m

    if record:
        xs = np.empty(steps + 1)
        vs = np.empty(steps + 1)
        xs[0], vs[0] = x, v
    t = t0
    for i in range(steps):
        u0 = ub_at(t)
        um = ub_at(t + 0.5 * h)
        u1 = ub_at(t + h)
        k1x, k1v = v, acc(x, u0)
        k2x, k2v = v + 0.5 * h * k1v, acc(x + 0.5 * h * k1x, um)
        k3x, k3v = v + 0.5 * h * k2v, acc(x + 0.5 * h * k2x, um)
        k4x, k4v = v + h * k3v, acc(x + h * k3x, u1)
        x += h / 6.0 * (k1x + 2 * k2x + 2 * k3x + k4x)
        v += h / 6.0 * (k1v + 2 * k2v + 2 * k3v + k4v)
        t += h
        if record:
            xs[i + 1], vs[i + 1] = x, v
    if record:
        return xs, vs
    return x, v


def oscillation_energy(trap: TrapModel, x, v, u_b=0.0, u_a=None, x_min=None) -> float:
    """Kinetic plus potential energy relative to the bottom of the well, in joules."""
    if x_min is None:
        x_min = _find_minimum(trap, u_b, u_a, x)
    dU = trap.potential_energy(x, u_b, u_a) - trap.potential_energy(x_min, u_b, u_a)
    return float(0.5 * trap.mass * v * v + dU)


@lru_cache(maxsize=64)
def energy_drift(trap: TrapModel, u_a: float, steps_per_period: int, periods: int = 100,
                 amplitude: float = 100e-9) -> float:
    """Relative energy change of a free oscillation in the static well after ``periods``."""
    x_min = _find_minimum(trap, 0.0, u_a, 0.0)
    x = x_min + amplitude
    e0 = oscillation_energy(trap, x, 0.0, 0.0, u_a, x_min)
    h = trap.period / steps_per_period
    x1, v1 = _rk4(trap, u_a, lambda t: 0.0, x, 0.0, 0.0, h, periods * steps_per_period)
    e1 = oscillation_energy(trap, x1, v1, 0.0, u_a, x_min)
    return abs(e1 - e0) / e0


def integrate_eom(trap: TrapModel, u_b: VoltageWaveform, u_a: float | None = None,
                  t_span: float | None = None, steps_per_period: int = 64,
                  drift_tol: float = 1e-6, max_halvings: int = 4) -> KickResult:
    """Integrate m x'' = -e U_A V_A'(x) - e U_B(t) V_B'(x) from rest at the initial minimum.

    The step is halved until the static-well energy drift over 100 periods is
    below ``drift_tol``. U_B is linearly interpolated between samples and held
    at its last value past the end of the waveform.
    """
    if steps_per_period < 64:
        raise ValueError("steps_per_period must be at least 64")
    u_a = trap.holding_voltage if u_a is None else float(u_a)
    steps = int(steps_per_period)
    for _ in range(max_halvings + 1):
        drift = energy_drift(trap, u_a, steps)
        if drift < drift_tol:
            break
        steps *= 2
    else:
        raise RuntimeError(f"energy drift {drift:.2e} above {drift_tol:.0e} even at {steps // 2} steps/period")

    t_span = u_b.t_end - u_b.t0 if t_span is None else float(t_span)
    h = trap.period / steps
    n_steps = max(1, int(math.ceil(t_span / h)))
    h = t_span / n_steps
    samples = u_b.samples
    dt, t0, last = u_b.dt, u_b.t0, samples.size - 1

    def ub_at(t):
        s = (t - t0) / dt
        i = int(s)
        if i >= last:
            return samples[last]
        if i < 0:
            return samples[0]
        f = s - i
        return samples[i] * (1.0 - f) + samples[i + 1] * f

    x_start = _find_minimum(trap, float(samples[0]), u_a, 0.0)
    xs, vs = _rk4(trap, u_a, ub_at, x_start, 0.0, t0, h, n_steps, record=True)
    ts = t0 + h * np.arange(n_steps + 1)

    ub_final = ub_at(ts[-1])
    x_final = _find_minimum(trap, ub_final, u_a, x_start)
    energy = oscillation_energy(trap, xs[-1], vs[-1], ub_final, u_a, x_final)
    quanta = energy / (HBAR * trap.omega_ax)

    x0 = track_minimum(trap, u_b, u_a)
    alpha = displace_alpha_integral(x0, trap, t0 + t_span)
    return KickResult(alpha=alpha, final_energy_quanta=quanta, trajectory=(ts, xs, vs),
                      steps_per_period=steps, energy_drift=drift)


def heating_rate_from_noise(field_noise_psd: float, trap: TrapModel) -> float:
    """Heating rate in quanta/s, e^2 S_E(omega) / (4 m hbar omega).

    ``field_noise_psd`` is the single-sided electric-field noise density at
    the secular frequency in V^2 / (Hz m^2).
    """
    if field_noise_psd < 0:
        raise ValueError("noise density must be nonnegative")
    return trap.charge**2 * field_noise_psd / (4.0 * trap.mass * HBAR * trap.omega_ax)


def field_noise_from_voltage_noise(voltage_noise_density: float, field_per_volt: float) -> float:
    """Field noise PSD (V^2/Hz/m^2) from a voltage noise density (V/sqrt(Hz)) on one segment."""
    return (voltage_noise_density * field_per_volt) ** 2


# sweeps -------------------------------------------------------------------

@dataclass(frozen=True)
class KickTemplate:
    """Shape of the kick pulse; the amplitude is supplied per sweep point."""

    duration: float = 400e-9
    sample_dt: float = 5e-9
    t_span: float = 20e-6
    cutoff_hz: float = 300e3
    filter_order: int = 5
    steps_per_period: int = 64

    def waveform(self, volts: float) -> VoltageWaveform:
        ideal = square_kick(volts, self.duration, self.sample_dt, self.t_span)
        return filter_waveform(ideal, self.cutoff_hz, self.filter_order)


@dataclass
class SweepResult:
    voltages: np.ndarray
    alpha_abs: np.ndarray          # energy method
    alpha_integral: np.ndarray     # complex, displacement integral
    energy_quanta: np.ndarray
    quartic: np.ndarray            # c1..c4 of |alpha| = sum c_j V^j
    rms_residual: float

    def fit(self, v):
        v = np.asarray(v, dtype=float)
        return sum(c * v ** (j + 1) for j, c in enumerate(self.quartic))

    def rows(self):
        for v, a, ai, e in zip(self.voltages, self.alpha_abs, self.alpha_integral, self.energy_quanta):
            yield float(v), float(a), float(abs(ai)), float(e)


def fit_quartic_through_origin(v, y):
    """Least-squares c1..c4 for y = c1 v + c2 v^2 + c3 v^3 + c4 v^4; returns (coeffs, rms)."""
    v = np.asarray(v, dtype=float)
    y = np.asarray(y, dtype=float)
    design = np.stack([v ** j for j in range(1, 5)], axis=1)
    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    resid = y - design @ coef
    return coef, float(np.sqrt(np.mean(resid**2)))


def sweep_alpha_vs_voltage(trap: TrapModel, kick_template: KickTemplate, v_list) -> SweepResult:
    v_list = np.asarray(v_list, dtype=float)
    if v_list.size == 0:
        raise ValueError("v_list must be nonempty")
    results = [integrate_eom(trap, kick_template.waveform(v),
                             steps_per_period=kick_template.steps_per_period) for v in v_list]
    alpha_abs = np.array([r.alpha_energy for r in results])
    coef, rms = fit_quartic_through_origin(v_list, alpha_abs)
    return SweepResult(v_list, alpha_abs, np.array([r.alpha for r in results]),
                       np.array([r.final_energy_quanta for r in results]), coef, rms)
