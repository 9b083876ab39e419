"""Flat key-value configuration shared by the kick simulation and the pipeline.

Files are YAML mappings (``key: value`` per line) or the same keys as a JSON
object. Unknown keys are rejected. ``DISPFOCK_CONFIG`` names a default file.
"""

from __future__ import annotations

import dataclasses
import json
import math
import os
from dataclasses import dataclass
from pathlib import Path

import yaml

from .kick import AMU, KickTemplate, TrapModel, calibrate_trap
from .sideband import CouplingConfig

ENV_VAR = "DISPFOCK_CONFIG"


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class Settings:
    # trap and kick
    mass_amu: float = 39.962590863
    omega_ax_hz: float = 1.35e6
    eta: float = 0.21
    segment_offset_m: float = 280e-6
    field_per_volt: float = 600.0
    holding_voltage_v: float = -5.0
    filter_cutoff_hz: float = 300e3
    filter_order: int = 5
    kick_voltage_v: float = 2.0
    kick_duration_s: float = 400e-9
    sample_dt_s: float = 5e-9
    t_span_s: float = 20e-6
    steps_per_period: int = 64
    # measurement and reconstruction
    readout_fidelity: float = 1.0
    shots: int = 200
    theta_points: int = 40
    theta_periods: float = 2.0
    k_max_fit: int = 12
    k_max_truth: int = 40
    restarts: int = 4
    # preparation fidelities on the target state for n = 0, 1, 2, ...
    fidelities: tuple = (0.92, 0.77, 0.72)
    seed: int = 0

    def trap(self) -> TrapModel:
        return calibrate_trap(omega_ax=2 * math.pi * self.omega_ax_hz,
                              field_per_volt=self.field_per_volt,
                              segment_offset=self.segment_offset_m,
                              holding_voltage=self.holding_voltage_v,
                              mass=self.mass_amu * AMU)

    def kick_template(self) -> KickTemplate:
        return KickTemplate(duration=self.kick_duration_s, sample_dt=self.sample_dt_s,
                            t_span=self.t_span_s, cutoff_hz=self.filter_cutoff_hz,
                            filter_order=self.filter_order,
                            steps_per_period=self.steps_per_period)

    def coupling(self) -> CouplingConfig:
        return CouplingConfig(eta=self.eta, readout_fidelity=self.readout_fidelity)

    def fidelity(self, n: int) -> float:
        return float(self.fidelities[n]) if n < len(self.fidelities) else float(self.fidelities[-1])

    def to_dict(self):
        d = dataclasses.asdict(self)
        d["fidelities"] = list(self.fidelities)
        return d


def _coerce(name, value, default):
    try:
        if isinstance(default, bool):
            return bool(value)
        if isinstance(default, int):
            if float(value) != int(float(value)):
                raise ValueError
            return int(float(value))
        if isinstance(default, float):
            return float(value)
        if isinstance(default, tuple):
            return tuple(float(v) for v in value)
    except (TypeError, ValueError):
        raise ConfigError(f"bad value for {name}: {value!r}") from None
    return value


def settings_from_mapping(mapping: dict, base: Settings = Settings()) -> Settings:
    known = {f.name: getattr(base, f.name) for f in dataclasses.fields(Settings)}
    unknown = sorted(set(mapping) - set(known))
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    updates = {k: _coerce(k, v, known[k]) for k, v in mapping.items()}
    try:
        return dataclasses.replace(base, **updates)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def load_settings(path=None) -> Settings:
    """Settings from ``path``, else from $DISPFOCK_CONFIG, else the defaults."""
    path = path or os.environ.get(ENV_VAR)
    if not path:
        return Settings()
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    try:
        doc = json.loads(text) if path.suffix == ".json" else yaml.safe_load(text)
    except (json.JSONDecodeError, yaml.YAMLError) as exc:
        raise ConfigError(f"malformed config {path}: {exc}") from None
    if doc is None:
        doc = {}
    if not isinstance(doc, dict):
        raise ConfigError(f"config {path} must be a key-value mapping")
    return settings_from_mapping(doc)


def dump_settings(settings: Settings) -> str:
    return yaml.safe_dump(settings.to_dict(), sort_keys=False)
