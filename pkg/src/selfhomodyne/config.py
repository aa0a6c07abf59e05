"""Scenario configuration: a declarative JSON tree with SI units in the key
names, parsed into the library's typed objects.

Every value has a default (the published operating point of the tabletop
setup), so a config file only needs the keys it overrides.  Seeds are always
explicit; no ambient entropy enters a run.
"""

from __future__ import annotations

import copy
import hashlib
import json
import math
from dataclasses import dataclass, field

from .langevin import Bath, DetectorModel, FeedbackConfig
from .modes import TrapConfig
from .optics import Beam, OpticalSetup, Scatterer

__all__ = ["ScenarioConfig", "default_config_dict", "ConfigError"]


class ConfigError(ValueError):
    """Configuration failed validation."""


def default_config_dict() -> dict:
    """Full default configuration tree (tabletop operating point)."""
    return {
        "scenario_id": "default",
        "optics": {
            "wavelength_m": 780e-9,
            "numerical_aperture": 0.18,
            "mirror_field_reflectivity": 1.0,
            "visibility": 0.7,
            "path_efficiency": 0.9,
            "detector_quantum_efficiency": 0.82,
            "focal_length_m": 0.05,
            "mirror_distance_m": 0.10,
            "polarization_axis": [0.0, 1.0, 0.0],
            "axis_projection_angle_rad": math.pi / 4,
        },
        "scatterer": {
            "radius_m": 150e-9,
            "refractive_index": 1.45,
            "mass_kg": 2.0e-17,
        },
        "beam": {"power_w": 0.43, "waist_m": 0.29e-3},
        "trap": {
            "secular_freq_x_hz": 2100.0,
            "secular_freq_y_hz": 3200.0,
            "secular_freq_z_hz": 1100.0,
            "drive_freq_hz": 11000.0,
            "stability_q": 0.8,
        },
        "bath": {
            "pressure_mbar": 2e-8,
            "temperature_k": 300.0,
            "damping_anchor_pressure_mbar": 1e-2,
            "damping_anchor_gamma_rad_per_s": 2.0 * math.pi * 4.3,
        },
        "detector": {
            "imprecision_self_m2_per_hz": 3.0e-24,
            "imprecision_forward_m2_per_hz": 3.0e-24 * 10**3.8,
            "fringe_nonlinearity": False,
            "mirror_mode": "locked",
            "ramp_rate_m_per_s": 0.0,
            "lock_setpoint_index": 0,
            "gain_volts": 1.0,
        },
        "feedback": {
            "cooling_rate_rad_per_s": 0.0,
            "spring_gain_rad_per_s": 0.0,
            "loop_delay_s": 0.0,
            "filter_band_hz": [300.0, 6400.0],
            "source_channel": "self-homodyne",
        },
        "sim": {
            "dt_s": 2.0**-17,
            "duration_s": 4.0,
            "transient_s": 1.0,
            "seed": 20240901,
        },
        "sweeps": {
            "scattered_powers_w": [2e-8, 4e-8, 8.4e-8, 1.8e-7, 4e-7],
            "cooling_rates_rad_per_s": [
                0.0,
                2.0 * math.pi * 20.0,
                2.0 * math.pi * 40.0,
                2.0 * math.pi * 80.0,
                2.0 * math.pi * 160.0,
                2.0 * math.pi * 320.0,
                2.0 * math.pi * 640.0,
            ],
            "spring_gain_coef": 250.0,  # alpha = coef * sqrt(cooling_rate)
            "mode_spring_gains_rad_per_s": [
                0.0,
                2.0 * math.pi * 500.0,
                2.0 * math.pi * 1000.0,
                2.0 * math.pi * 2000.0,
                2.0 * math.pi * 4000.0,
            ],
        },
    }


def _merge(base: dict, override: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, val in override.items():
        if key not in base:
            raise ConfigError(f"unknown config key: {path}{key}")
        if isinstance(base[key], dict):
            if not isinstance(val, dict):
                raise ConfigError(f"config key {path}{key} must be a table")
            out[key] = _merge(base[key], val, f"{path}{key}.")
        else:
            out[key] = val
    return out


@dataclass(frozen=True)
class ScenarioConfig:
    """Validated scenario: typed sub-configs plus the raw (merged) tree."""

    tree: dict = field(repr=False)
    setup: OpticalSetup = field(repr=False)
    scatterer: Scatterer = field(repr=False)
    beam: Beam = field(repr=False)
    trap: TrapConfig = field(repr=False)
    bath: Bath = field(repr=False)
    detector: DetectorModel = field(repr=False)
    feedback: FeedbackConfig = field(repr=False)

    @property
    def scenario_id(self) -> str:
        return self.tree["scenario_id"]

    @property
    def dt(self) -> float:
        return float(self.tree["sim"]["dt_s"])

    @property
    def duration(self) -> float:
        return float(self.tree["sim"]["duration_s"])

    @property
    def transient(self) -> float:
        return float(self.tree["sim"]["transient_s"])

    @property
    def seed(self) -> int:
        return int(self.tree["sim"]["seed"])

    @classmethod
    def from_dict(cls, overrides: dict | None = None) -> "ScenarioConfig":
        tree = _merge(default_config_dict(), overrides or {})
        try:
            opt = tree["optics"]
            setup = OpticalSetup(
                wavelength=float(opt["wavelength_m"]),
                half_aperture=math.asin(float(opt["numerical_aperture"])),
                mirror_reflectivity=float(opt["mirror_field_reflectivity"]),
                visibility=float(opt["visibility"]),
                path_efficiency=float(opt["path_efficiency"]),
                detector_qe=float(opt["detector_quantum_efficiency"]),
                focal_length=float(opt["focal_length_m"]),
                mirror_distance=float(opt["mirror_distance_m"]),
                polarization_axis=tuple(float(v) for v in opt["polarization_axis"]),
                axis_projection_angle=float(opt["axis_projection_angle_rad"]),
            )
            sca = tree["scatterer"]
            scatterer = Scatterer(
                radius=float(sca["radius_m"]),
                refractive_index=float(sca["refractive_index"]),
                mass=float(sca["mass_kg"]),
            )
            beam = Beam(
                power=float(tree["beam"]["power_w"]),
                waist=float(tree["beam"]["waist_m"]),
                wavelength=float(opt["wavelength_m"]),
            )
            trp = tree["trap"]
            trap = TrapConfig(
                secular_freq_x=2.0 * math.pi * float(trp["secular_freq_x_hz"]),
                secular_freq_y=2.0 * math.pi * float(trp["secular_freq_y_hz"]),
                secular_freq_z=2.0 * math.pi * float(trp["secular_freq_z_hz"]),
                drive_freq=float(trp["drive_freq_hz"]),
                stability_q=float(trp["stability_q"]),
                mass=float(sca["mass_kg"]),
            )
            bth = tree["bath"]
            bath = Bath(
                pressure=float(bth["pressure_mbar"]),
                temperature=float(bth["temperature_k"]),
                damping_anchor=(
                    float(bth["damping_anchor_pressure_mbar"]),
                    float(bth["damping_anchor_gamma_rad_per_s"]),
                ),
            )
            det = tree["detector"]
            detector = DetectorModel(
                imprecision_self=float(det["imprecision_self_m2_per_hz"]),
                imprecision_forward=float(det["imprecision_forward_m2_per_hz"]),
                fringe_nonlinearity=bool(det["fringe_nonlinearity"]),
                mirror_mode=str(det["mirror_mode"]),
                ramp_rate=float(det["ramp_rate_m_per_s"]),
                lock_setpoint_index=int(det["lock_setpoint_index"]),
                gain=float(det["gain_volts"]),
            )
            fbk = tree["feedback"]
            feedback = FeedbackConfig(
                cooling_rate=float(fbk["cooling_rate_rad_per_s"]),
                spring_gain=float(fbk["spring_gain_rad_per_s"]),
                loop_delay=float(fbk["loop_delay_s"]),
                filter_band=tuple(float(v) for v in fbk["filter_band_hz"]),
                source_channel=str(fbk["source_channel"]),
            )
            sim = tree["sim"]
            if float(sim["dt_s"]) <= 0 or float(sim["duration_s"]) <= 0:
                raise ValueError("sim dt_s and duration_s must be positive")
            if float(sim["transient_s"]) < 0 or float(sim["transient_s"]) >= float(
                sim["duration_s"]
            ):
                raise ValueError("sim transient_s must lie in [0, duration_s)")
            int(sim["seed"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"invalid configuration: {exc}") from exc
        return cls(
            tree=tree, setup=setup, scatterer=scatterer, beam=beam,
            trap=trap, bath=bath, detector=detector, feedback=feedback,
        )

    @classmethod
    def from_file(cls, path) -> "ScenarioConfig":
        with open(path, "r", encoding="utf-8") as fh:
            try:
                overrides = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"config file is not valid JSON: {exc}") from exc
        if not isinstance(overrides, dict):
            raise ConfigError("config file must contain a JSON object")
        return cls.from_dict(overrides)

    def to_json(self) -> str:
        """Canonical serialized form; parse -> serialize -> parse is identity."""
        return json.dumps(self.tree, sort_keys=True, indent=2)

    def sha256(self) -> str:
        return hashlib.sha256(self.to_json().encode("utf-8")).hexdigest()
