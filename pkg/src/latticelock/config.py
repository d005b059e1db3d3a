"""Experiment configuration: JSON schema, validation, and typed assembly.

One JSON file drives every CLI subcommand.  The schema is strict (unknown
keys are rejected, the seed is mandatory) so that a config plus a seed fully
determines every output byte.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Any

import jsonschema

from . import kicks
from .lattice import PhysicalParams, StandingWaveField, beam_angle_for_period, lattice_period
from .lock import CompositeDrift, DriftStep, LinearRamp, LockConfig, RandomWalk
from .mapping import PolynomialMap, ScanPlan, SegmentPotentialModel

__all__ = ["ConfigError", "ExperimentConfig", "default_config", "load_config"]

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    """Configuration file is missing, malformed, or violates the schema."""


_DRIFT_SCHEMA = {
    "type": "object",
    "oneOf": [
        {
            "properties": {"kind": {"const": "linear_ramp"},
                           "rate_rad_s": {"type": "number"}},
            "required": ["kind", "rate_rad_s"], "additionalProperties": False,
        },
        {
            "properties": {"kind": {"const": "random_walk"},
                           "rate_rms_rad_rts": {"type": "number", "minimum": 0}},
            "required": ["kind", "rate_rms_rad_rts"], "additionalProperties": False,
        },
        {
            "properties": {"kind": {"const": "step"},
                           "size_rad": {"type": "number"},
                           "at_s": {"type": "number", "minimum": 0}},
            "required": ["kind", "size_rad", "at_s"], "additionalProperties": False,
        },
        {
            "properties": {"kind": {"const": "composite"},
                           "parts": {"type": "array", "minItems": 1}},
            "required": ["kind", "parts"], "additionalProperties": False,
        },
    ],
}

SCHEMA: dict = {
    "type": "object",
    "additionalProperties": False,
    "required": ["version", "seed", "physical", "field"],
    "properties": {
        "version": {"const": SCHEMA_VERSION},
        "seed": {"type": "integer"},
        "physical": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "lambda_laser_m": {"type": "number", "exclusiveMinimum": 0},
                "beam_angle_rad": {"type": "number", "exclusiveMinimum": 0,
                                   "maximum": math.pi},
                "detuning_rad_s": {"type": "number", "exclusiveMinimum": 0},
                "trap_freq_rad_s": {"type": "number", "exclusiveMinimum": 0},
                "lamb_dicke": {"type": "number", "exclusiveMinimum": 0,
                               "exclusiveMaximum": 1},
                "ion_mass_kg": {"type": "number", "exclusiveMinimum": 0},
                "readout_fidelity": {"type": "number", "exclusiveMinimum": 0,
                                     "maximum": 1},
            },
        },
        "field": {
            "type": "object",
            "additionalProperties": False,
            "required": ["stark_amplitude_rad_s"],
            "properties": {
                "stark_amplitude_rad_s": {"type": "number", "minimum": 0},
                "phase_rad": {"type": "number"},
            },
        },
        "echo": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "t_max_s": {"type": "number", "exclusiveMinimum": 0},
                "n_times": {"type": "integer", "minimum": 2},
                "nbar": {"type": "number", "minimum": 0},
                "phase_jitter_rms_rad": {"type": "number", "minimum": 0},
                "repetitions": {"type": "integer", "minimum": 1},
                "phase_positions_rad": {"type": "array", "minItems": 1,
                                        "items": {"type": "number"}},
            },
        },
        "lock": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "setpoint": {"type": "number", "exclusiveMinimum": 0,
                             "exclusiveMaximum": 1},
                "update_period_s": {"type": "number", "exclusiveMinimum": 0},
                "repetitions_per_update": {"type": "integer", "minimum": 1},
                "gain": {"type": "number", "exclusiveMinimum": 0},
                "feedthrough_m_per_v": {"type": "number", "exclusiveMinimum": 0},
                "dac_step_v": {"type": "number", "exclusiveMinimum": 0},
                "duty_cycle": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
                "duration_s": {"type": "number", "exclusiveMinimum": 0},
                "noiseless": {"type": "boolean"},
            },
        },
        "drift": _DRIFT_SCHEMA,
        "kick": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "target_amplitude": {"type": "number", "exclusiveMinimum": 0},
                "nbar": {"type": "number", "minimum": 0},
                "phase_jitter_rms_rad": {"type": "number", "minimum": 0},
                "repetitions": {"type": "integer", "minimum": 1},
                "n_delays": {"type": "integer", "minimum": 4},
                "periods": {"type": "number", "exclusiveMinimum": 0},
                "pulse_area_rad": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "scan": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "source": {"enum": ["map", "model"]},
                "map_coefficients": {"type": "array", "minItems": 6, "maxItems": 6,
                                     "items": {"type": "number"}},
                "v_max": {"type": "number", "exclusiveMinimum": 0},
                "n_windows": {"type": "integer", "minimum": 1},
                "window_width_v": {"type": "number", "exclusiveMinimum": 0},
                "resolved_step_v": {"type": "number", "exclusiveMinimum": 0},
                "aliased_step_v": {"type": "number", "exclusiveMinimum": 0},
                "repetitions": {"type": "integer", "minimum": 1},
                "nbar": {"type": "number", "minimum": 0},
                "phase_jitter_rms_rad": {"type": "number", "minimum": 0},
                "trap_model": {
                    "type": "object",
                    "additionalProperties": False,
                    "properties": {
                        "pitch_m": {"type": "number", "exclusiveMinimum": 0},
                        "width_m": {"type": "number", "exclusiveMinimum": 0},
                        "decay_m": {"type": "number", "exclusiveMinimum": 0},
                        "trap_voltage_v": {"type": "number", "exclusiveMaximum": 0},
                        "width_asymmetry": {"type": "number"},
                        "stray_field_v_m": {"type": "number"},
                    },
                },
            },
        },
    },
}


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated configuration with typed accessors for each subsystem."""

    raw: dict
    seed: int

    @property
    def physical(self) -> PhysicalParams:
        p = self.raw.get("physical", {})
        kwargs = {}
        for key, name in (("lambda_laser_m", "lambda_laser"),
                          ("beam_angle_rad", "beam_angle"),
                          ("detuning_rad_s", "detuning"),
                          ("trap_freq_rad_s", "trap_freq"),
                          ("lamb_dicke", "lamb_dicke"),
                          ("ion_mass_kg", "ion_mass"),
                          ("readout_fidelity", "readout_fidelity")):
            if key in p:
                kwargs[name] = p[key]
        return PhysicalParams(**kwargs)

    @property
    def field(self) -> StandingWaveField:
        f = self.raw["field"]
        return StandingWaveField.from_params(
            self.physical, f["stark_amplitude_rad_s"], f.get("phase_rad", 0.0))

    def require(self, section: str) -> dict:
        if section not in self.raw:
            raise ConfigError(f"config has no '{section}' section (required here)")
        return self.raw[section]

    def lock_config(self) -> LockConfig:
        s = self.require("lock")
        return LockConfig(
            setpoint=s.get("setpoint", 0.5),
            update_period=s.get("update_period_s", 0.5),
            repetitions_per_update=s.get("repetitions_per_update", 200),
            gain=s.get("gain", 1.0),
            feedthrough=s.get("feedthrough_m_per_v", 8e-6),
            dac_step=s.get("dac_step_v", 0.3e-3),
            duty_cycle=s.get("duty_cycle", 0.5),
            readout_fidelity=self.raw.get("physical", {}).get("readout_fidelity", 0.99),
            noiseless=s.get("noiseless", False),
        )

    def drift_process(self):
        return _build_drift(self.require("drift"))

    def scan_plan(self) -> ScanPlan:
        s = self.require("scan")
        return ScanPlan(
            v_max=s["v_max"],
            n_windows=s.get("n_windows", 5),
            window_width=s.get("window_width_v", 0.1),
            resolved_step=s.get("resolved_step_v", 1.2e-3),
            aliased_step=s.get("aliased_step_v", 18e-3),
            repetitions=s.get("repetitions", 200),
        )

    def trap_model(self) -> SegmentPotentialModel:
        s = self.require("scan")
        m = s.get("trap_model")
        if m is None:
            raise ConfigError("scan.trap_model section missing")
        return SegmentPotentialModel(
            pitch=m.get("pitch_m", 400e-6),
            width=m.get("width_m", 300e-6),
            decay=m.get("decay_m", 350e-6),
            trap_voltage=m["trap_voltage_v"],
            width_asymmetry=m.get("width_asymmetry", 0.0),
            stray_field=m.get("stray_field_v_m", 0.0),
        )

    def truth_map(self) -> PolynomialMap | None:
        s = self.raw.get("scan", {})
        c = s.get("map_coefficients")
        return PolynomialMap(tuple(c)) if c is not None else None


def _build_drift(spec: dict):
    kind = spec["kind"]
    if kind == "linear_ramp":
        return LinearRamp(rate=spec["rate_rad_s"])
    if kind == "random_walk":
        return RandomWalk(rate_rms=spec["rate_rms_rad_rts"])
    if kind == "step":
        return DriftStep(size=spec["size_rad"], at=spec["at_s"])
    if kind == "composite":
        return CompositeDrift(parts=tuple(_build_drift(p) for p in spec["parts"]))
    raise ConfigError(f"unknown drift kind {kind!r}")


def validate_config(data: Any) -> dict:
    try:
        jsonschema.validate(data, SCHEMA)
    except jsonschema.ValidationError as exc:
        raise ConfigError(f"config schema violation: {exc.message}") from exc
    return data


def load_config(path: str) -> ExperimentConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path!r}: {exc}") from exc
    validate_config(data)
    # nested drift parts are validated recursively by construction
    if "drift" in data:
        _build_drift(data["drift"])
    return ExperimentConfig(raw=data, seed=int(data["seed"]))


def default_config(seed: int = 20260810) -> dict:
    """Paper-scale defaults for every subcommand (all values derivable at runtime)."""
    params = PhysicalParams()
    period = lattice_period(params)
    wavevector = 2 * math.pi / period
    stark = kicks.stark_amplitude_for_static_displacement(0.03, params, wavevector)
    model = SegmentPotentialModel.paper_scale()
    from .mapping import polynomial_from_model, voltage_for_span  # local: heavier imports
    v_max = voltage_for_span(model, 157e-6)
    truth = polynomial_from_model(model, v_max)
    jitter = 0.048 * math.pi
    return {
        "version": SCHEMA_VERSION,
        "seed": seed,
        "physical": {
            "lambda_laser_m": params.lambda_laser,
            "beam_angle_rad": params.beam_angle,
            "detuning_rad_s": params.detuning,
            "trap_freq_rad_s": params.trap_freq,
            "lamb_dicke": params.lamb_dicke,
            "ion_mass_kg": params.ion_mass,
            "readout_fidelity": params.readout_fidelity,
        },
        "field": {"stark_amplitude_rad_s": stark, "phase_rad": 0.0},
        "echo": {
            "t_max_s": 2.0 * 2 * math.pi / stark,
            "n_times": 121,
            "nbar": 0.4,
            "phase_jitter_rms_rad": jitter,
            "repetitions": 200,
            "phase_positions_rad": [0.0, math.pi / 4, math.pi / 2],
        },
        "lock": {
            "setpoint": 0.5,
            "update_period_s": 0.5,
            "repetitions_per_update": 200,
            "gain": 1.0,
            "feedthrough_m_per_v": 8e-6,
            "dac_step_v": 0.3e-3,
            "duty_cycle": 0.5,
            "duration_s": 600.0,
            "noiseless": False,
        },
        "drift": {"kind": "linear_ramp", "rate_rad_s": 3 * math.pi / 600.0},
        "kick": {
            "target_amplitude": 1.0,
            "nbar": 0.4,
            "phase_jitter_rms_rad": jitter,
            "repetitions": 200,
            "n_delays": 40,
            "periods": 1.25,
            "pulse_area_rad": math.pi,
        },
        "scan": {
            "source": "map",
            "map_coefficients": list(truth.coefficients),
            "v_max": v_max,
            "n_windows": 5,
            "window_width_v": 0.1,
            "resolved_step_v": 1.2e-3,
            "aliased_step_v": 18e-3,
            "repetitions": 200,
            "nbar": 0.4,
            "phase_jitter_rms_rad": jitter,
            "trap_model": {
                "pitch_m": model.pitch,
                "width_m": model.width,
                "decay_m": model.decay,
                "trap_voltage_v": model.trap_voltage,
                "width_asymmetry": model.width_asymmetry,
                "stray_field_v_m": model.stray_field,
            },
        },
    }


if __name__ == "__main__":  # pragma: no cover - convenience: emit a default config
    print(json.dumps(default_config(), indent=2, sort_keys=True))
