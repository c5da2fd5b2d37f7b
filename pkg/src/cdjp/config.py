"""Versioned JSON experiment configuration and the built-in presets."""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import jsonschema
import numpy as np

from .control import AnnealConfig, ShootingProblem
from .errors import ConfigError
from .fock import make_state

CONFIG_VERSION = 1

_number = {"type": "number"}
_positive = {"type": "number", "exclusiveMinimum": 0}
_complex = {"oneOf": [_number, {"type": "array", "items": _number, "minItems": 2, "maxItems": 2}]}

_STATE = {
    "type": "object",
    "required": ["kind"],
    "additionalProperties": False,
    "properties": {
        "kind": {"enum": ["fock_superposition", "cat", "coherent", "squeezed_vacuum", "squeezed_coherent"]},
        "coefficients": {"type": "array", "items": _complex, "minItems": 1},
        "alpha": _complex,
        "xi": _complex,
        "parity": {"enum": [1, -1]},
    },
}

_ANNEAL = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "initial_temperature": _positive,
        "cooling_rate": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "steps_per_temperature": {"type": "integer", "minimum": 1},
        "proposal_scale": _positive,
        "restarts": {"type": "integer", "minimum": 1},
        "max_levels": {"type": "integer", "minimum": 1},
        "min_temperature": _positive,
        "restart_spread": _positive,
    },
}

SCHEMA = {
    "type": "object",
    "required": ["schema_version", "name", "initial_state", "target_state"],
    "additionalProperties": False,
    "properties": {
        "schema_version": {"const": CONFIG_VERSION},
        "name": {"type": "string", "minLength": 1},
        "initial_state": _STATE,
        "target_state": _STATE,
        "tau": _positive,
        "t_f": {"type": "number", "minimum": 0},
        "dt": _positive,
        "lambda1_max": {"type": "number", "minimum": 0},
        "n_levels": {"type": "integer", "minimum": 2},
        "fidelity_gate": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "sample_gate": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "theta_fixed": {"type": ["number", "null"]},
        "n_c": {"type": "integer", "minimum": 0},
        "anneal": _ANNEAL,
        "sample_anneal": _ANNEAL,
        "n_traj": {"type": "integer", "minimum": 1},
        "seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
        "gauss_final_means": {"type": "array", "items": _number, "minItems": 2, "maxItems": 2},
        "output_dir": {"type": "string"},
    },
}

DEFAULTS = {
    "tau": 15.0, "t_f": 3.0, "dt": 1e-3, "lambda1_max": 0.2, "n_levels": 36, "fidelity_gate": 0.92,
    "sample_gate": 0.95, "theta_fixed": None, "n_c": 5, "anneal": {}, "sample_anneal": {}, "n_traj": 2000,
    "seed": 0, "gauss_final_means": [1.0, 0.5], "output_dir": "out",
}

_SQRT_HALF = 2 ** -0.5
_DESK_ANNEAL = {"initial_temperature": 0.05, "steps_per_temperature": 100, "max_levels": 150, "restarts": 8}

PRESETS = {
    "binomial": {
        "initial_state": {"kind": "fock_superposition", "coefficients": [_SQRT_HALF, 0, 0, 0, -_SQRT_HALF]},
        "target_state": {"kind": "fock_superposition", "coefficients": [_SQRT_HALF, 0, 0, 0, _SQRT_HALF]},
        "fidelity_gate": 0.95,
    },
    "cat-cooling": {
        "initial_state": {"kind": "cat", "alpha": [0.25, -0.75]},
        "target_state": {"kind": "fock_superposition", "coefficients": [1.0]},
        "fidelity_gate": 0.975,
    },
    "cat-to-cat": {
        "initial_state": {"kind": "cat", "alpha": [-0.25, 1.55]},
        "target_state": {"kind": "cat", "alpha": [1.35, -0.75]},
        "fidelity_gate": 0.96,
        # the low-cost basin is narrow, so the optimal solve gets twice the restarts
        "anneal": {**_DESK_ANNEAL, "restarts": 16},
    },
    "gauss-theta0": {
        "initial_state": {"kind": "squeezed_vacuum", "xi": "steady"},
        "target_state": {"kind": "squeezed_coherent", "xi": "steady"},
        "lambda1_max": 0.0, "theta_fixed": 0.0,
    },
}
for _name, _p in PRESETS.items():
    _p.update({"schema_version": CONFIG_VERSION, "name": _name, "output_dir": f"out/{_name}"})
    _p.setdefault("anneal", dict(_DESK_ANNEAL))
    _p.setdefault("sample_anneal", dict(_DESK_ANNEAL))


def _to_complex(v) -> complex:
    return complex(v[0], v[1]) if isinstance(v, (list, tuple)) else complex(v)


def _state_params(spec: dict) -> dict:
    out = {}
    for k, v in spec.items():
        if k == "kind":
            continue
        if k == "coefficients":
            out[k] = [_to_complex(c) for c in v]
        elif k in ("alpha", "xi"):
            out[k] = _to_complex(v)
        else:
            out[k] = v
    return out


@dataclass(frozen=True)
class ExperimentConfig:
    raw: dict

    def __getattr__(self, name):
        raw = object.__getattribute__(self, "raw")
        if name in raw:
            return raw[name]
        raise AttributeError(name)

    def hash(self) -> str:
        return config_hash(self.raw)

    def anneal_config(self, which: str = "anneal", seed: int | None = None, workers: int = 1) -> AnnealConfig:
        kw = dict(self.raw[which])
        kw["seed"] = self.raw["seed"] if seed is None else seed
        return AnnealConfig(workers=workers, **kw)

    def states(self) -> tuple[np.ndarray, np.ndarray]:
        return build_state(self.raw["initial_state"], self.n_levels), build_state(self.raw["target_state"],
                                                                                 self.n_levels)

    def problem(self, gate: str = "fidelity_gate") -> ShootingProblem:
        rho0, rho_t = self.states()
        return ShootingProblem(rho0, rho_t, tau=self.tau, t_f=self.t_f, dt=self.dt, lambda1_max=self.lambda1_max,
                               fidelity_gate=self.raw[gate], name=self.name,
                               description={"initial_state": self.raw["initial_state"],
                                            "target_state": self.raw["target_state"]})

    def to_json(self) -> str:
        return json.dumps(self.raw, indent=1, sort_keys=True)


def build_state(spec: dict, n_levels: int) -> np.ndarray:
    return make_state(spec["kind"], n_levels, **_state_params(spec))


def config_hash(raw: dict) -> str:
    return hashlib.sha256(json.dumps(raw, sort_keys=True).encode()).hexdigest()[:16]


def validate(raw: dict) -> ExperimentConfig:
    """Schema check, default filling and physical sanity; raises :class:`ConfigError`."""
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    try:
        jsonschema.validate(raw, SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"config {where}: {exc.message}") from None
    full = copy.deepcopy(DEFAULTS)
    full.update(copy.deepcopy(raw))
    for key in ("anneal", "sample_anneal"):
        try:
            AnnealConfig(**full[key])
        except TypeError as exc:
            raise ConfigError(str(exc)) from None
    if full["dt"] / full["tau"] >= 0.01:
        raise ConfigError("dt/tau must stay below 0.01")
    n = round(full["t_f"] / full["dt"])
    if abs(n * full["dt"] - full["t_f"]) > 1e-9 * max(1.0, full["t_f"]):
        raise ConfigError("t_f must be an integer number of steps dt")
    return ExperimentConfig(full)


def load_config(path=None, preset: str | None = None, overrides: dict | None = None) -> ExperimentConfig:
    """Read a config file or a preset; ``overrides`` replace top-level keys."""
    if path is None and preset is None:
        raise ConfigError("give a config file or a preset name")
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigError(f"unknown preset {preset!r}; choose from {sorted(PRESETS)}")
        raw = copy.deepcopy(PRESETS[preset])
    else:
        raw = {}
    if path is not None:
        try:
            raw.update(json.loads(Path(path).read_text(encoding="utf-8")))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
    if overrides:
        raw.update({k: v for k, v in overrides.items() if v is not None})
    if raw.get("name") == "gauss-theta0" or raw.get("initial_state", {}).get("xi") == "steady":
        raw = _resolve_gauss(raw)
    return validate(raw)


def _resolve_gauss(raw: dict) -> dict:
    """Fill ``"steady"`` squeezing and the target displacement of the Gaussian preset."""
    from .gauss import squeezing_parameter, steady_state_covariances
    raw = copy.deepcopy(raw)
    xi = squeezing_parameter(*steady_state_covariances(raw.get("tau", DEFAULTS["tau"])))
    qf = raw.get("gauss_final_means", DEFAULTS["gauss_final_means"])
    for key in ("initial_state", "target_state"):
        if raw.get(key, {}).get("xi") == "steady":
            raw[key]["xi"] = [xi.real, xi.imag]
    if raw.get("target_state", {}).get("kind") == "squeezed_coherent" and "alpha" not in raw["target_state"]:
        a = (qf[0] + 1j * qf[1]) * _SQRT_HALF
        raw["target_state"]["alpha"] = [a.real, a.imag]
    return raw
