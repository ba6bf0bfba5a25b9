"""Scenario configuration: presets, INI-style files and command-line overrides.

Precedence, lowest first: built-in defaults, the named preset, the config file,
then command-line flags.
"""
from __future__ import annotations

import configparser
import copy
from dataclasses import dataclass, field

# Every recognized key with its type.  Keys outside this table are rejected.
SCHEMA: dict[str, dict[str, type]] = {
    "scenario": {"name": str},
    "background": {
        "family": str, "n": int, "m": float, "nodes": int, "nodes_y": int,
        "phi_kind": str, "phi_amp": float, "phi_freq": float, "phi_freq_y": float,
        "phi_const": float, "phi_slope": float,
        "length": float, "width": float, "theta_max": float, "radius": float,
    },
    "initial": {"kind": str, "amplitude": float, "frequency": float, "path": str},
    "flow": {
        "stepper": str, "dt": float, "s_cfl": float, "tol_conv": float,
        "tol_residual": float, "max_steps": int, "renormalize": bool,
        "monitor_stride": int, "p_lyapunov": float, "sigma": float,
    },
    "output": {"dir": str, "format": str},
    "run": {"seed": int},
    "spectrum": {"k": int},
    "verify": {
        "checks": str, "meshes": str, "min_order": float, "spectrum_rtol": float,
        "ratio_low": float, "ratio_high": float, "seeds": int,
    },
}

DEFAULTS: dict[str, dict] = {
    "scenario": {"name": ""},
    "background": {"family": "flat_interval", "n": 3, "m": 1.0, "nodes": 256},
    "initial": {"kind": "constant", "amplitude": 0.0, "frequency": 1.0},
    "flow": {
        "stepper": "explicit-euler", "s_cfl": 0.2, "tol_conv": 1e-6, "tol_residual": 1e-5,
        "max_steps": 200_000, "renormalize": True, "monitor_stride": 100,
    },
    "output": {"dir": "out", "format": "csv"},
    "run": {"seed": 0},
    "spectrum": {"k": 6},
    "verify": {
        "checks": "transformation_law,integration_by_parts,dense_spectrum,dr_dt",
        "meshes": "128,256,512", "min_order": 1.5, "spectrum_rtol": 1e-8,
        "ratio_low": 1.5, "ratio_high": 3.0, "seeds": 3,
    },
}

PRESETS: dict[str, dict[str, dict]] = {
    "positive_cap": {
        "background": {"family": "spherical_cap", "n": 3, "m": 1.0, "nodes": 512},
        "initial": {"kind": "constant"},
        "flow": {"stepper": "semi-implicit", "dt": 1e-4, "tol_conv": 2e-8, "monitor_stride": 1},
    },
    "positive_cap_perturbed": {
        "background": {"family": "spherical_cap", "n": 3, "m": 1.0, "nodes": 512},
        "initial": {"kind": "trig", "amplitude": 0.1, "frequency": 1.0},
        "flow": {
            "stepper": "semi-implicit", "dt": 5e-4, "tol_conv": 2e-8,
            "monitor_stride": 1, "max_steps": 20_000,
        },
    },
    "zero_flat_constant": {
        "background": {"family": "flat_interval", "n": 3, "m": 2.0, "nodes": 256},
        "initial": {"kind": "constant"},
        "flow": {"stepper": "explicit-euler"},
    },
    "zero_flat_perturbed": {
        "background": {"family": "flat_interval", "n": 3, "m": 2.0, "nodes": 256},
        "initial": {"kind": "trig", "amplitude": 0.2, "frequency": 2.0},
        "flow": {"stepper": "semi-implicit", "dt": 2e-4, "monitor_stride": 1, "max_steps": 20_000},
    },
    "negative_weighted": {
        "background": {
            "family": "flat_interval", "n": 3, "m": 2.0, "nodes": 256,
            "phi_kind": "cos", "phi_amp": 1.0, "phi_freq": 2.0,
        },
        "initial": {"kind": "constant"},
        "flow": {"stepper": "semi-implicit", "dt": 2e-4, "monitor_stride": 1, "max_steps": 20_000},
    },
    "hyperbolic_weighted": {
        "background": {
            "family": "hyperbolic_ball", "n": 3, "m": 1.0, "nodes": 256, "radius": 1.0,
            "phi_kind": "cos", "phi_amp": 0.2, "phi_freq": 1.0,
        },
        "initial": {"kind": "trig", "amplitude": 0.1, "frequency": 1.0},
        "flow": {"stepper": "semi-implicit", "dt": 5e-4, "monitor_stride": 1, "max_steps": 20_000},
    },
}


class ConfigError(ValueError):
    pass


def _coerce(section: str, key: str, value):
    try:
        typ = SCHEMA[section][key]
    except KeyError:
        raise ConfigError(f"unknown key {key!r} in section [{section}]") from None
    if value is None or isinstance(value, typ) and not (typ is int and isinstance(value, bool)):
        return value
    text = str(value).strip()
    try:
        if typ is bool:
            low = text.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        if typ is int:
            return int(float(text)) if float(text).is_integer() else int(text)
        return typ(text)
    except ValueError:
        raise ConfigError(f"[{section}] {key}: cannot read {text!r} as {typ.__name__}") from None


def _merge(base: dict, layer: dict) -> None:
    for section, items in layer.items():
        if section not in SCHEMA:
            raise ConfigError(f"unknown section [{section}]")
        for key, value in items.items():
            base.setdefault(section, {})[key] = _coerce(section, key, value)


def read_config_file(path) -> dict[str, dict]:
    parser = configparser.ConfigParser(interpolation=None, default_section="__none__")
    parser.optionxform = str
    try:
        with open(path, encoding="utf-8") as fh:
            parser.read_file(fh)
    except (OSError, configparser.Error) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return {s: dict(parser.items(s)) for s in parser.sections()}


@dataclass
class ScenarioConfig:
    values: dict[str, dict] = field(default_factory=dict)

    def get(self, section: str, key: str, default=None):
        return self.values.get(section, {}).get(key, default)

    @property
    def name(self) -> str:
        return self.get("scenario", "name", "")

    def background_params(self) -> tuple[str, dict, int | tuple[int, int]]:
        b = dict(self.values["background"])
        family = b.pop("family")
        nodes = b.pop("nodes")
        ny = b.pop("nodes_y", None)
        if family == "flat_rectangle":
            nodes = (nodes, ny if ny is not None else nodes)
        return family, b, nodes

    def flow_kwargs(self) -> dict:
        return {k: v for k, v in self.values["flow"].items() if v is not None}

    def to_ini(self) -> str:
        lines = []
        for section in SCHEMA:
            items = self.values.get(section, {})
            if not items:
                continue
            lines.append(f"[{section}]")
            for key in SCHEMA[section]:
                if key in items and items[key] is not None:
                    v = items[key]
                    v = repr(v) if isinstance(v, float) else str(v).lower() if isinstance(v, bool) else str(v)
                    lines.append(f"{key} = {v}")
            lines.append("")
        return "\n".join(lines)


def resolve(scenario: str | None = None, path=None, overrides: dict | None = None) -> ScenarioConfig:
    """Build the effective configuration."""
    values = copy.deepcopy(DEFAULTS)
    file_layer = read_config_file(path) if path else {}
    name = scenario or file_layer.get("scenario", {}).get("name") or ""
    name = name.strip()
    if name:
        if name not in PRESETS:
            raise ConfigError(f"unknown scenario {name!r}; presets: {', '.join(PRESETS)}")
        _merge(values, PRESETS[name])
    _merge(values, file_layer)
    if overrides:
        _merge(values, overrides)
    values["scenario"]["name"] = name
    if values["output"]["format"] not in ("csv", "json"):
        raise ConfigError("output format must be csv or json")
    if values["initial"]["kind"] not in ("constant", "trig", "random", "file"):
        raise ConfigError("initial kind must be constant, trig, random or file")
    return ScenarioConfig(values)
