"""Toolkit configuration: packaged defaults merged with an optional user file."""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import yaml

from .adapt import ArraySpec, TuningPolicy
from .device import DeviceState, pristine_device, total_capacitance, vg_sweep
from .eis import CircuitParams, FrequencyGrid, log_grid
from .growth import GrowthModel, MorphologyTable
from .transient import PulseTrainSpec


class ConfigError(ValueError):
    pass


def default_raw() -> dict:
    text = resources.files("oectsim").joinpath("defaults.yaml").read_text()
    return yaml.safe_load(text)


def _merge(base: dict, override: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        where = f"{path}{key}"
        if key not in base:
            raise ConfigError(f"unknown config key {where!r}")
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"config key {where!r} must be a section")
            out[key] = _merge(base[key], value, where + ".")
        else:
            out[key] = _coerce(base[key], value, where)
    return out


def _coerce(template, value, where: str):
    try:
        if isinstance(template, bool):
            if not isinstance(value, bool):
                raise TypeError
            return value
        if isinstance(template, int):
            if isinstance(value, bool) or int(value) != value:
                raise TypeError
            return int(value)
        if isinstance(template, float):
            if isinstance(value, bool):
                raise TypeError
            return float(value)
        if isinstance(template, list):
            return [_coerce(template[0], v, where) for v in value]
    except (TypeError, ValueError):
        raise ConfigError(f"bad value for {where!r}: {value!r}") from None
    return value


@dataclass(frozen=True)
class ToolkitConfig:
    raw: dict
    device: DeviceState
    sweep: tuple[float, ...]
    vd: float
    growth: GrowthModel
    morphology: MorphologyTable
    circuit_rs: float
    circuit_rp: float
    grid: FrequencyGrid
    pulse: PulseTrainSpec
    transient_rs: float
    samples_per_segment: int
    threshold: float
    transient_fraction: float
    policy: TuningPolicy
    array: ArraySpec
    seed: int

    def circuit_for(self, state: DeviceState) -> CircuitParams:
        return CircuitParams(self.circuit_rs, self.circuit_rp, total_capacitance(state))

    def digest(self) -> str:
        blob = json.dumps(self.raw, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def build(raw: dict) -> ToolkitConfig:
    """Validate every section by constructing its domain objects."""
    try:
        d, sw, g, m = raw["device"], raw["sweep"], raw["growth"], raw["morphology"]
        c, t, p, a = raw["circuit"], raw["transient"], raw["policy"], raw["array"]
        device = pristine_device(
            d["width_um"], d["length_um"], d["thickness_nm"], d["mobility"],
            d["vol_capacitance"], d["vth"], d["area_factor"],
        )
        sweep = tuple(vg_sweep(sw["vg_start"], sw["vg_stop"], sw["vg_points"]))
        if sw["vd"] > 0:
            raise ValueError("sweep.vd must be <= 0")
        growth = GrowthModel(
            potentials=g["potentials"],
            rates=g["rates_nm_s"],
            mobility_factors=g["mobility_factor"],
            cap_factors=g["cap_factor"],
            reference_mobility=d["mobility"],
            reference_vol_capacitance=d["vol_capacitance"],
            decay_threshold=g["decay_threshold_nm"],
            decay_scale=g["decay_scale_nm"],
            noise_sigma=g["noise_sigma"],
            decay_enabled=g["decay_enabled"],
        )
        morph = MorphologyTable(
            tuple(m["potentials"]), tuple(m["grain_nm"]), tuple(m["roughness_nm"]),
            m["spin_coated_roughness_nm"],
        )
        if not (c["rs_ohm"] > 0 and c["rp_ohm"] > 0):
            raise ValueError("circuit resistances must be positive")
        grid = log_grid(c["f_max_hz"], c["f_min_hz"], c["points_per_decade"])
        pulse = PulseTrainSpec(t["amplitude_v"], t["width_s"], t["frequency_hz"], t["n_pulses"])
        if not t["rs_ohm"] > 0 or t["samples_per_segment"] < 1:
            raise ValueError("transient.rs_ohm must be positive and samples_per_segment >= 1")
        if not 0 < t["threshold"] < 1:
            raise ValueError("transient.threshold must lie in (0, 1)")
        policy = TuningPolicy(
            p["target_gm_s"], p["step_duration_s"], p["max_ep_time_s"], p["ep_potential"],
            sweep, sw["vd"], p["gm_noise"],
        )
        array = ArraySpec(a["n_devices"], a["mobility_spread"], a["capacitance_spread"], raw["seed"])
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"invalid configuration: {exc}") from exc
    return ToolkitConfig(
        raw=raw, device=device, sweep=sweep, vd=float(sw["vd"]), growth=growth,
        morphology=morph, circuit_rs=float(c["rs_ohm"]), circuit_rp=float(c["rp_ohm"]),
        grid=grid, pulse=pulse,
        transient_rs=float(t["rs_ohm"]), samples_per_segment=int(t["samples_per_segment"]),
        threshold=float(t["threshold"]), transient_fraction=float(t["transient_fraction"]),
        policy=policy, array=array, seed=int(raw["seed"]),
    )


def load_config(path: Path | None = None, overrides: dict | None = None) -> ToolkitConfig:
    raw = default_raw()
    if path is not None:
        try:
            user = yaml.safe_load(Path(path).read_text()) or {}
        except yaml.YAMLError as exc:
            raise ConfigError(f"cannot parse {path}: {exc}") from exc
        if not isinstance(user, dict):
            raise ConfigError(f"{path}: top level must be a mapping")
        raw = _merge(raw, user)
    if overrides:
        raw = _merge(raw, overrides)
    return build(raw)
