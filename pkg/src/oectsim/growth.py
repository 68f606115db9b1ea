"""Potentiostatic electropolymerization (EP) growth model.

Each EP step deposits one new layer on top of the stack. Thickness follows a
constant, potential-dependent deposition rate with multiplicative Gaussian
jitter; the deposit's mobility and volumetric capacitance are the nominal
spin-coated values scaled by potential-dependent factors. Beyond a cumulative
EP thickness threshold the mobility of all electropolymerized material
decays exponentially (long-term depression).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .device import DeviceState, MaterialLayer, peak_transconductance, total_capacitance

# stream purposes, part of the spawn key
INIT = 0
GROWTH = 1
MEASURE = 2


class CalibrationRangeError(ValueError):
    """Potential lies outside the calibrated anchors."""


def _interp(x: float, xp: Sequence[float], fp: Sequence[float], what: str) -> float:
    lo, hi = xp[0], xp[-1]
    if not (lo <= x <= hi):
        raise CalibrationRangeError(
            f"{what}: potential {x!r} V outside calibrated range [{lo}, {hi}] V"
        )
    return float(np.interp(x, xp, fp))


def _check_anchors(xp: Sequence[float], *tables: Sequence[float]) -> None:
    if len(xp) < 1:
        raise ValueError("need at least one calibration anchor")
    if any(b <= a for a, b in zip(xp, xp[1:])):
        raise ValueError("calibration potentials must be strictly increasing")
    for t in tables:
        if len(t) != len(xp):
            raise ValueError("calibration tables must match the potential anchors")


@dataclass(frozen=True)
class EpCondition:
    potential: float  # V
    duration: float  # s; 0 is an identity step

    def __post_init__(self) -> None:
        if not self.duration >= 0:
            raise ValueError(f"EP duration must be >= 0, got {self.duration!r}")


@dataclass(frozen=True)
class GrowthModel:
    potentials: tuple[float, ...]
    rates: tuple[float, ...]  # nm/s
    mobility_factors: tuple[float, ...]
    cap_factors: tuple[float, ...]
    reference_mobility: float
    reference_vol_capacitance: float
    decay_threshold: float = 300.0  # nm
    decay_scale: float = 100.0  # nm
    noise_sigma: float = 0.0
    decay_enabled: bool = True

    def __post_init__(self) -> None:
        for name in ("potentials", "rates", "mobility_factors", "cap_factors"):
            object.__setattr__(self, name, tuple(float(v) for v in getattr(self, name)))
        _check_anchors(self.potentials, self.rates, self.mobility_factors, self.cap_factors)
        if any(r <= 0 for r in self.rates):
            raise ValueError("deposition rates must be positive")
        if any(k <= 0 for k in self.mobility_factors + self.cap_factors):
            raise ValueError("mobility and capacitance factors must be positive")
        if not (self.reference_mobility > 0 and self.reference_vol_capacitance > 0):
            raise ValueError("reference material properties must be positive")
        if not (self.decay_threshold >= 0 and self.decay_scale > 0):
            raise ValueError("decay threshold must be >= 0 and scale > 0")
        if not self.noise_sigma >= 0:
            raise ValueError("noise_sigma must be >= 0")


@dataclass(frozen=True)
class MorphologyRecord:
    grain_size: float | None  # nm; None for the fibrous spin-coated film
    roughness: float  # nm


@dataclass(frozen=True)
class MorphologyTable:
    potentials: tuple[float, ...]
    grain: tuple[float, ...]
    roughness: tuple[float, ...]
    spin_coated_roughness: float

    def __post_init__(self) -> None:
        _check_anchors(self.potentials, self.grain, self.roughness)
        if any(v <= 0 for v in self.grain + self.roughness) or self.spin_coated_roughness <= 0:
            raise ValueError("morphology values must be positive")


def deposition_rate(model: GrowthModel, potential: float) -> float:
    """Deposition rate (nm/s), linear between anchors, no extrapolation."""
    return _interp(potential, model.potentials, model.rates, "deposition rate")


def mobility_factor(model: GrowthModel, potential: float) -> float:
    return _interp(potential, model.potentials, model.mobility_factors, "mobility factor")


def cap_factor(model: GrowthModel, potential: float) -> float:
    return _interp(potential, model.potentials, model.cap_factors, "capacitance factor")


def mobility_decay(model: GrowthModel, ep_thickness: float) -> float:
    if not model.decay_enabled or ep_thickness <= model.decay_threshold:
        return 1.0
    return math.exp(-(ep_thickness - model.decay_threshold) / model.decay_scale)


def morphology(potential: float | None, table: MorphologyTable) -> MorphologyRecord:
    """Grain size and roughness for a deposit; ``None`` queries the spin-coated film."""
    if potential is None:
        return MorphologyRecord(None, table.spin_coated_roughness)
    grain = _interp(potential, table.potentials, table.grain, "morphology")
    rough = _interp(potential, table.potentials, table.roughness, "morphology")
    return MorphologyRecord(grain, rough)


class RandomStream:
    """Generators derived from ``(seed, device, purpose, step)``.

    Each draw point gets its own ``SeedSequence`` spawn key, so results do not
    depend on the order in which devices or steps are evaluated.
    """

    def __init__(self, seed: int, device: int = 0):
        self.seed = int(seed)
        self.device = int(device)

    def generator(self, purpose: int, step: int = 0) -> np.random.Generator:
        ss = np.random.SeedSequence(self.seed, spawn_key=(self.device, purpose, step))
        return np.random.default_rng(ss)

    def step(self, k: int) -> np.random.Generator:
        return self.generator(GROWTH, k)

    def __repr__(self) -> str:
        return f"RandomStream(seed={self.seed}, device={self.device})"


def apply_ep_step(
    state: DeviceState,
    cond: EpCondition,
    model: GrowthModel,
    rng: np.random.Generator | None = None,
) -> DeviceState:
    """Deposit one EP layer and return the new device state.

    A zero-duration condition returns ``state`` itself. ``rng`` is required
    when the model has thickness noise.
    """
    rate = deposition_rate(model, cond.potential)
    kappa = mobility_factor(model, cond.potential)
    cf = cap_factor(model, cond.potential)
    if cond.duration == 0:
        return state

    jitter = 0.0
    if rng is not None:
        jitter = model.noise_sigma * rng.standard_normal()
    elif model.noise_sigma > 0:
        raise ValueError("growth model has thickness noise; pass a random generator")
    scale = 1.0 + jitter
    if scale <= 0:
        raise ValueError("thickness jitter produced a non-positive layer")
    thickness = rate * cond.duration * scale

    x_old = state.ep_thickness
    x_new = x_old + thickness
    d_new = mobility_decay(model, x_new)
    ratio = d_new / mobility_decay(model, x_old)

    layers = []
    for layer in state.layers:
        if layer.spin_coated or ratio == 1.0:
            layers.append(layer)
        else:
            layers.append(
                MaterialLayer(
                    layer.thickness, layer.mobility * ratio, layer.vol_capacitance, layer.ep_potential
                )
            )
    layers.append(
        MaterialLayer(
            thickness,
            kappa * model.reference_mobility * d_new,
            cf * model.reference_vol_capacitance,
            float(cond.potential),
        )
    )
    return state.with_layers(layers)


def grow(
    state: DeviceState,
    schedule: Sequence[EpCondition],
    model: GrowthModel,
    stream: RandomStream | None = None,
) -> list[DeviceState]:
    """Apply a schedule step by step; returns the states after each step."""
    states = []
    for k, cond in enumerate(schedule):
        rng = stream.step(k) if stream is not None else None
        state = apply_ep_step(state, cond, model, rng)
        states.append(state)
    return states


def gm_capacitance_trajectory(
    state0: DeviceState,
    cond: EpCondition,
    n_steps: int,
    vd: float,
    sweep,
    model: GrowthModel,
    stream: RandomStream | None = None,
) -> list[tuple[float, float]]:
    """Relative changes (dGm/Gm0, dC/C0) after each of ``n_steps`` identical steps."""
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    gm0, _ = peak_transconductance(state0, sweep, vd)
    c0 = total_capacitance(state0)
    out = []
    for state in grow(state0, [cond] * n_steps, model, stream):
        gm, _ = peak_transconductance(state, sweep, vd)
        out.append(((gm - gm0) / gm0, (total_capacitance(state) - c0) / c0))
    return out
