"""Closed-loop transconductance tuning by repeated EP steps.

The controller only potentiates: it measures peak Gm, and while the device is
below target and the EP budget is not spent it applies one more EP step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np

from .device import DeviceState, MaterialLayer, peak_transconductance, total_capacitance
from .io import rounded
from .growth import INIT, MEASURE, EpCondition, GrowthModel, RandomStream, apply_ep_step


class Status(str, Enum):
    REACHED = "reached"
    BUDGET = "budget"


@dataclass(frozen=True)
class TuningPolicy:
    target_gm: float  # S
    step_duration: float  # s
    max_ep_time: float  # s
    ep_potential: float  # V
    sweep: tuple[float, ...]
    vd: float
    gm_noise: float = 0.0  # relative std of the Gm measurement

    def __post_init__(self) -> None:
        object.__setattr__(self, "sweep", tuple(float(v) for v in self.sweep))
        if not self.target_gm > 0:
            raise ValueError("target_gm must be positive")
        if not self.step_duration > 0:
            raise ValueError("step_duration must be positive")
        if not self.max_ep_time >= self.step_duration:
            raise ValueError("max_ep_time must be >= step_duration")
        if not self.gm_noise >= 0:
            raise ValueError("gm_noise must be >= 0")


@dataclass(frozen=True)
class ArraySpec:
    n_devices: int
    mobility_spread: float
    capacitance_spread: float
    seed: int

    def __post_init__(self) -> None:
        if self.n_devices < 1:
            raise ValueError("n_devices must be >= 1")
        if self.mobility_spread < 0 or self.capacitance_spread < 0:
            raise ValueError("spreads must be >= 0")


@dataclass(frozen=True)
class TracePoint:
    ep_time: float
    gm: float
    capacitance: float


@dataclass
class DeviceTuning:
    states: list[DeviceState]  # one per measurement, aligned with ``trace``
    status: Status
    trace: list[TracePoint]

    @property
    def state(self) -> DeviceState:
        return self.states[-1]

    @property
    def initial_gm(self) -> float:
        return self.trace[0].gm

    @property
    def final_gm(self) -> float:
        return self.trace[-1].gm

    @property
    def initial_capacitance(self) -> float:
        return self.trace[0].capacitance

    @property
    def final_capacitance(self) -> float:
        return self.trace[-1].capacitance

    @property
    def ep_time(self) -> float:
        return self.trace[-1].ep_time

    @property
    def n_steps(self) -> int:
        return len(self.trace) - 1


def _measure(state: DeviceState, policy: TuningPolicy, stream: RandomStream | None, k: int) -> float:
    gm, _ = peak_transconductance(state, policy.sweep, policy.vd)
    if policy.gm_noise > 0:
        if stream is None:
            raise ValueError("gm_noise needs a random stream")
        gm *= 1.0 + policy.gm_noise * stream.generator(MEASURE, k).standard_normal()
    return gm


def tune_device(
    state: DeviceState,
    policy: TuningPolicy,
    model: GrowthModel,
    stream: RandomStream | None = None,
) -> DeviceTuning:
    """Run the measure/step loop until the target or the EP budget is reached.

    The last step is shortened to the remaining budget, so the EP time used
    never exceeds ``max_ep_time``.
    """
    steps = 0
    elapsed = 0.0
    trace, states = [], []
    while True:
        gm = _measure(state, policy, stream, steps)
        trace.append(TracePoint(elapsed, gm, total_capacitance(state)))
        states.append(state)
        if gm >= policy.target_gm:
            return DeviceTuning(states, Status.REACHED, trace)
        if elapsed >= policy.max_ep_time:
            return DeviceTuning(states, Status.BUDGET, trace)
        duration = min(policy.step_duration, policy.max_ep_time - elapsed)
        rng = stream.step(steps) if stream is not None else None
        state = apply_ep_step(state, EpCondition(policy.ep_potential, duration), model, rng)
        steps += 1
        elapsed = min(steps * policy.step_duration, policy.max_ep_time)


def gaussian_fit(samples: Sequence[float]) -> tuple[float, float]:
    """Sample mean and unbiased standard deviation."""
    x = np.asarray(samples, dtype=float).ravel()
    if x.size < 2:
        raise ValueError("gaussian_fit needs at least 2 samples")
    return float(x.mean()), float(x.std(ddof=1))


def _lognormal_factor(z: float, spread: float) -> float:
    # mean 1, relative std ``spread``
    if spread == 0:
        return 1.0
    s = math.sqrt(math.log1p(spread**2))
    return math.exp(s * z - 0.5 * s * s)


def sample_device(base: DeviceState, spec: ArraySpec, index: int) -> DeviceState:
    """Pristine device ``index`` of the array.

    Mobility is log-normal around the nominal value; spin-coated thickness
    carries an independent log-normal capacitance jitter.
    """
    rng = RandomStream(spec.seed, index).generator(INIT)
    z_mu, z_c = rng.standard_normal(2)
    film = base.layers[0]
    layer = MaterialLayer(
        film.thickness * _lognormal_factor(z_c, spec.capacitance_spread),
        film.mobility * _lognormal_factor(z_mu, spec.mobility_spread),
        film.vol_capacitance,
    )
    return base.with_layers((layer,) + base.layers[1:])


@dataclass
class TuningReport:
    devices: list[DeviceTuning]
    target_gm: float
    seed: int

    def _values(self, attr: str) -> list[float]:
        return [getattr(d, attr) for d in self.devices]

    def summary(self) -> dict[str, tuple[float, float]]:
        """(mean, std) of Gm and C before and after tuning.

        Single-device arrays report std 0.
        """
        out = {}
        for key in ("initial_gm", "final_gm", "initial_capacitance", "final_capacitance"):
            vals = self._values(key)
            out[key] = gaussian_fit(vals) if len(vals) > 1 else (vals[0], 0.0)
        return out

    @property
    def n_reached(self) -> int:
        return sum(d.status is Status.REACHED for d in self.devices)

    def to_dict(self) -> dict:
        summary = self.summary()
        return {
            "target_gm_s": rounded(self.target_gm),
            "seed": self.seed,
            "n_devices": len(self.devices),
            "n_reached": self.n_reached,
            "summary": {
                k: {"mean": rounded(m), "std": rounded(s)} for k, (m, s) in summary.items()
            },
            "devices": [
                {
                    "index": i,
                    "status": d.status.value,
                    "initial_gm_s": rounded(d.initial_gm),
                    "final_gm_s": rounded(d.final_gm),
                    "initial_capacitance_f": rounded(d.initial_capacitance),
                    "final_capacitance_f": rounded(d.final_capacitance),
                    "ep_time_s": rounded(d.ep_time),
                    "trace": [
                        [rounded(p.ep_time), rounded(p.gm), rounded(p.capacitance)] for p in d.trace
                    ],
                }
                for i, d in enumerate(self.devices)
            ],
        }


def tune_array(
    spec: ArraySpec, policy: TuningPolicy, model: GrowthModel, base: DeviceState
) -> TuningReport:
    """Sample ``spec.n_devices`` pristine devices and tune each independently."""
    devices = [
        tune_device(sample_device(base, spec, i), policy, model, RandomStream(spec.seed, i))
        for i in range(spec.n_devices)
    ]
    return TuningReport(devices, policy.target_gm, spec.seed)
