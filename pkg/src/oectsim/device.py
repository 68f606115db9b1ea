"""Steady-state OECT model.

Depletion-mode p-type device (PEDOT:PSS): positive gate voltage de-dopes the
channel, the drain is biased at ``vd <= 0`` and transconductance is reported
as ``|dI/dVg|``. The channel is a stack of material layers conducting in
parallel, so the transport prefactor is ``sum(d_i * mu_i * C*_i)``.

Units follow device-physics habit rather than SI: lengths of the footprint in
um, layer thickness in nm, mobility in cm^2/(V s), volumetric capacitance in
F/cm^3. All public results are SI (A, S, F).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

NM_TO_CM = 1e-7
UM_TO_CM = 1e-4


class InvalidSweepError(ValueError):
    """Gate sweep is empty or not monotone."""


@dataclass(frozen=True)
class DeviceGeometry:
    width: float  # um
    length: float  # um
    area_factor: float = 1.0

    def __post_init__(self) -> None:
        if not (self.width > 0 and self.length > 0):
            raise ValueError("width and length must be positive")
        if not self.area_factor >= 1.0:
            raise ValueError("area_factor must be >= 1")


@dataclass(frozen=True)
class MaterialLayer:
    """One deposited film.

    ``ep_potential`` is None for the spin-coated film and holds the
    electropolymerization potential (V) for deposited ones.
    """

    thickness: float  # nm
    mobility: float  # cm^2 V^-1 s^-1
    vol_capacitance: float  # F cm^-3
    ep_potential: float | None = None

    def __post_init__(self) -> None:
        if not self.thickness > 0:
            raise ValueError(f"layer thickness must be positive, got {self.thickness!r}")
        if not self.mobility > 0:
            raise ValueError(f"layer mobility must be positive, got {self.mobility!r}")
        if not self.vol_capacitance > 0:
            raise ValueError("layer volumetric capacitance must be positive")

    @property
    def spin_coated(self) -> bool:
        return self.ep_potential is None


@dataclass(frozen=True)
class DeviceState:
    geometry: DeviceGeometry
    layers: tuple[MaterialLayer, ...]
    vth: float  # V

    def __post_init__(self) -> None:
        object.__setattr__(self, "layers", tuple(self.layers))
        if not self.layers:
            raise ValueError("device needs at least one layer")
        if not self.layers[0].spin_coated:
            raise ValueError("first layer must be the spin-coated film")

    @property
    def ep_thickness(self) -> float:
        """Cumulative electropolymerized thickness (nm)."""
        return sum(layer.thickness for layer in self.layers if not layer.spin_coated)

    def with_layers(self, layers: Sequence[MaterialLayer]) -> DeviceState:
        return DeviceState(self.geometry, tuple(layers), self.vth)


def pristine_device(
    width: float,
    length: float,
    thickness: float,
    mobility: float,
    vol_capacitance: float,
    vth: float,
    area_factor: float = 1.0,
) -> DeviceState:
    layer = MaterialLayer(thickness, mobility, vol_capacitance)
    return DeviceState(DeviceGeometry(width, length, area_factor), (layer,), vth)


def total_capacitance(state: DeviceState) -> float:
    """Total capacitance (F): area_factor * W * L * sum(d_i * C*_i)."""
    g = state.geometry
    area = g.area_factor * (g.width * UM_TO_CM) * (g.length * UM_TO_CM)
    dc = sum(layer.thickness * NM_TO_CM * layer.vol_capacitance for layer in state.layers)
    return area * dc


def _prefactor(state: DeviceState) -> float:
    # (W/L) * sum(d mu C*), in A/V^2
    g = state.geometry
    s = sum(
        layer.thickness * NM_TO_CM * layer.mobility * layer.vol_capacitance
        for layer in state.layers
    )
    return g.width / g.length * s


def _check_vd(vd: float) -> None:
    if vd > 0:
        raise ValueError(f"vd must be <= 0 for depletion operation, got {vd!r}")


def _ret(x: np.ndarray, like):
    return float(x) if np.ndim(like) == 0 else x


def drain_current(state: DeviceState, vg, vd: float):
    """Drain current (A), negative for ``vd < 0``.

    Triode (``|vd| < vth - vg``): ``k * (vov + vd/2) * vd``; saturation:
    ``-k/2 * vov**2``; ``vg >= vth`` gives 0 (channel fully depleted).
    Accepts scalar or array ``vg``.
    """
    _check_vd(vd)
    k = _prefactor(state)
    vov = np.maximum(state.vth - np.asarray(vg, dtype=float), 0.0)
    triode = -vd < vov
    i = np.where(triode, k * (vov + 0.5 * vd) * vd, -0.5 * k * vov**2)
    return _ret(i, vg)


def transconductance(state: DeviceState, vg, vd: float):
    """Analytic ``|dI/dVg|`` (S)."""
    _check_vd(vd)
    k = _prefactor(state)
    vov = np.maximum(state.vth - np.asarray(vg, dtype=float), 0.0)
    triode = -vd < vov
    gm = np.where(triode, -k * vd, k * vov)
    return _ret(gm, vg)


def _sweep_array(vg_sweep) -> np.ndarray:
    vg = np.asarray(vg_sweep, dtype=float).ravel()
    if vg.size == 0:
        raise InvalidSweepError("gate sweep is empty")
    if not np.all(np.isfinite(vg)):
        raise InvalidSweepError("gate sweep contains non-finite values")
    if vg.size > 1:
        d = np.diff(vg)
        if not (np.all(d > 0) or np.all(d < 0)):
            raise InvalidSweepError("gate sweep must be strictly monotone")
    return np.sort(vg)


def peak_transconductance(state: DeviceState, vg_sweep, vd: float) -> tuple[float, float]:
    """Maximum Gm over the sweep and the gate voltage where it occurs.

    Ties resolve to the lowest gate voltage.
    """
    vg = _sweep_array(vg_sweep)
    gm = transconductance(state, vg, vd)
    i = int(np.argmax(gm))
    return float(gm[i]), float(vg[i])


def vg_sweep(start: float, stop: float, points: int) -> np.ndarray:
    if points < 1:
        raise InvalidSweepError("sweep needs at least one point")
    if points > 1 and start == stop:
        raise InvalidSweepError("sweep bounds coincide")
    return np.linspace(start, stop, points)
